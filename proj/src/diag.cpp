#include "ibra/diag.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "ibra/probe.hpp"

namespace ibra {

namespace {

struct CoverageProbe : ActivationProbe {
    std::map<size_t, std::vector<int64_t>> hist;  // layer -> histogram
    const LayerGraph* graph = nullptr;

    void on_neuron(size_t layer_idx, int, const Tensor& scaled) override {
        auto& h = hist[layer_idx];
        if (h.empty()) {
            int32_t d_n = graph->layers[layer_idx].cfg.scaled_max();
            h.assign(static_cast<size_t>(d_n) + 1, 0);
        }
        for (int32_t k : scaled.ints()) {
            if (k >= 0 && static_cast<size_t>(k) < h.size()) ++h[static_cast<size_t>(k)];
        }
    }
};

}  // namespace

RangeCoverageReport range_coverage(const LayerGraph& g, const Dataset& ds, int batch_size) {
    CoverageProbe probe;
    probe.graph = &g;
    int64_t n = ds.size();
    for (int64_t start = 0; start < n; start += batch_size) {
        int64_t end = std::min(n, start + static_cast<int64_t>(batch_size));
        std::vector<int64_t> idx;
        for (int64_t i = start; i < end; ++i) idx.push_back(i);
        eval_forward(g, ds.gather(idx), &probe);
    }

    RangeCoverageReport report;
    for (auto& [layer_idx, h] : probe.hist) {
        LayerCoverage c;
        c.layer_idx = layer_idx;
        c.d_n = g.layers[layer_idx].cfg.scaled_max();
        c.histogram = h;
        for (size_t v = 0; v < h.size(); ++v) {
            if (h[v] > 0) {
                ++c.distinct;
                c.achieved_max = static_cast<int32_t>(v);
            }
        }
        c.coverage = static_cast<double>(c.distinct) / static_cast<double>(c.d_n + 1);
        report.layers.push_back(std::move(c));
    }
    return report;
}

std::string render_coverage_summary_csv(const RangeCoverageReport& report) {
    std::string out = "layer,d_n,achieved_max,distinct,coverage\n";
    char line[128];
    for (const LayerCoverage& c : report.layers) {
        std::snprintf(line, sizeof(line), "%zu,%d,%d,%lld,%.6f\n", c.layer_idx, c.d_n,
                      c.achieved_max, static_cast<long long>(c.distinct), c.coverage);
        out += line;
    }
    return out;
}

std::string render_coverage_histogram_csv(const LayerCoverage& layer) {
    std::string out = "value,count\n";
    char line[64];
    for (size_t v = 0; v < layer.histogram.size(); ++v) {
        std::snprintf(line, sizeof(line), "%zu,%lld\n", v,
                      static_cast<long long>(layer.histogram[v]));
        out += line;
    }
    return out;
}

}  // namespace ibra
