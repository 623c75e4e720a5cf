#pragma once

#include <string>
#include <vector>

#include "ibra/data.hpp"
#include "ibra/graph.hpp"

namespace ibra {

// Emitted-value coverage of one neuron layer: histogram over the scaled
// integer range [0, D_N], the achieved maximum and the fraction of distinct
// values actually used.
struct LayerCoverage {
    size_t layer_idx = 0;
    int32_t d_n = 0;
    int32_t achieved_max = 0;
    int64_t distinct = 0;
    double coverage = 0.0;
    std::vector<int64_t> histogram;  // size d_n + 1
};

struct RangeCoverageReport {
    std::vector<LayerCoverage> layers;
};

RangeCoverageReport range_coverage(const LayerGraph& g, const Dataset& ds, int batch_size = 64);

std::string render_coverage_summary_csv(const RangeCoverageReport& report);
std::string render_coverage_histogram_csv(const LayerCoverage& layer);

}  // namespace ibra
