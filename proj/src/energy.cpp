#include "ibra/energy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ibra/error.hpp"
#include "ibra/lowering.hpp"

namespace ibra {

namespace {

LedgerEntry& entry_for(OpLedger& ledger, size_t layer, int t, int plane) {
    for (LedgerEntry& e : ledger.entries)
        if (e.layer == layer && e.timestep == t && e.plane == plane) return e;
    LedgerEntry e;
    e.layer = layer;
    e.timestep = t;
    e.plane = plane;
    // keep entries ordered by (layer, timestep, plane)
    auto pos = std::upper_bound(ledger.entries.begin(), ledger.entries.end(), e,
                                [](const LedgerEntry& a, const LedgerEntry& b) {
                                    if (a.layer != b.layer) return a.layer < b.layer;
                                    if (a.timestep != b.timestep) return a.timestep < b.timestep;
                                    return a.plane < b.plane;
                                });
    return *ledger.entries.insert(pos, e);
}

}  // namespace

void OpLedger::add_macs(size_t layer, int t, int64_t count) {
    if (count < 0) throw TensorError("ledger: negative mac count");
    entry_for(*this, layer, t, -1).macs += count;
}

void OpLedger::add_acs(size_t layer, int t, int plane, int64_t count) {
    if (count < 0) throw TensorError("ledger: negative ac count");
    entry_for(*this, layer, t, plane).acs += count;
}

int64_t OpLedger::total_macs() const {
    int64_t n = 0;
    for (const LedgerEntry& e : entries) n += e.macs;
    return n;
}

int64_t OpLedger::total_acs() const {
    int64_t n = 0;
    for (const LedgerEntry& e : entries) n += e.acs;
    return n;
}

OpLedger OpLedger::operator+(const OpLedger& other) const {
    OpLedger out = *this;
    for (const LedgerEntry& e : other.entries) {
        LedgerEntry& slot = entry_for(out, e.layer, e.timestep, e.plane);
        slot.macs += e.macs;
        slot.acs += e.acs;
    }
    return out;
}

namespace {

// Applies the first-layer pricing rule: under spike encoding, MAC events on
// the input-consuming synaptic layer are recorded for t=0 only (the constant
// input current is computed once and reused across timesteps).
class LedgerCounter : public SynapticCounter {
public:
    LedgerCounter(OpLedger& ledger, Encoding encoding, size_t input_synaptic_layer)
        : ledger_(ledger), encoding_(encoding), input_layer_(input_synaptic_layer) {}

    void add_macs(size_t layer, int t, int64_t count) override {
        if (encoding_ == Encoding::SpikeFirstLayer && layer == input_layer_ && t > 0) return;
        ledger_.add_macs(layer, t, count);
    }
    void add_acs(size_t layer, int t, int plane, int64_t count) override {
        ledger_.add_acs(layer, t, plane, count);
    }

private:
    OpLedger& ledger_;
    Encoding encoding_;
    size_t input_layer_;
};

size_t find_input_synaptic_layer(const LayerGraph& g) {
    for (size_t i = 0; i < g.layers.size(); ++i) {
        if (g.layers[i].kind == LayerKind::Neuron) return SIZE_MAX;  // spikes before any synapse
        if (g.layers[i].kind == LayerKind::Conv || g.layers[i].kind == LayerKind::Linear) return i;
    }
    return SIZE_MAX;
}

}  // namespace

OpLedger count_ops(const LayerGraph& g, const std::vector<Tensor>& corpus,
                   ExpansionOverride override_exp) {
    OpLedger ledger;
    LedgerCounter counter(ledger, g.encoding, find_input_synaptic_layer(g));
    for (const Tensor& sample : corpus) {
        Shape batched = sample.shape();
        batched.insert(batched.begin(), 1);
        Tensor input = sample.reshaped(batched);
        if (g.mode == GraphMode::Training)
            eval_forward(g, input, nullptr, &counter);
        else
            lowered_forward(g, input, nullptr, &counter, override_exp);
    }
    return ledger;
}

double price_pj(const OpLedger& ledger, const EnergyModel& model) {
    if (model.e_mac_pj <= 0.0 || model.e_ac_pj <= 0.0)
        throw UsageError("energy model: per-op energies must be positive");
    return model.e_mac_pj * static_cast<double>(ledger.total_macs()) +
           model.e_ac_pj * static_cast<double>(ledger.total_acs());
}

double price_mj(const OpLedger& ledger, const EnergyModel& model) {
    return price_pj(ledger, model) * 1e-9;
}

double efficiency_ratio(double reference_mj, double row_mj) {
    if (row_mj <= 0.0) return 0.0;
    return std::round(reference_mj / row_mj * 100.0) / 100.0;
}

ModeComparison compare_modes(const LayerGraph& trained, const LayerGraph& lowered,
                             const std::vector<Tensor>& corpus, const EnergyModel& model) {
    check_lowering_architecture(trained, lowered);
    ModeComparison cmp;

    // relu row: plain ANN forward of the same architecture, all MACs.
    LayerGraph ann = with_neurons_as_activation(trained, ActKind::Relu);
    cmp.ledgers[0] = count_ops(ann, corpus);

    // lif row: binary-spiking variant (V_th = 1), lowered so spikes drive ACs.
    LayerGraph lif = lower_graph(with_neurons_as_lif(trained, 1.0, 0.5));
    cmp.ledgers[1] = count_ops(lif, corpus);

    // ilif-unary row: the same integer streams expanded one spike per unit.
    cmp.ledgers[2] = count_ops(lowered, corpus, ExpansionOverride::ForceUnary);

    // ibra row: native bit-plane schedule.
    cmp.ledgers[3] = count_ops(lowered, corpus);

    const char* names[4] = {"relu", "lif", "ilif-unary", "ibra-bitplane"};
    double ann_mj = price_mj(cmp.ledgers[0], model);
    for (int i = 0; i < 4; ++i) {
        EnergyRow row;
        row.mode = names[i];
        row.macs = cmp.ledgers[i].total_macs();
        row.acs = cmp.ledgers[i].total_acs();
        row.energy_mj = price_mj(cmp.ledgers[i], model);
        row.ratio_vs_ann = efficiency_ratio(ann_mj, row.energy_mj);
        cmp.rows.push_back(row);
    }
    return cmp;
}

std::string energy_exclusions_header() {
    return "# synaptic-op accounting only: batchnorm, pooling, bias and neuron-update\n"
           "# arithmetic are excluded from energy totals\n";
}

namespace {

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

std::string render_energy_table(const ModeComparison& cmp, const EnergyModel& model) {
    std::string out = energy_exclusions_header();
    out += "# e_mac = " + fmt("%.3f", model.e_mac_pj) + " pJ, e_ac = " +
           fmt("%.3f", model.e_ac_pj) + " pJ\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-14s %14s %14s %14s %10s\n", "mode", "macs", "acs",
                  "energy_mj", "vs_ann");
    out += line;
    for (const EnergyRow& r : cmp.rows) {
        std::snprintf(line, sizeof(line), "%-14s %14lld %14lld %14.9f %9.2fx\n", r.mode.c_str(),
                      static_cast<long long>(r.macs), static_cast<long long>(r.acs), r.energy_mj,
                      r.ratio_vs_ann);
        out += line;
    }
    return out;
}

std::string render_ledger_csv(const OpLedger& ledger, const LayerGraph& g,
                              const EnergyModel& model) {
    std::string out = "layer,layer_type,timestep,plane,macs,acs,energy_pj\n";
    char line[256];
    for (const LedgerEntry& e : ledger.entries) {
        double pj = model.e_mac_pj * static_cast<double>(e.macs) +
                    model.e_ac_pj * static_cast<double>(e.acs);
        const char* type =
            e.layer < g.layers.size() ? layer_kind_name(g.layers[e.layer].kind) : "?";
        std::snprintf(line, sizeof(line), "%zu,%s,%d,%d,%lld,%lld,%.6f\n", e.layer, type,
                      e.timestep, e.plane, static_cast<long long>(e.macs),
                      static_cast<long long>(e.acs), pj);
        out += line;
    }
    return out;
}

}  // namespace ibra
