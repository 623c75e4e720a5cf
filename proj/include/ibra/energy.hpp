#pragma once

#include <string>
#include <vector>

#include "ibra/graph.hpp"
#include "ibra/lowering.hpp"
#include "ibra/probe.hpp"

namespace ibra {

// Synaptic operation counts per (layer, timestep, plane). Plane -1 marks
// multiply-accumulate work on real-valued paths; accumulate counts are
// triggered only by 1-spikes, zeros cost nothing.
struct LedgerEntry {
    size_t layer = 0;
    int timestep = 0;
    int plane = -1;
    int64_t macs = 0;
    int64_t acs = 0;
};

struct OpLedger {
    std::vector<LedgerEntry> entries;  // ordered by (layer, timestep, plane)

    void add_macs(size_t layer, int t, int64_t count);
    void add_acs(size_t layer, int t, int plane, int64_t count);
    int64_t total_macs() const;
    int64_t total_acs() const;
    OpLedger operator+(const OpLedger& other) const;
};

// Per-operation energy prices in picojoules. Defaults are the common 45 nm
// figures; both are configurable.
struct EnergyModel {
    double e_mac_pj = 4.6;
    double e_ac_pj = 0.9;
};

// Counts synaptic ops over the corpus (one sample tensor per entry). Works on
// both training-mode and lowered graphs; counting is observer-only. Under
// spike encoding the input-consuming synaptic layer is priced once rather
// than per timestep.
OpLedger count_ops(const LayerGraph& g, const std::vector<Tensor>& corpus,
                   ExpansionOverride override_exp = ExpansionOverride::None);

double price_pj(const OpLedger& ledger, const EnergyModel& model);
double price_mj(const OpLedger& ledger, const EnergyModel& model);

// Energy-efficiency multiplier of `row` relative to the reference, rounded
// to two decimals the way the comparison table prints it.
double efficiency_ratio(double reference_mj, double row_mj);

struct EnergyRow {
    std::string mode;
    int64_t macs = 0;
    int64_t acs = 0;
    double energy_mj = 0.0;
    double ratio_vs_ann = 1.0;  // reference energy / row energy
};

struct ModeComparison {
    std::vector<EnergyRow> rows;  // ann, lif, ilif-unary, ibra-bitplane
    OpLedger ledgers[4];
};

// One row per execution regime on the same architecture and corpus.
ModeComparison compare_modes(const LayerGraph& trained, const LayerGraph& lowered,
                             const std::vector<Tensor>& corpus, const EnergyModel& model);

// Accounting scope note placed at the top of every energy report.
std::string energy_exclusions_header();

std::string render_energy_table(const ModeComparison& cmp, const EnergyModel& model);
std::string render_ledger_csv(const OpLedger& ledger, const LayerGraph& g,
                              const EnergyModel& model);

}  // namespace ibra
