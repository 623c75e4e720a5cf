#pragma once

#include <string>
#include <vector>

#include "ibra/graph.hpp"
#include "ibra/probe.hpp"
#include "ibra/tensor.hpp"

namespace ibra {

// --- Bit-plane / unary conversion --------------------------------------------
//
// Planes are indexed b = 0..B-1 with weight 2^b (LSB first), so that
// reconstruct(to_bitplanes(v)) == v for every integer v in [0, D_N].

int plane_count_for(int32_t d_n);

// activation holds values k/N (real) or k (integer); the scaled values must
// be integral within 1e-6 and inside [0, d_n].
Tensor to_bitplanes(const Tensor& activation, int64_t scale_n, int32_t d_n);
// planes: bit tensor [B, ...]; returns the integer tensor [...].
Tensor reconstruct_bitplanes(const Tensor& planes);

// Integer values in [0, d] become d planes: v ones followed by d - v zeros.
std::vector<Tensor> to_unary(const Tensor& activation, int32_t d);

// --- Graph lowering -----------------------------------------------------------

// Folds batchnorm into the preceding conv/linear, divides every weight that
// consumes an aligned neuron's output by that neuron's N, and marks each
// neuron layer with its plane schedule. Lif layers pass through unchanged.
LayerGraph lower_graph(const LayerGraph& trained);

// --- Lowered execution --------------------------------------------------------

enum class ExpansionOverride { None, ForceUnary };

struct LoweredResult {
    Tensor mean_logits;
    std::vector<Tensor> per_timestep;
};

LoweredResult lowered_forward(const LayerGraph& lowered, const Tensor& batch_input,
                              ActivationProbe* probe = nullptr, SynapticCounter* counter = nullptr,
                              ExpansionOverride override_exp = ExpansionOverride::None);

// --- Structural audit ---------------------------------------------------------

enum class PlanOpKind { MultiplyAccumulate, AccumulateSpikes, ShiftCombine, AddBias, NeuronFire, OutputScale, Reshape };
enum class Provenance { NetworkInput, ActivationPlanes, Accumulator };

struct PlanOp {
    PlanOpKind kind;
    Provenance operand;
    size_t layer_idx;
    int plane;  // -1 when not plane-specific
};

// The per-timestep op sequence the lowered executor follows. Derived from the
// same provenance walk the executor branches on.
std::vector<PlanOp> execution_plan(const LayerGraph& lowered);

struct AuditReport {
    bool pass = false;
    int multiplies_on_activations = 0;
    std::vector<std::string> lines;  // one per synaptic layer
};

// Passes iff no multiply consumes an activation tensor: plane scaling is a
// shift applied to accumulated partial sums and /N is pre-folded into weights.
AuditReport audit_accumulate_only(const LayerGraph& lowered);

// --- Train/infer equivalence --------------------------------------------------

// Throws GraphError unless the trained graph minus its batchnorm layers
// matches the lowered layer sequence.
void check_lowering_architecture(const LayerGraph& trained, const LayerGraph& lowered);

struct EquivalenceReport {
    double max_abs_diff = 0.0;
    double max_rel_diff = 0.0;
    bool pass = false;
    double tol = 0.0;
    int64_t samples = 0;
    std::string first_divergence;  // empty when passing
};

// Runs both paths over the corpus (one sample per tensor); relative
// difference uses max(|a|,|b|,1e-6) as denominator.
EquivalenceReport verify_equivalence(const LayerGraph& trained, const LayerGraph& lowered,
                                     const std::vector<Tensor>& corpus, double tol);

// --- ANN-to-SNN conversion ----------------------------------------------------

// Replaces clip activations with aligned neurons of matching ceiling (T=1).
// Unbounded relu activations need a calibration batch; their ceiling is the
// 99.9th percentile of observed outputs.
LayerGraph convert_ann(const LayerGraph& ann, const NeuronConfig& proto,
                       const Tensor* calibration_batch = nullptr);

}  // namespace ibra
