#include "ibra/neuron.hpp"

#include <bit>
#include <cmath>

#include "ibra/error.hpp"
#include "ibra/ops.hpp"

namespace ibra {

const char* neuron_kind_name(NeuronKind k) {
    switch (k) {
        case NeuronKind::Lif: return "lif";
        case NeuronKind::ILif: return "ilif";
        case NeuronKind::IbraLif: return "ibra";
    }
    return "?";
}

NeuronKind neuron_kind_from_name(const std::string& name) {
    if (name == "lif") return NeuronKind::Lif;
    if (name == "ilif") return NeuronKind::ILif;
    if (name == "ibra") return NeuronKind::IbraLif;
    throw UsageError("unknown neuron kind '" + name + "' (expected lif, ilif or ibra)");
}

int32_t NeuronConfig::scaled_max() const {
    if (kind == NeuronKind::Lif) return 1;
    return static_cast<int32_t>(std::llround(d_max * static_cast<double>(scale_n)));
}

int NeuronConfig::plane_count() const {
    return static_cast<int>(std::bit_width(static_cast<uint32_t>(scaled_max())));
}

void NeuronConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw UsageError("neuron: alpha must be in (0, 1], got " + std::to_string(alpha));
    if (timesteps < 1) throw UsageError("neuron: timesteps must be >= 1");
    if (kind == NeuronKind::Lif) return;
    if (scale_n < 1) throw UsageError("neuron: scale factor N must be a positive integer");
    if (kind == NeuronKind::ILif) {
        if (scale_n != 1) throw UsageError("neuron: I-LIF requires N = 1");
        if (std::abs(d_max - std::round(d_max)) > 1e-9)
            throw UsageError("neuron: I-LIF requires an integer d_max, got " +
                             std::to_string(d_max));
    }
    if (scaled_max() < 1)
        throw UsageError("neuron: round(d_max * N) must be a positive integer, got " +
                         std::to_string(scaled_max()));
}

NeuronConfig lif_config(double alpha, double v_th, int timesteps) {
    NeuronConfig c;
    c.kind = NeuronKind::Lif;
    c.alpha = alpha;
    c.v_th = v_th;
    c.d_max = 1.0;
    c.scale_n = 1;
    c.timesteps = timesteps;
    return c;
}

NeuronConfig ilif_config(double d_max, double alpha, int timesteps) {
    NeuronConfig c;
    c.kind = NeuronKind::ILif;
    c.alpha = alpha;
    c.d_max = d_max;
    c.scale_n = 1;
    c.timesteps = timesteps;
    return c;
}

NeuronConfig ibra_config(double d_max, int64_t scale_n, double alpha, int timesteps) {
    NeuronConfig c;
    c.kind = NeuronKind::IbraLif;
    c.alpha = alpha;
    c.d_max = d_max;
    c.scale_n = scale_n;
    c.timesteps = timesteps;
    return c;
}

namespace {

// Half-away-from-zero, the rule shared by training and lowering.
double round_half_away(double x) { return std::round(x); }

}  // namespace

int32_t fire_scaled(double v_pre, const NeuronConfig& cfg) {
    if (cfg.kind == NeuronKind::Lif) return v_pre >= cfg.v_th ? 1 : 0;
    double n = static_cast<double>(cfg.scale_n);
    double k = round_half_away(v_pre * n);
    double dn = static_cast<double>(cfg.scaled_max());
    if (k < 0.0) k = 0.0;
    if (k > dn) k = dn;
    return static_cast<int32_t>(k);
}

double fire(double v_pre, const NeuronConfig& cfg) {
    int32_t k = fire_scaled(v_pre, cfg);
    if (cfg.kind == NeuronKind::Lif) return static_cast<double>(k);
    return static_cast<double>(k) / static_cast<double>(cfg.scale_n);
}

double surrogate_window(double v_pre, const NeuronConfig& cfg) {
    if (cfg.kind == NeuronKind::Lif)
        return std::abs(v_pre - cfg.v_th) <= 0.5 ? 1.0 : 0.0;
    return (v_pre >= 0.0 && v_pre <= cfg.d_max) ? 1.0 : 0.0;
}

namespace {

Tensor charge(const NeuronState& state, const Tensor& input, const NeuronConfig& cfg) {
    if (!state.v.same_shape(input))
        throw TensorError("neuron: state shape " + shape_str(state.v.shape()) +
                          " does not match input " + shape_str(input.shape()));
    Tensor v_pre = Tensor::zeros(input.shape(), Dtype::Real);
    auto o = v_pre.reals();
    auto v = state.v.reals();
    const Tensor in_real = input.to_real();
    auto x = in_real.reals();
    for (size_t i = 0; i < o.size(); ++i) o[i] = cfg.alpha * v[i] + x[i];
    return v_pre;
}

StepValue fire_and_reset(Tensor v_pre, const NeuronConfig& cfg) {
    StepValue out;
    out.output = Tensor::zeros(v_pre.shape(), Dtype::Real);
    out.scaled = Tensor::zeros(v_pre.shape(), Dtype::Int32);
    out.new_state = Tensor::zeros(v_pre.shape(), Dtype::Real);
    auto o = out.output.reals();
    auto k = out.scaled.ints();
    auto ns = out.new_state.reals();
    auto vp = v_pre.reals();
    for (size_t i = 0; i < vp.size(); ++i) {
        k[i] = fire_scaled(vp[i], cfg);
        o[i] = fire(vp[i], cfg);
        ns[i] = vp[i] - o[i];  // soft reset
    }
    out.v_pre = std::move(v_pre);
    return out;
}

}  // namespace

StepValue lif_step(const NeuronState& state, const Tensor& input, const NeuronConfig& cfg) {
    if (cfg.kind != NeuronKind::Lif) throw UsageError("lif_step: config kind is not lif");
    return fire_and_reset(charge(state, input, cfg), cfg);
}

StepValue ilif_step(const NeuronState& state, const Tensor& input, const NeuronConfig& cfg) {
    if (cfg.kind != NeuronKind::ILif) throw UsageError("ilif_step: config kind is not ilif");
    return fire_and_reset(charge(state, input, cfg), cfg);
}

StepValue ibra_step(const NeuronState& state, const Tensor& input, const NeuronConfig& cfg) {
    if (cfg.kind != NeuronKind::IbraLif) throw UsageError("ibra_step: config kind is not ibra");
    return fire_and_reset(charge(state, input, cfg), cfg);
}

StepValue neuron_step(const NeuronState& state, const Tensor& input, const NeuronConfig& cfg) {
    switch (cfg.kind) {
        case NeuronKind::Lif: return lif_step(state, input, cfg);
        case NeuronKind::ILif: return ilif_step(state, input, cfg);
        case NeuronKind::IbraLif: return ibra_step(state, input, cfg);
    }
    throw UsageError("neuron_step: bad kind");
}

TapeStep neuron_step_tape(Tape& tape, const NeuronConfig& cfg, const NeuronState& state,
                          NodeId input) {
    NodeId state_id = tape.leaf(state.v);
    NodeId v_pre_id = cfg.alpha == 1.0 ? ops::add(tape, state_id, input)
                                       : ops::add(tape, ops::scale(tape, state_id, cfg.alpha), input);
    NeuronConfig c = cfg;
    NodeId out_id = ops::custom_grad_apply(
        tape, v_pre_id, [c](double v) { return fire(v, c); },
        [c](double v) { return surrogate_window(v, c); });

    TapeStep step;
    step.output = out_id;
    step.v_pre = tape.value(v_pre_id);
    step.new_state = sub(step.v_pre, tape.value(out_id));
    step.scaled = Tensor::zeros(step.v_pre.shape(), Dtype::Int32);
    auto k = step.scaled.ints();
    auto vp = step.v_pre.reals();
    for (size_t i = 0; i < vp.size(); ++i) k[i] = fire_scaled(vp[i], c);
    return step;
}

std::vector<Tensor> encode_direct(const Tensor& image, int timesteps) {
    if (timesteps < 1) throw UsageError("encode_direct: timesteps must be >= 1");
    return std::vector<Tensor>(static_cast<size_t>(timesteps), image);
}

std::vector<Tensor> encode_spike_first_layer(const Tensor& image, const NeuronConfig& cfg) {
    if (cfg.timesteps < 1) throw UsageError("encode_spike_first_layer: timesteps must be >= 1");
    NeuronState state = NeuronState::zeros(image.shape());
    std::vector<Tensor> spikes;
    spikes.reserve(static_cast<size_t>(cfg.timesteps));
    for (int t = 0; t < cfg.timesteps; ++t) {
        StepValue s = neuron_step(state, image, cfg);
        state.v = s.new_state;
        spikes.push_back(std::move(s.output));
    }
    return spikes;
}

}  // namespace ibra
