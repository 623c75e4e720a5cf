#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ibra/autograd.hpp"
#include "ibra/tensor.hpp"

namespace ibra {

enum class NeuronKind { Lif, ILif, IbraLif };

const char* neuron_kind_name(NeuronKind k);
NeuronKind neuron_kind_from_name(const std::string& name);

// Parameter bundle for one neuron family member. d_max is the largest value
// the neuron may emit; scale_n aligns the firing grid with the input range:
// the neuron fires integers k = clip(round(v_pre * N), 0, D_N) and emits k/N.
struct NeuronConfig {
    NeuronKind kind = NeuronKind::IbraLif;
    double alpha = 1.0;    // membrane decay per timestep
    double v_th = 1.0;     // firing threshold (Lif only)
    double d_max = 1.0;    // maximum emitted value D
    int64_t scale_n = 1;   // range-alignment factor N
    int timesteps = 1;

    // D_N = round(D*N), the integer ceiling of the scaled neuron.
    int32_t scaled_max() const;
    // Number of bit planes needed for values in [0, D_N].
    int plane_count() const;
    void validate() const;
};

NeuronConfig lif_config(double alpha = 0.5, double v_th = 1.0, int timesteps = 1);
NeuronConfig ilif_config(double d_max, double alpha = 1.0, int timesteps = 1);
NeuronConfig ibra_config(double d_max, int64_t scale_n, double alpha = 1.0, int timesteps = 1);

// Post-reset membrane potential, shaped like the layer's activations and
// zero-initialized at t = 0.
struct NeuronState {
    Tensor v;
    static NeuronState zeros(const Shape& shape) { return {Tensor::zeros(shape, Dtype::Real)}; }
};

// Firing decision on the scale-aligned integer grid; shared verbatim between
// training and lowered inference so both phases round identically.
// Rounding is half-away-from-zero.
int32_t fire_scaled(double v_pre, const NeuronConfig& cfg);
double fire(double v_pre, const NeuronConfig& cfg);  // = fire_scaled / N (Lif: 0/1)
// Pseudo derivative of the firing nonlinearity: 1 inside [0, d_max], else 0
// (Lif: boxcar of width 1 around v_th).
double surrogate_window(double v_pre, const NeuronConfig& cfg);

struct StepValue {
    Tensor output;     // emitted activation (real k/N, or 0/1 spikes for Lif)
    Tensor scaled;     // int32 k = output * N
    Tensor new_state;  // v_pre - output, exactly
    Tensor v_pre;
};

StepValue lif_step(const NeuronState& state, const Tensor& input, const NeuronConfig& cfg);
StepValue ilif_step(const NeuronState& state, const Tensor& input, const NeuronConfig& cfg);
StepValue ibra_step(const NeuronState& state, const Tensor& input, const NeuronConfig& cfg);
StepValue neuron_step(const NeuronState& state, const Tensor& input, const NeuronConfig& cfg);

// Tape-integrated step for training. The membrane state enters the tape as a
// fresh leaf each timestep: gradients flow through the current step's firing
// window only, so a weight's gradient is the sum of independent per-timestep
// contributions.
struct TapeStep {
    NodeId output;
    Tensor new_state;
    Tensor v_pre;
    Tensor scaled;
};
TapeStep neuron_step_tape(Tape& tape, const NeuronConfig& cfg, const NeuronState& state,
                          NodeId input);

// Input encoders. Direct encoding repeats the image; spike encoding feeds the
// image as constant current into a first neuron layer and returns its
// activations.
std::vector<Tensor> encode_direct(const Tensor& image, int timesteps);
std::vector<Tensor> encode_spike_first_layer(const Tensor& image, const NeuronConfig& cfg);

}  // namespace ibra
