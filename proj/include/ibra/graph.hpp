#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ibra/autograd.hpp"
#include "ibra/data.hpp"
#include "ibra/kernels.hpp"
#include "ibra/neuron.hpp"
#include "ibra/optim.hpp"
#include "ibra/probe.hpp"
#include "ibra/rng.hpp"
#include "ibra/tensor.hpp"

namespace ibra {

enum class LayerKind { Conv, Linear, BatchNorm, Neuron, Pool, Flatten, Activation };
enum class ActKind { Identity, Relu, Clip };
enum class GraphMode { Training, Lowered };
enum class Encoding { Direct, SpikeFirstLayer };

// How a lowered neuron layer presents its integer activations to the next
// synaptic layer: binary bit planes (weight 2^b), unary planes (weight 1), or
// the single 0/1 spike plane of a plain Lif neuron.
enum class Expansion { BitPlane, Unary, Spike };

const char* layer_kind_name(LayerKind k);
const char* act_kind_name(ActKind k);
const char* expansion_name(Expansion e);
Expansion expansion_from_name(const std::string& name);

struct LoweredNeuronMeta {
    Expansion expansion = Expansion::BitPlane;
    int64_t scale_n = 1;
    int planes = 1;  // B for bitplane, D_N for unary, 1 for spike
};

struct Layer {
    LayerKind kind = LayerKind::Linear;
    std::string name;
    bool head = false;

    // conv / linear
    Tensor weight, bias;
    int stride = 1, padding = 0;

    // batchnorm
    Tensor gamma, beta, running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    // neuron
    NeuronConfig cfg;
    LoweredNeuronMeta lowered;

    // pool
    int pool_k = 2;

    // activation
    ActKind act = ActKind::Identity;
    double clip_lo = 0.0, clip_hi = 1.0;
};

Layer make_conv(int64_t cin, int64_t cout, int k, int stride, int padding);
Layer make_linear(int64_t in, int64_t out, bool head = false);
Layer make_batchnorm(int64_t channels, double eps = 1e-5, double momentum = 0.1);
Layer make_neuron(const NeuronConfig& cfg);
Layer make_pool(int k);
Layer make_flatten();
Layer make_activation(ActKind act, double lo = 0.0, double hi = 1.0);

struct LayerGraph {
    GraphMode mode = GraphMode::Training;
    Encoding encoding = Encoding::Direct;
    int timesteps = 1;
    Shape input_shape;  // per-sample shape
    std::vector<Layer> layers;

    void validate() const;  // walks shapes; throws GraphError with layer index
    std::vector<ParamRef> params();
    std::vector<std::string> param_names() const;
    int num_classes() const;
    bool same_architecture(const LayerGraph& other) const;
};

// Per-sample output shape of one layer.
Shape layer_out_shape(const Layer& layer, const Shape& in, size_t layer_idx);

// Kaiming-style init for conv/linear, identity init for batchnorm.
void init_params(LayerGraph& g, Rng& rng);

// --- Training forward (records on the tape) ---------------------------------

struct ForwardT {
    std::vector<NodeId> per_timestep_logits;
    NodeId mean_logits = kNoNode;
    std::vector<NodeId> param_ids;            // aligned with params()
    std::vector<NeuronState> final_states;    // one per Neuron layer
};

// Runs all timesteps with persistent neuron states. `inputs_per_t` holds the
// encoded batch per timestep. When `update_bn_running` is set, running BN
// statistics are updated from the batch statistics.
ForwardT forward_t(Tape& tape, LayerGraph& g, const std::vector<Tensor>& inputs_per_t,
                   bool update_bn_running,
                   const std::vector<NeuronState>* initial_states = nullptr,
                   ActivationProbe* probe = nullptr);

// --- Eval forward (values only; BN uses running statistics) -----------------

struct EvalResult {
    Tensor mean_logits;
    std::vector<Tensor> per_timestep;
};

EvalResult eval_forward(const LayerGraph& g, const Tensor& batch_input,
                        ActivationProbe* probe = nullptr, SynapticCounter* counter = nullptr);

double evaluate_accuracy(const LayerGraph& g, const Dataset& ds, int batch_size = 64);

// --- Training loop -----------------------------------------------------------

struct TrainOptions {
    int batch_size = 32;
    bool shuffle = true;
};

struct EpochMetrics {
    double mean_loss = 0.0;
    double accuracy = 0.0;
    // max |dL/dW| seen this epoch, aligned with param_names()
    std::vector<double> grad_max;
};

EpochMetrics train_epoch(LayerGraph& g, const Dataset& ds, Optimizer& opt, Rng& rng,
                         const TrainOptions& options);

// --- Batchnorm folding -------------------------------------------------------

struct FoldedAffine {
    Tensor scale;  // gamma / sqrt(var + eps)
    Tensor shift;  // beta - gamma * mean / sqrt(var + eps)
};

FoldedAffine batchnorm_fold_params(const Tensor& gamma, const Tensor& beta, const Tensor& mean,
                                   const Tensor& var, double eps);
FoldedAffine batchnorm_fold_params(const Layer& bn);

// --- Architecture presets ----------------------------------------------------

// Names: mlp, cnn (spiking); ann-mlp, ann-cnn (clip or relu activations).
LayerGraph build_preset(const std::string& name, const Shape& input_shape, int num_classes,
                        const NeuronConfig& cfg, ActKind ann_act = ActKind::Clip);

// Replaces every Neuron layer with the given activation (Identity gives the
// plain ANN forward used as the energy baseline).
LayerGraph with_neurons_as_activation(const LayerGraph& g, ActKind act, double clip_hi = 0.0);
// Replaces every Neuron layer with a Lif neuron of the given threshold.
LayerGraph with_neurons_as_lif(const LayerGraph& g, double v_th, double alpha);

}  // namespace ibra
