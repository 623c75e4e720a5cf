#include "ibra/graph.hpp"

#include <algorithm>
#include <cmath>

#include "ibra/error.hpp"
#include "ibra/ops.hpp"

namespace ibra {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Linear: return "linear";
        case LayerKind::BatchNorm: return "batchnorm";
        case LayerKind::Neuron: return "neuron";
        case LayerKind::Pool: return "pool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Activation: return "activation";
    }
    return "?";
}

const char* act_kind_name(ActKind k) {
    switch (k) {
        case ActKind::Identity: return "identity";
        case ActKind::Relu: return "relu";
        case ActKind::Clip: return "clip";
    }
    return "?";
}

const char* expansion_name(Expansion e) {
    switch (e) {
        case Expansion::BitPlane: return "bitplane";
        case Expansion::Unary: return "unary";
        case Expansion::Spike: return "spike";
    }
    return "?";
}

Expansion expansion_from_name(const std::string& name) {
    if (name == "bitplane") return Expansion::BitPlane;
    if (name == "unary") return Expansion::Unary;
    if (name == "spike") return Expansion::Spike;
    throw FormatError("unknown expansion '" + name + "'");
}

Layer make_conv(int64_t cin, int64_t cout, int k, int stride, int padding) {
    Layer l;
    l.kind = LayerKind::Conv;
    l.weight = Tensor::zeros({cout, cin, k, k}, Dtype::Real);
    l.bias = Tensor::zeros({cout}, Dtype::Real);
    l.stride = stride;
    l.padding = padding;
    return l;
}

Layer make_linear(int64_t in, int64_t out, bool head) {
    Layer l;
    l.kind = LayerKind::Linear;
    l.weight = Tensor::zeros({out, in}, Dtype::Real);
    l.bias = Tensor::zeros({out}, Dtype::Real);
    l.head = head;
    return l;
}

Layer make_batchnorm(int64_t channels, double eps, double momentum) {
    if (eps <= 0.0) throw UsageError("batchnorm: eps must be > 0");
    Layer l;
    l.kind = LayerKind::BatchNorm;
    l.gamma = Tensor::full({channels}, 1.0);
    l.beta = Tensor::zeros({channels}, Dtype::Real);
    l.running_mean = Tensor::zeros({channels}, Dtype::Real);
    l.running_var = Tensor::full({channels}, 1.0);
    l.eps = eps;
    l.momentum = momentum;
    return l;
}

Layer make_neuron(const NeuronConfig& cfg) {
    cfg.validate();
    Layer l;
    l.kind = LayerKind::Neuron;
    l.cfg = cfg;
    return l;
}

Layer make_pool(int k) {
    Layer l;
    l.kind = LayerKind::Pool;
    l.pool_k = k;
    return l;
}

Layer make_flatten() {
    Layer l;
    l.kind = LayerKind::Flatten;
    return l;
}

Layer make_activation(ActKind act, double lo, double hi) {
    Layer l;
    l.kind = LayerKind::Activation;
    l.act = act;
    l.clip_lo = lo;
    l.clip_hi = hi;
    return l;
}

Shape layer_out_shape(const Layer& layer, const Shape& in, size_t layer_idx) {
    auto fail = [&](const std::string& why) {
        throw GraphError("layer " + std::to_string(layer_idx) + " (" +
                         layer_kind_name(layer.kind) + "): " + why);
    };
    switch (layer.kind) {
        case LayerKind::Conv: {
            if (in.size() != 3) fail("expects [C,H,W] input, got " + shape_str(in));
            try {
                return kernels::conv2d_out_shape(in, layer.weight.shape(), layer.stride,
                                                 layer.padding);
            } catch (const TensorError& e) {
                fail(e.what());
            }
            break;
        }
        case LayerKind::Linear: {
            if (in.size() != 1) fail("expects flat input, got " + shape_str(in));
            if (in[0] != layer.weight.dim(1))
                fail("input " + shape_str(in) + " does not match weight " +
                     shape_str(layer.weight.shape()));
            return {layer.weight.dim(0)};
        }
        case LayerKind::BatchNorm: {
            int64_t c = in.size() == 3 ? in[0] : (in.size() == 1 ? in[0] : -1);
            if (c < 0) fail("expects [C,H,W] or flat input, got " + shape_str(in));
            if (c != layer.gamma.numel())
                fail("channels " + std::to_string(c) + " do not match batchnorm width " +
                     std::to_string(layer.gamma.numel()));
            return in;
        }
        case LayerKind::Neuron:
        case LayerKind::Activation:
            return in;
        case LayerKind::Pool: {
            if (in.size() != 3) fail("expects [C,H,W] input, got " + shape_str(in));
            if (in[1] % layer.pool_k != 0 || in[2] % layer.pool_k != 0)
                fail("spatial dims " + shape_str(in) + " not divisible by " +
                     std::to_string(layer.pool_k));
            return {in[0], in[1] / layer.pool_k, in[2] / layer.pool_k};
        }
        case LayerKind::Flatten:
            return {numel_of(in)};
    }
    fail("unhandled layer kind");
    return {};
}

void LayerGraph::validate() const {
    Shape s = input_shape;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::Neuron) layers[i].cfg.validate();
        if (mode == GraphMode::Lowered && layers[i].kind == LayerKind::BatchNorm)
            throw GraphError("layer " + std::to_string(i) +
                             ": lowered graphs must not contain batchnorm");
        s = layer_out_shape(layers[i], s, i);
    }
}

std::vector<ParamRef> LayerGraph::params() {
    std::vector<ParamRef> ps;
    for (size_t i = 0; i < layers.size(); ++i) {
        Layer& l = layers[i];
        std::string base = "l" + std::to_string(i) + "." + layer_kind_name(l.kind);
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::Linear:
                ps.push_back({base + ".weight", &l.weight});
                ps.push_back({base + ".bias", &l.bias});
                break;
            case LayerKind::BatchNorm:
                ps.push_back({base + ".gamma", &l.gamma});
                ps.push_back({base + ".beta", &l.beta});
                break;
            default:
                break;
        }
    }
    return ps;
}

std::vector<std::string> LayerGraph::param_names() const {
    std::vector<std::string> names;
    for (size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        std::string base = "l" + std::to_string(i) + "." + layer_kind_name(l.kind);
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::Linear:
                names.push_back(base + ".weight");
                names.push_back(base + ".bias");
                break;
            case LayerKind::BatchNorm:
                names.push_back(base + ".gamma");
                names.push_back(base + ".beta");
                break;
            default:
                break;
        }
    }
    return names;
}

int LayerGraph::num_classes() const {
    for (size_t i = layers.size(); i-- > 0;) {
        if (layers[i].kind == LayerKind::Linear)
            return static_cast<int>(layers[i].weight.dim(0));
    }
    throw GraphError("graph has no linear layer to read class count from");
}

bool LayerGraph::same_architecture(const LayerGraph& other) const {
    if (layers.size() != other.layers.size() || input_shape != other.input_shape) return false;
    for (size_t i = 0; i < layers.size(); ++i) {
        const Layer& a = layers[i];
        const Layer& b = other.layers[i];
        // Lowering folds batchnorm away, so architectures are compared on the
        // synaptic skeleton: kind plus parameter shapes.
        if (a.kind != b.kind) return false;
        if (a.kind == LayerKind::Conv || a.kind == LayerKind::Linear) {
            if (a.weight.shape() != b.weight.shape()) return false;
        }
    }
    return true;
}

void init_params(LayerGraph& g, Rng& rng) {
    for (Layer& l : g.layers) {
        if (l.kind == LayerKind::Conv || l.kind == LayerKind::Linear) {
            int64_t fan_in = l.kind == LayerKind::Conv
                                 ? l.weight.dim(1) * l.weight.dim(2) * l.weight.dim(3)
                                 : l.weight.dim(1);
            double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (double& w : l.weight.reals()) w = rng.uniform(-bound, bound);
            for (double& b : l.bias.reals()) b = 0.0;
        }
    }
}

namespace {

struct HeadAccum {
    // mean of per-timestep logits, built as add-then-scale on the tape
    NodeId sum = kNoNode;
};

}  // namespace

ForwardT forward_t(Tape& tape, LayerGraph& g, const std::vector<Tensor>& inputs_per_t,
                   bool update_bn_running, const std::vector<NeuronState>* initial_states,
                   ActivationProbe* probe) {
    if (g.mode != GraphMode::Training)
        throw GraphError("forward_t requires a training-mode graph");
    if (static_cast<int>(inputs_per_t.size()) != g.timesteps)
        throw GraphError("forward_t: expected " + std::to_string(g.timesteps) +
                         " encoded inputs, got " + std::to_string(inputs_per_t.size()));
    g.validate();

    ForwardT out;
    auto params = g.params();
    for (auto& p : params) out.param_ids.push_back(tape.leaf(*p.value));

    // Map layer index -> first param id slot.
    std::vector<size_t> param_slot(g.layers.size(), SIZE_MAX);
    {
        size_t slot = 0;
        for (size_t i = 0; i < g.layers.size(); ++i) {
            LayerKind k = g.layers[i].kind;
            if (k == LayerKind::Conv || k == LayerKind::Linear || k == LayerKind::BatchNorm) {
                param_slot[i] = slot;
                slot += 2;
            }
        }
    }

    // Persistent neuron states across timesteps (no gradient across steps).
    size_t n_neurons = 0;
    for (const Layer& l : g.layers)
        if (l.kind == LayerKind::Neuron) ++n_neurons;
    std::vector<NeuronState> states(n_neurons);
    if (initial_states) {
        if (initial_states->size() != n_neurons)
            throw GraphError("forward_t: initial state count mismatch");
        states = *initial_states;
    }

    HeadAccum head;
    for (int t = 0; t < g.timesteps; ++t) {
        NodeId x = tape.leaf(inputs_per_t[static_cast<size_t>(t)]);
        size_t neuron_idx = 0;
        for (size_t i = 0; i < g.layers.size(); ++i) {
            Layer& l = g.layers[i];
            switch (l.kind) {
                case LayerKind::Conv: {
                    NodeId w = out.param_ids[param_slot[i]];
                    NodeId b = out.param_ids[param_slot[i] + 1];
                    x = ops::conv2d(tape, x, w, l.stride, l.padding);
                    x = ops::bias_channel(tape, x, b);
                    break;
                }
                case LayerKind::Linear: {
                    NodeId w = out.param_ids[param_slot[i]];
                    NodeId b = out.param_ids[param_slot[i] + 1];
                    x = ops::linear(tape, x, w, b);
                    break;
                }
                case LayerKind::BatchNorm: {
                    NodeId ga = out.param_ids[param_slot[i]];
                    NodeId be = out.param_ids[param_slot[i] + 1];
                    kernels::BnStats stats;
                    x = ops::batchnorm_train(tape, x, ga, be, l.eps, &stats);
                    if (update_bn_running) {
                        auto rm = l.running_mean.reals();
                        auto rv = l.running_var.reals();
                        auto bm = stats.mean.reals();
                        auto bv = stats.var.reals();
                        for (size_t c = 0; c < rm.size(); ++c) {
                            rm[c] = (1.0 - l.momentum) * rm[c] + l.momentum * bm[c];
                            rv[c] = (1.0 - l.momentum) * rv[c] + l.momentum * bv[c];
                        }
                    }
                    break;
                }
                case LayerKind::Neuron: {
                    NeuronState& st = states[neuron_idx];
                    if (st.v.numel() == 0) st = NeuronState::zeros(tape.value(x).shape());
                    TapeStep step = neuron_step_tape(tape, l.cfg, st, x);
                    st.v = step.new_state;
                    if (probe) probe->on_neuron(i, t, step.scaled);
                    x = step.output;
                    ++neuron_idx;
                    break;
                }
                case LayerKind::Pool:
                    x = ops::avg_pool2d(tape, x, l.pool_k);
                    break;
                case LayerKind::Flatten: {
                    const Shape& s = tape.value(x).shape();
                    int64_t bsz = s[0];
                    Shape inner(s.begin() + 1, s.end());
                    x = ops::reshape(tape, x, {bsz, numel_of(inner)});
                    break;
                }
                case LayerKind::Activation: {
                    if (l.act == ActKind::Relu)
                        x = ops::relu(tape, x);
                    else if (l.act == ActKind::Clip)
                        x = ops::clip(tape, x, l.clip_lo, l.clip_hi);
                    break;
                }
            }
        }
        out.per_timestep_logits.push_back(x);
        head.sum = head.sum == kNoNode ? x : ops::add(tape, head.sum, x);
    }
    out.mean_logits =
        g.timesteps == 1 ? head.sum : ops::scale(tape, head.sum, 1.0 / g.timesteps);
    out.final_states = std::move(states);
    return out;
}

EvalResult eval_forward(const LayerGraph& g, const Tensor& batch_input, ActivationProbe* probe,
                        SynapticCounter* counter) {
    if (g.mode != GraphMode::Training)
        throw GraphError("eval_forward requires a training-mode graph (use lowered_forward)");
    g.validate();

    size_t n_neurons = 0;
    for (const Layer& l : g.layers)
        if (l.kind == LayerKind::Neuron) ++n_neurons;
    std::vector<NeuronState> states(n_neurons);

    EvalResult out;
    Tensor mean;
    for (int t = 0; t < g.timesteps; ++t) {
        Tensor x = batch_input;
        size_t neuron_idx = 0;
        for (size_t i = 0; i < g.layers.size(); ++i) {
            const Layer& l = g.layers[i];
            switch (l.kind) {
                case LayerKind::Conv: {
                    Tensor y = kernels::conv2d(x, l.weight, l.stride, l.padding);
                    if (counter) {
                        int64_t fan_in =
                            l.weight.dim(1) * l.weight.dim(2) * l.weight.dim(3);
                        counter->add_macs(i, t, y.numel() * fan_in);
                    }
                    x = kernels::bias_channel(y, l.bias);
                    break;
                }
                case LayerKind::Linear: {
                    Tensor y = kernels::linear(x, l.weight, &l.bias);
                    if (counter)
                        counter->add_macs(i, t, y.numel() * l.weight.dim(1));
                    x = std::move(y);
                    break;
                }
                case LayerKind::BatchNorm: {
                    FoldedAffine fa = batchnorm_fold_params(l);
                    x = kernels::affine_channel(x, fa.scale, fa.shift);
                    break;
                }
                case LayerKind::Neuron: {
                    NeuronState& st = states[neuron_idx];
                    if (st.v.numel() == 0) st = NeuronState::zeros(x.shape());
                    StepValue step = neuron_step(st, x, l.cfg);
                    st.v = step.new_state;
                    if (probe) probe->on_neuron(i, t, step.scaled);
                    x = std::move(step.output);
                    ++neuron_idx;
                    break;
                }
                case LayerKind::Pool:
                    x = kernels::avg_pool2d(x, l.pool_k);
                    break;
                case LayerKind::Flatten: {
                    const Shape& s = x.shape();
                    int64_t bsz = s[0];
                    Shape inner(s.begin() + 1, s.end());
                    x = x.reshaped({bsz, numel_of(inner)});
                    break;
                }
                case LayerKind::Activation: {
                    if (l.act == ActKind::Relu)
                        x = kernels::pointwise(x, [](double v) { return v > 0.0 ? v : 0.0; });
                    else if (l.act == ActKind::Clip)
                        x = kernels::pointwise(x, [lo = l.clip_lo, hi = l.clip_hi](double v) {
                            return v < lo ? lo : (v > hi ? hi : v);
                        });
                    break;
                }
            }
        }
        if (t == 0)
            mean = x;
        else
            mean = add(mean, x);
        out.per_timestep.push_back(std::move(x));
    }
    out.mean_logits = g.timesteps == 1 ? mean : mul_scalar(mean, 1.0 / g.timesteps);
    return out;
}

double evaluate_accuracy(const LayerGraph& g, const Dataset& ds, int batch_size) {
    int64_t n = ds.size();
    int64_t correct = 0;
    for (int64_t start = 0; start < n; start += batch_size) {
        int64_t end = std::min(n, start + batch_size);
        std::vector<int64_t> idx;
        for (int64_t i = start; i < end; ++i) idx.push_back(i);
        Tensor batch = ds.gather(idx);
        EvalResult r = eval_forward(g, batch);
        auto logits = r.mean_logits.reals();
        int64_t k = r.mean_logits.dim(1);
        for (int64_t b = 0; b < end - start; ++b) {
            int64_t best = 0;
            for (int64_t j = 1; j < k; ++j)
                if (logits[static_cast<size_t>(b * k + j)] >
                    logits[static_cast<size_t>(b * k + best)])
                    best = j;
            if (static_cast<int>(best) == ds.labels[static_cast<size_t>(start + b)]) ++correct;
        }
    }
    return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
}

EpochMetrics train_epoch(LayerGraph& g, const Dataset& ds, Optimizer& opt, Rng& rng,
                         const TrainOptions& options) {
    if (g.mode != GraphMode::Training) throw GraphError("train_epoch requires training mode");
    int64_t n = ds.size();
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    if (options.shuffle) rng.shuffle(order);

    auto params = g.params();
    EpochMetrics metrics;
    metrics.grad_max.assign(params.size(), 0.0);
    double loss_sum = 0.0;
    int64_t correct = 0;

    for (int64_t start = 0; start < n; start += options.batch_size) {
        int64_t end = std::min(n, start + options.batch_size);
        std::vector<int64_t> idx(order.begin() + start, order.begin() + end);
        Tensor batch = ds.gather(idx);
        std::vector<int> labels;
        labels.reserve(idx.size());
        for (int64_t i : idx) labels.push_back(ds.labels[static_cast<size_t>(i)]);

        Tape tape;
        ForwardT fw = forward_t(tape, g, encode_direct(batch, g.timesteps), true);
        NodeId loss_id = ops::cross_entropy_mean(tape, fw.mean_logits, labels);

        double loss = tape.value(loss_id).reals()[0];
        if (!std::isfinite(loss)) {
            std::string report = "non-finite loss; max |grad| per parameter so far:";
            auto names = g.param_names();
            for (size_t p = 0; p < names.size(); ++p)
                report += "\n  " + names[p] + " = " + std::to_string(metrics.grad_max[p]);
            throw NumericError(report);
        }
        loss_sum += loss * static_cast<double>(end - start);

        const Tensor& logits = tape.value(fw.mean_logits);
        auto lg = logits.reals();
        int64_t k = logits.dim(1);
        for (int64_t b = 0; b < end - start; ++b) {
            int64_t best = 0;
            for (int64_t j = 1; j < k; ++j)
                if (lg[static_cast<size_t>(b * k + j)] > lg[static_cast<size_t>(b * k + best)])
                    best = j;
            if (static_cast<int>(best) == labels[static_cast<size_t>(b)]) ++correct;
        }

        GradMap grads = tape.backward(loss_id);
        std::vector<Tensor> grad_list(params.size());
        for (size_t p = 0; p < params.size(); ++p) {
            auto it = grads.find(fw.param_ids[p]);
            if (it == grads.end()) continue;
            metrics.grad_max[p] = std::max(metrics.grad_max[p], max_abs(it->second));
            grad_list[p] = std::move(it->second);
        }
        opt.step(params, grad_list);
    }

    metrics.mean_loss = n == 0 ? 0.0 : loss_sum / static_cast<double>(n);
    metrics.accuracy = n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
    return metrics;
}

FoldedAffine batchnorm_fold_params(const Tensor& gamma, const Tensor& beta, const Tensor& mean,
                                   const Tensor& var, double eps) {
    int64_t c = gamma.numel();
    if (beta.numel() != c || mean.numel() != c || var.numel() != c)
        throw TensorError("batchnorm_fold_params: channel count mismatch");
    FoldedAffine fa{Tensor::zeros({c}, Dtype::Real), Tensor::zeros({c}, Dtype::Real)};
    auto sc = fa.scale.reals();
    auto sh = fa.shift.reals();
    auto g = gamma.reals();
    auto b = beta.reals();
    auto m = mean.reals();
    auto v = var.reals();
    for (int64_t i = 0; i < c; ++i) {
        double denom = v[static_cast<size_t>(i)] + eps;
        if (denom <= 0.0)
            throw TensorError("batchnorm_fold_params: var + eps must be positive, got " +
                              std::to_string(denom));
        double invstd = 1.0 / std::sqrt(denom);
        sc[static_cast<size_t>(i)] = g[static_cast<size_t>(i)] * invstd;
        sh[static_cast<size_t>(i)] =
            b[static_cast<size_t>(i)] - g[static_cast<size_t>(i)] * m[static_cast<size_t>(i)] * invstd;
    }
    return fa;
}

FoldedAffine batchnorm_fold_params(const Layer& bn) {
    return batchnorm_fold_params(bn.gamma, bn.beta, bn.running_mean, bn.running_var, bn.eps);
}

LayerGraph build_preset(const std::string& name, const Shape& input_shape, int num_classes,
                        const NeuronConfig& cfg, ActKind ann_act) {
    LayerGraph g;
    g.input_shape = input_shape;
    g.timesteps = cfg.timesteps;
    g.encoding = Encoding::Direct;

    auto act_layer = [&]() {
        if (ann_act == ActKind::Clip) return make_activation(ActKind::Clip, 0.0, cfg.d_max);
        return make_activation(ann_act);
    };

    if (name == "mlp" || name == "ann-mlp") {
        int64_t in = numel_of(input_shape);
        bool snn = name == "mlp";
        g.layers.push_back(make_linear(in, 32));
        g.layers.push_back(snn ? make_neuron(cfg) : act_layer());
        g.layers.push_back(make_linear(32, 32));
        g.layers.push_back(snn ? make_neuron(cfg) : act_layer());
        g.layers.push_back(make_linear(32, num_classes, true));
    } else if (name == "cnn" || name == "ann-cnn") {
        if (input_shape.size() != 3)
            throw UsageError("cnn preset expects [C,H,W] input, got " + shape_str(input_shape));
        bool snn = name == "cnn";
        int64_t cin = input_shape[0];
        g.layers.push_back(make_conv(cin, 8, 3, 1, 1));
        g.layers.push_back(make_batchnorm(8));
        g.layers.push_back(make_pool(2));
        g.layers.push_back(snn ? make_neuron(cfg) : act_layer());
        g.layers.push_back(make_conv(8, 16, 3, 1, 1));
        g.layers.push_back(make_batchnorm(16));
        g.layers.push_back(make_pool(2));
        g.layers.push_back(snn ? make_neuron(cfg) : act_layer());
        g.layers.push_back(make_flatten());
        int64_t flat = 16 * (input_shape[1] / 4) * (input_shape[2] / 4);
        g.layers.push_back(make_linear(flat, num_classes, true));
    } else if (name == "mlp-spike") {
        // First neuron layer encodes the raw features into spikes.
        int64_t in = numel_of(input_shape);
        g.encoding = Encoding::SpikeFirstLayer;
        g.layers.push_back(make_neuron(cfg));
        g.layers.push_back(make_linear(in, 32));
        g.layers.push_back(make_neuron(cfg));
        g.layers.push_back(make_linear(32, num_classes, true));
    } else {
        throw UsageError("unknown architecture preset '" + name + "'");
    }
    g.validate();
    return g;
}

LayerGraph with_neurons_as_activation(const LayerGraph& g, ActKind act, double clip_hi) {
    LayerGraph out = g;
    for (Layer& l : out.layers) {
        if (l.kind != LayerKind::Neuron) continue;
        double hi = clip_hi > 0.0 ? clip_hi : l.cfg.d_max;
        l = make_activation(act, 0.0, hi);
    }
    return out;
}

LayerGraph with_neurons_as_lif(const LayerGraph& g, double v_th, double alpha) {
    LayerGraph out = g;
    for (Layer& l : out.layers) {
        if (l.kind != LayerKind::Neuron) continue;
        NeuronConfig c = lif_config(alpha, v_th, l.cfg.timesteps);
        l = make_neuron(c);
    }
    return out;
}

}  // namespace ibra
