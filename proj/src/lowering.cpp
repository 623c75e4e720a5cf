#include "ibra/lowering.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "ibra/error.hpp"
#include "ibra/kernels.hpp"

namespace ibra {

int plane_count_for(int32_t d_n) {
    if (d_n < 1) throw LoweringError("plane count needs d_n >= 1, got " + std::to_string(d_n));
    return static_cast<int>(std::bit_width(static_cast<uint32_t>(d_n)));
}

namespace {

// Scaled integer value of one activation element, with integrity checks.
int32_t scaled_value(double v, int64_t scale_n, int32_t d_n) {
    double scaled = v * static_cast<double>(scale_n);
    double k = std::round(scaled);
    if (std::abs(scaled - k) > 1e-6)
        throw LoweringError("activation " + std::to_string(v) + " * " + std::to_string(scale_n) +
                            " is not integral");
    if (k < 0.0 || k > static_cast<double>(d_n))
        throw LoweringError("scaled activation " + std::to_string(k) + " outside [0, " +
                            std::to_string(d_n) + "]");
    return static_cast<int32_t>(k);
}

}  // namespace

Tensor to_bitplanes(const Tensor& activation, int64_t scale_n, int32_t d_n) {
    int planes = plane_count_for(d_n);
    Shape out_shape = activation.shape();
    out_shape.insert(out_shape.begin(), planes);
    Tensor out = Tensor::zeros(out_shape, Dtype::Bit);
    auto bits = out.ints();
    int64_t inner = activation.numel();
    for (int64_t i = 0; i < inner; ++i) {
        int32_t k = activation.dtype() == Dtype::Real
                        ? scaled_value(activation.reals()[static_cast<size_t>(i)], scale_n, d_n)
                        : activation.ints()[static_cast<size_t>(i)];
        if (k < 0 || k > d_n)
            throw LoweringError("scaled activation " + std::to_string(k) + " outside [0, " +
                                std::to_string(d_n) + "]");
        for (int b = 0; b < planes; ++b)
            bits[static_cast<size_t>(b * inner + i)] = (k >> b) & 1;
    }
    return out;
}

Tensor reconstruct_bitplanes(const Tensor& planes) {
    if (planes.rank() < 1) throw LoweringError("reconstruct: planes tensor must have a plane axis");
    int64_t b_count = planes.dim(0);
    int64_t inner = planes.numel() / std::max<int64_t>(b_count, 1);
    Shape out_shape(planes.shape().begin() + 1, planes.shape().end());
    Tensor out = Tensor::zeros(out_shape, Dtype::Int32);
    auto o = out.ints();
    auto bits = planes.ints();
    for (int64_t i = 0; i < inner; ++i) {
        int32_t v = 0;
        for (int64_t b = 0; b < b_count; ++b)
            v |= (bits[static_cast<size_t>(b * inner + i)] & 1) << b;
        o[static_cast<size_t>(i)] = v;
    }
    return out;
}

std::vector<Tensor> to_unary(const Tensor& activation, int32_t d) {
    const Tensor ints = activation.dtype() == Dtype::Real ? activation.to_int32() : activation;
    auto ks = ints.ints();
    for (int32_t k : ks)
        if (k < 0 || k > d)
            throw LoweringError("unary expansion: value " + std::to_string(k) + " outside [0, " +
                                std::to_string(d) + "]");
    std::vector<Tensor> planes;
    planes.reserve(static_cast<size_t>(d));
    for (int32_t p = 0; p < d; ++p) {
        Tensor plane = Tensor::zeros(ints.shape(), Dtype::Bit);
        auto bits = plane.ints();
        for (size_t i = 0; i < ks.size(); ++i) bits[i] = ks[i] > p ? 1 : 0;
        planes.push_back(std::move(plane));
    }
    return planes;
}

// -----------------------------------------------------------------------------

namespace {

// Provenance of each layer's input in a lowered (or to-be-lowered) graph:
// what the preceding layers feed it. Both the lowering pass, the executor and
// the audit branch on this single walk.
std::vector<Provenance> input_provenance(const std::vector<Layer>& layers) {
    std::vector<Provenance> prov(layers.size());
    Provenance cur = Provenance::NetworkInput;
    for (size_t i = 0; i < layers.size(); ++i) {
        prov[i] = cur;
        switch (layers[i].kind) {
            case LayerKind::Neuron:
                cur = Provenance::ActivationPlanes;
                break;
            case LayerKind::Conv:
            case LayerKind::Linear:
            case LayerKind::Pool:
                cur = Provenance::Accumulator;
                break;
            case LayerKind::BatchNorm:
            case LayerKind::Activation:
                cur = Provenance::Accumulator;
                break;
            case LayerKind::Flatten:
                break;  // reshape preserves provenance
        }
    }
    return prov;
}

// The neuron layer feeding layer i, or SIZE_MAX if its input is not a neuron
// stream (only Flatten may sit between them).
size_t feeding_neuron(const std::vector<Layer>& layers, size_t i) {
    for (size_t j = i; j-- > 0;) {
        if (layers[j].kind == LayerKind::Flatten) continue;
        if (layers[j].kind == LayerKind::Neuron) return j;
        return SIZE_MAX;
    }
    return SIZE_MAX;
}

}  // namespace

LayerGraph lower_graph(const LayerGraph& trained) {
    if (trained.mode != GraphMode::Training)
        throw LoweringError("lower_graph expects a training-mode graph");
    trained.validate();

    // Fold batchnorm into the immediately preceding conv/linear.
    std::vector<Layer> folded;
    for (const Layer& l : trained.layers) {
        if (l.kind == LayerKind::BatchNorm) {
            if (folded.empty() || (folded.back().kind != LayerKind::Conv &&
                                   folded.back().kind != LayerKind::Linear))
                throw LoweringError(
                    "unfoldable layer sequence: batchnorm is not adjacent to a conv/linear layer");
            FoldedAffine fa = batchnorm_fold_params(l);
            Layer& syn = folded.back();
            auto sc = fa.scale.reals();
            auto sh = fa.shift.reals();
            int64_t cout = syn.weight.dim(0);
            int64_t per_out = syn.weight.numel() / cout;
            auto w = syn.weight.reals();
            auto b = syn.bias.reals();
            for (int64_t c = 0; c < cout; ++c) {
                for (int64_t j = 0; j < per_out; ++j)
                    w[static_cast<size_t>(c * per_out + j)] *= sc[static_cast<size_t>(c)];
                b[static_cast<size_t>(c)] =
                    b[static_cast<size_t>(c)] * sc[static_cast<size_t>(c)] + sh[static_cast<size_t>(c)];
            }
            continue;
        }
        if (l.kind == LayerKind::Activation)
            throw LoweringError("cannot lower a graph with activation layers; convert them first");
        folded.push_back(l);
    }

    // A pooled neuron stream is no longer on the k/N grid.
    for (size_t i = 0; i < folded.size(); ++i) {
        if (folded[i].kind != LayerKind::Pool) continue;
        if (feeding_neuron(folded, i) != SIZE_MAX)
            throw LoweringError("unfoldable layer sequence: pooling consumes a neuron stream");
    }

    // Re-parameterize: a synaptic layer fed by an aligned neuron divides its
    // weight by that neuron's N; the bias is untouched.
    for (size_t i = 0; i < folded.size(); ++i) {
        Layer& l = folded[i];
        if (l.kind != LayerKind::Conv && l.kind != LayerKind::Linear) continue;
        size_t src = feeding_neuron(folded, i);
        if (src == SIZE_MAX) continue;
        int64_t n = folded[src].cfg.scale_n;
        if (n == 1) continue;
        double n_real = static_cast<double>(n);
        for (double& w : l.weight.reals()) w /= n_real;
    }

    // Plane schedules.
    for (Layer& l : folded) {
        if (l.kind != LayerKind::Neuron) continue;
        switch (l.cfg.kind) {
            case NeuronKind::IbraLif:
                l.lowered.expansion = Expansion::BitPlane;
                l.lowered.scale_n = l.cfg.scale_n;
                l.lowered.planes = l.cfg.plane_count();
                break;
            case NeuronKind::ILif:
                l.lowered.expansion = Expansion::Unary;
                l.lowered.scale_n = 1;
                l.lowered.planes = l.cfg.scaled_max();
                break;
            case NeuronKind::Lif:
                l.lowered.expansion = Expansion::Spike;
                l.lowered.scale_n = 1;
                l.lowered.planes = 1;
                break;
        }
    }

    LayerGraph out = trained;
    out.layers = std::move(folded);
    out.mode = GraphMode::Lowered;
    out.validate();
    return out;
}

// -----------------------------------------------------------------------------

namespace {

// Bit of the given plane for a scaled activation value.
inline int plane_bit(int32_t k, int plane, Expansion exp) {
    switch (exp) {
        case Expansion::BitPlane: return (k >> plane) & 1;
        case Expansion::Unary: return k > plane ? 1 : 0;
        case Expansion::Spike: return k != 0 ? 1 : 0;
    }
    return 0;
}

struct PlaneStream {
    Tensor scaled;        // int32 activations k
    Expansion expansion;
    int planes;
    int64_t scale_n;
};

// Accumulate-only synaptic pass over a plane stream: per plane, one partial
// sum built purely from additions of weights at set bits; partials are then
// shift-combined (bitplane) or summed (unary/spike). Weights already carry
// the /N fold.
Tensor conv_planes(const PlaneStream& in, const Layer& layer, size_t layer_idx, int t,
                   SynapticCounter* counter) {
    const Tensor& w = layer.weight;
    Shape out_shape = kernels::conv2d_out_shape(in.scaled.shape(), w.shape(), layer.stride,
                                                layer.padding);
    Shape in_s = in.scaled.shape();
    int64_t bsz = in_s[0], cin = in_s[1], h = in_s[2], w_in = in_s[3];
    int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    int64_t oh = out_shape[2], ow = out_shape[3];

    Tensor out = Tensor::zeros(out_shape, Dtype::Real);
    auto o = out.reals();
    auto ws = w.reals();
    auto ks = in.scaled.ints();

    for (int plane = 0; plane < in.planes; ++plane) {
        int64_t acs = 0;
        for (int64_t b = 0; b < bsz; ++b)
            for (int64_t co = 0; co < cout; ++co)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        double partial = 0.0;
                        for (int64_t ci = 0; ci < cin; ++ci)
                            for (int64_t ky = 0; ky < kh; ++ky)
                                for (int64_t kx = 0; kx < kw; ++kx) {
                                    int64_t iy = oy * layer.stride + ky - layer.padding;
                                    int64_t ix = ox * layer.stride + kx - layer.padding;
                                    if (iy < 0 || iy >= h || ix < 0 || ix >= w_in) continue;
                                    int32_t k = ks[static_cast<size_t>(
                                        ((b * cin + ci) * h + iy) * w_in + ix)];
                                    if (plane_bit(k, plane, in.expansion)) {
                                        partial += ws[static_cast<size_t>(
                                            ((co * cin + ci) * kh + ky) * kw + kx)];
                                        ++acs;
                                    }
                                }
                        size_t oi = static_cast<size_t>(((b * cout + co) * oh + oy) * ow + ox);
                        o[oi] += in.expansion == Expansion::BitPlane ? std::ldexp(partial, plane)
                                                                     : partial;
                    }
        if (counter) counter->add_acs(layer_idx, t, plane, acs);
    }
    return kernels::bias_channel(out, layer.bias);
}

Tensor linear_planes(const PlaneStream& in, const Layer& layer, size_t layer_idx, int t,
                     SynapticCounter* counter) {
    const Tensor& w = layer.weight;
    int64_t m = w.dim(0), n = w.dim(1);
    int64_t bsz = in.scaled.dim(0);
    if (in.scaled.dim(1) != n)
        throw LoweringError("lowered linear: input width " + std::to_string(in.scaled.dim(1)) +
                            " does not match weight " + shape_str(w.shape()));
    Tensor out = Tensor::zeros({bsz, m}, Dtype::Real);
    auto o = out.reals();
    auto ws = w.reals();
    auto bs = layer.bias.reals();
    auto ks = in.scaled.ints();

    for (int plane = 0; plane < in.planes; ++plane) {
        int64_t acs = 0;
        for (int64_t b = 0; b < bsz; ++b)
            for (int64_t i = 0; i < m; ++i) {
                double partial = 0.0;
                for (int64_t j = 0; j < n; ++j) {
                    int32_t k = ks[static_cast<size_t>(b * n + j)];
                    if (plane_bit(k, plane, in.expansion)) {
                        partial += ws[static_cast<size_t>(i * n + j)];
                        ++acs;
                    }
                }
                o[static_cast<size_t>(b * m + i)] +=
                    in.expansion == Expansion::BitPlane ? std::ldexp(partial, plane) : partial;
            }
        if (counter) counter->add_acs(layer_idx, t, plane, acs);
    }
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t i = 0; i < m; ++i)
            o[static_cast<size_t>(b * m + i)] += bs[static_cast<size_t>(i)];
    return out;
}

}  // namespace

LoweredResult lowered_forward(const LayerGraph& lowered, const Tensor& batch_input,
                              ActivationProbe* probe, SynapticCounter* counter,
                              ExpansionOverride override_exp) {
    if (lowered.mode != GraphMode::Lowered)
        throw LoweringError("lowered_forward expects a lowered graph");
    lowered.validate();

    size_t n_neurons = 0;
    for (const Layer& l : lowered.layers)
        if (l.kind == LayerKind::Neuron) ++n_neurons;
    std::vector<NeuronState> states(n_neurons);

    LoweredResult result;
    Tensor mean;
    for (int t = 0; t < lowered.timesteps; ++t) {
        Tensor real = batch_input;  // real current until the first neuron
        PlaneStream planes;
        bool on_planes = false;
        size_t neuron_idx = 0;

        for (size_t i = 0; i < lowered.layers.size(); ++i) {
            const Layer& l = lowered.layers[i];
            switch (l.kind) {
                case LayerKind::Conv: {
                    if (on_planes) {
                        real = conv_planes(planes, l, i, t, counter);
                        on_planes = false;
                    } else {
                        Tensor y = kernels::conv2d(real, l.weight, l.stride, l.padding);
                        if (counter) {
                            int64_t fan_in = l.weight.dim(1) * l.weight.dim(2) * l.weight.dim(3);
                            counter->add_macs(i, t, y.numel() * fan_in);
                        }
                        real = kernels::bias_channel(y, l.bias);
                    }
                    break;
                }
                case LayerKind::Linear: {
                    if (on_planes) {
                        real = linear_planes(planes, l, i, t, counter);
                        on_planes = false;
                    } else {
                        Tensor y = kernels::linear(real, l.weight, &l.bias);
                        if (counter) counter->add_macs(i, t, y.numel() * l.weight.dim(1));
                        real = std::move(y);
                    }
                    break;
                }
                case LayerKind::Neuron: {
                    if (on_planes)
                        throw LoweringError("lowered graph: neuron layer " + std::to_string(i) +
                                            " consumes an unexpanded plane stream");
                    NeuronState& st = states[neuron_idx];
                    if (st.v.numel() == 0) st = NeuronState::zeros(real.shape());
                    StepValue step = neuron_step(st, real, l.cfg);
                    st.v = step.new_state;
                    if (probe) probe->on_neuron(i, t, step.scaled);
                    planes.scaled = std::move(step.scaled);
                    planes.expansion = l.lowered.expansion;
                    planes.planes = l.lowered.planes;
                    planes.scale_n = l.lowered.scale_n;
                    if (override_exp == ExpansionOverride::ForceUnary &&
                        planes.expansion == Expansion::BitPlane) {
                        planes.expansion = Expansion::Unary;
                        planes.planes = l.cfg.scaled_max();
                    }
                    on_planes = true;
                    ++neuron_idx;
                    break;
                }
                case LayerKind::Pool:
                    if (on_planes)
                        throw LoweringError("lowered graph: pooling consumes a neuron stream");
                    real = kernels::avg_pool2d(real, l.pool_k);
                    break;
                case LayerKind::Flatten: {
                    if (on_planes) {
                        const Shape& s = planes.scaled.shape();
                        int64_t bsz = s[0];
                        Shape inner(s.begin() + 1, s.end());
                        planes.scaled = planes.scaled.reshaped({bsz, numel_of(inner)});
                    } else {
                        const Shape& s = real.shape();
                        int64_t bsz = s[0];
                        Shape inner(s.begin() + 1, s.end());
                        real = real.reshaped({bsz, numel_of(inner)});
                    }
                    break;
                }
                case LayerKind::BatchNorm:
                    throw LoweringError("lowered graph contains batchnorm at layer " +
                                        std::to_string(i));
                case LayerKind::Activation:
                    throw LoweringError("lowered graph contains an activation layer at " +
                                        std::to_string(i));
            }
        }

        // If the graph ends on a neuron, rescale the integer stream to k/N at
        // the output boundary (reporting arithmetic, not a synaptic op).
        Tensor logits;
        if (on_planes) {
            logits = Tensor::zeros(planes.scaled.shape(), Dtype::Real);
            auto o = logits.reals();
            auto ks = planes.scaled.ints();
            double inv_n = 1.0 / static_cast<double>(planes.scale_n);
            for (size_t j = 0; j < o.size(); ++j)
                o[j] = static_cast<double>(ks[j]) * inv_n;
        } else {
            logits = std::move(real);
        }
        if (t == 0)
            mean = logits;
        else
            mean = add(mean, logits);
        result.per_timestep.push_back(std::move(logits));
    }
    result.mean_logits =
        lowered.timesteps == 1 ? mean : mul_scalar(mean, 1.0 / lowered.timesteps);
    return result;
}

// -----------------------------------------------------------------------------

std::vector<PlanOp> execution_plan(const LayerGraph& lowered) {
    if (lowered.mode != GraphMode::Lowered)
        throw LoweringError("execution_plan expects a lowered graph");
    std::vector<Provenance> prov = input_provenance(lowered.layers);
    std::vector<PlanOp> plan;
    for (size_t i = 0; i < lowered.layers.size(); ++i) {
        const Layer& l = lowered.layers[i];
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::Linear: {
                if (prov[i] == Provenance::ActivationPlanes) {
                    size_t src = feeding_neuron(lowered.layers, i);
                    int planes = lowered.layers[src].lowered.planes;
                    for (int p = 0; p < planes; ++p)
                        plan.push_back({PlanOpKind::AccumulateSpikes, prov[i], i, p});
                    plan.push_back({PlanOpKind::ShiftCombine, Provenance::Accumulator, i, -1});
                } else {
                    plan.push_back({PlanOpKind::MultiplyAccumulate, prov[i], i, -1});
                }
                plan.push_back({PlanOpKind::AddBias, Provenance::Accumulator, i, -1});
                break;
            }
            case LayerKind::Neuron:
                plan.push_back({PlanOpKind::NeuronFire, prov[i], i, -1});
                break;
            case LayerKind::Pool:
                plan.push_back({PlanOpKind::MultiplyAccumulate, prov[i], i, -1});
                break;
            case LayerKind::Flatten:
                plan.push_back({PlanOpKind::Reshape, prov[i], i, -1});
                break;
            case LayerKind::BatchNorm:
            case LayerKind::Activation:
                throw LoweringError("execution_plan: layer " + std::to_string(i) +
                                    " must not appear in a lowered graph");
        }
    }
    if (!lowered.layers.empty() && lowered.layers.back().kind == LayerKind::Neuron)
        plan.push_back({PlanOpKind::OutputScale, Provenance::Accumulator,
                        lowered.layers.size() - 1, -1});
    return plan;
}

AuditReport audit_accumulate_only(const LayerGraph& lowered) {
    AuditReport report;
    std::vector<PlanOp> plan = execution_plan(lowered);
    std::vector<Provenance> prov = input_provenance(lowered.layers);

    for (const PlanOp& op : plan) {
        if (op.kind == PlanOpKind::MultiplyAccumulate &&
            op.operand == Provenance::ActivationPlanes)
            ++report.multiplies_on_activations;
    }
    for (size_t i = 0; i < lowered.layers.size(); ++i) {
        const Layer& l = lowered.layers[i];
        if (l.kind != LayerKind::Conv && l.kind != LayerKind::Linear) continue;
        std::string line = "layer " + std::to_string(i) + " (" + layer_kind_name(l.kind) + "): ";
        if (prov[i] == Provenance::ActivationPlanes) {
            size_t src = feeding_neuron(lowered.layers, i);
            line += "accumulate-only over " + std::to_string(lowered.layers[src].lowered.planes) +
                    " " + expansion_name(lowered.layers[src].lowered.expansion) +
                    " planes, shift-combined; weights carry /N (N=" +
                    std::to_string(lowered.layers[src].lowered.scale_n) + ")";
        } else {
            line += "multiply-accumulate on real network input";
        }
        report.lines.push_back(line);
    }
    report.pass = report.multiplies_on_activations == 0;
    return report;
}

// -----------------------------------------------------------------------------

void check_lowering_architecture(const LayerGraph& trained, const LayerGraph& lowered) {
    std::vector<const Layer*> skeleton;
    for (const Layer& l : trained.layers)
        if (l.kind != LayerKind::BatchNorm) skeleton.push_back(&l);
    if (skeleton.size() != lowered.layers.size())
        throw GraphError("architecture mismatch: trained graph has " +
                         std::to_string(skeleton.size()) + " non-batchnorm layers, lowered has " +
                         std::to_string(lowered.layers.size()));
    for (size_t i = 0; i < skeleton.size(); ++i) {
        const Layer& a = *skeleton[i];
        const Layer& b = lowered.layers[i];
        if (a.kind != b.kind)
            throw GraphError("architecture mismatch at layer " + std::to_string(i) + ": " +
                             layer_kind_name(a.kind) + " vs " + layer_kind_name(b.kind));
        if ((a.kind == LayerKind::Conv || a.kind == LayerKind::Linear) &&
            a.weight.shape() != b.weight.shape())
            throw GraphError("architecture mismatch at layer " + std::to_string(i) +
                             ": weight " + shape_str(a.weight.shape()) + " vs " +
                             shape_str(b.weight.shape()));
    }
}

namespace {

struct StreamRecorder : ActivationProbe {
    std::vector<std::pair<size_t, Tensor>> streams;
    void on_neuron(size_t layer_idx, int t, const Tensor& scaled) override {
        (void)t;
        streams.emplace_back(layer_idx, scaled);
    }
};

}  // namespace

EquivalenceReport verify_equivalence(const LayerGraph& trained, const LayerGraph& lowered,
                                     const std::vector<Tensor>& corpus, double tol) {
    check_lowering_architecture(trained, lowered);
    EquivalenceReport rep;
    rep.tol = tol;
    rep.samples = static_cast<int64_t>(corpus.size());

    for (const Tensor& sample : corpus) {
        Shape batched = sample.shape();
        batched.insert(batched.begin(), 1);
        Tensor input = sample.reshaped(batched);

        StreamRecorder train_probe, low_probe;
        EvalResult ref = eval_forward(trained, input, &train_probe);
        LoweredResult low = lowered_forward(lowered, input, &low_probe);

        auto a = ref.mean_logits.reals();
        auto b = low.mean_logits.reals();
        if (a.size() != b.size())
            throw GraphError("architecture mismatch: output sizes differ");
        double sample_rel = 0.0;
        for (size_t i = 0; i < a.size(); ++i) {
            double abs = std::abs(a[i] - b[i]);
            double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
            rep.max_abs_diff = std::max(rep.max_abs_diff, abs);
            sample_rel = std::max(sample_rel, abs / denom);
        }
        rep.max_rel_diff = std::max(rep.max_rel_diff, sample_rel);

        if (sample_rel > tol && rep.first_divergence.empty()) {
            // Locate the first neuron stream that disagrees; if all agree the
            // divergence is in the layers after the last neuron.
            size_t n = std::min(train_probe.streams.size(), low_probe.streams.size());
            for (size_t s = 0; s < n; ++s) {
                if (!train_probe.streams[s].second.equals(low_probe.streams[s].second)) {
                    rep.first_divergence =
                        "first divergent activation stream at layer " +
                        std::to_string(low_probe.streams[s].first);
                    break;
                }
            }
            if (rep.first_divergence.empty())
                rep.first_divergence = "divergence in the output layers after the last neuron";
        }
    }
    rep.pass = rep.max_rel_diff <= tol;
    if (rep.pass) rep.first_divergence.clear();
    return rep;
}

// -----------------------------------------------------------------------------

LayerGraph convert_ann(const LayerGraph& ann, const NeuronConfig& proto,
                       const Tensor* calibration_batch) {
    if (ann.mode != GraphMode::Training)
        throw LoweringError("convert_ann expects a training-mode graph");
    proto.validate();

    // Ceilings for unbounded relu activations: 99.9th percentile of observed
    // outputs over the calibration batch.
    std::vector<double> relu_ceiling(ann.layers.size(), 0.0);
    bool needs_calibration = false;
    for (const Layer& l : ann.layers)
        if (l.kind == LayerKind::Activation && l.act == ActKind::Relu) needs_calibration = true;
    if (needs_calibration) {
        if (!calibration_batch)
            throw LoweringError("unbounded activation with no calibration data");
        // Forward the calibration batch, capturing each relu's output.
        Tensor x = *calibration_batch;
        for (size_t i = 0; i < ann.layers.size(); ++i) {
            const Layer& l = ann.layers[i];
            switch (l.kind) {
                case LayerKind::Conv:
                    x = kernels::bias_channel(kernels::conv2d(x, l.weight, l.stride, l.padding),
                                              l.bias);
                    break;
                case LayerKind::Linear:
                    x = kernels::linear(x, l.weight, &l.bias);
                    break;
                case LayerKind::BatchNorm: {
                    FoldedAffine fa = batchnorm_fold_params(l);
                    x = kernels::affine_channel(x, fa.scale, fa.shift);
                    break;
                }
                case LayerKind::Pool:
                    x = kernels::avg_pool2d(x, l.pool_k);
                    break;
                case LayerKind::Flatten: {
                    Shape s = x.shape();
                    x = x.reshaped({s[0], numel_of(Shape(s.begin() + 1, s.end()))});
                    break;
                }
                case LayerKind::Activation: {
                    if (l.act == ActKind::Relu) {
                        x = kernels::pointwise(x, [](double v) { return v > 0.0 ? v : 0.0; });
                        std::vector<double> vals(x.reals().begin(), x.reals().end());
                        std::sort(vals.begin(), vals.end());
                        size_t idx = static_cast<size_t>(
                            std::ceil(0.999 * static_cast<double>(vals.size()))) - 1;
                        relu_ceiling[i] = std::max(vals[idx], 1e-6);
                    } else if (l.act == ActKind::Clip) {
                        x = kernels::pointwise(x, [lo = l.clip_lo, hi = l.clip_hi](double v) {
                            return v < lo ? lo : (v > hi ? hi : v);
                        });
                    }
                    break;
                }
                case LayerKind::Neuron:
                    throw LoweringError("convert_ann: graph already contains neuron layers");
            }
        }
    }

    LayerGraph out = ann;
    out.timesteps = 1;
    for (size_t i = 0; i < out.layers.size(); ++i) {
        Layer& l = out.layers[i];
        if (l.kind != LayerKind::Activation) continue;
        if (l.act == ActKind::Identity) continue;  // no nonlinearity: path unchanged
        double ceiling = l.act == ActKind::Clip ? l.clip_hi : relu_ceiling[i];
        NeuronConfig cfg = ibra_config(ceiling, proto.scale_n, 1.0, 1);
        l = make_neuron(cfg);
    }
    out.validate();
    return out;
}

}  // namespace ibra
