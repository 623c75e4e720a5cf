#include <cmath>

#include "doctest.h"
#include "ibra/energy.hpp"
#include "ibra/lowering.hpp"
#include "ibra/rng.hpp"
#include "testutil.hpp"

using namespace ibra;

namespace {

// Ledger built from the input-side event enumeration oracle: walks every
// spike and adds the synapses it drives. Independent of the executor's
// fan-in loops.
OpLedger enumerate_ledger(const LayerGraph& lowered, const std::vector<Tensor>& corpus,
                          ExpansionOverride override_exp) {
    OpLedger oracle;
    struct Recorder : ActivationProbe {
        std::vector<std::pair<size_t, Tensor>> streams;
        void on_neuron(size_t layer, int, const Tensor& scaled) override {
            streams.emplace_back(layer, scaled);
        }
    };
    for (const Tensor& sample : corpus) {
        Shape batched = sample.shape();
        batched.insert(batched.begin(), 1);
        Tensor input = sample.reshaped(batched);
        Recorder rec;
        lowered_forward(lowered, input, &rec);

        size_t stream_idx = 0;
        for (int t = 0; t < lowered.timesteps; ++t) {
            // streams arrive per timestep in layer order
            for (size_t i = 0; i < lowered.layers.size(); ++i) {
                const Layer& l = lowered.layers[i];
                if (l.kind == LayerKind::Conv || l.kind == LayerKind::Linear) {
                    // real-input layer: full fan-in MACs
                    bool fed_by_neuron = false;
                    for (size_t j = i; j-- > 0;) {
                        if (lowered.layers[j].kind == LayerKind::Flatten) continue;
                        fed_by_neuron = lowered.layers[j].kind == LayerKind::Neuron;
                        break;
                    }
                    if (!fed_by_neuron) {
                        int64_t fan_in = l.kind == LayerKind::Conv
                                             ? l.weight.dim(1) * l.weight.dim(2) * l.weight.dim(3)
                                             : l.weight.dim(1);
                        Shape in_shape = lowered.input_shape;
                        in_shape.insert(in_shape.begin(), 1);
                        Shape out_shape =
                            l.kind == LayerKind::Conv
                                ? kernels::conv2d_out_shape(in_shape, l.weight.shape(), l.stride,
                                                            l.padding)
                                : Shape{1, l.weight.dim(0)};
                        oracle.add_macs(i, t, numel_of(out_shape) * fan_in);
                    }
                    continue;
                }
                if (l.kind != LayerKind::Neuron) continue;
                const Tensor& scaled = rec.streams[stream_idx].second;
                ++stream_idx;
                // find the synaptic consumer (through flatten only)
                size_t consumer = SIZE_MAX;
                Tensor shaped = scaled;
                for (size_t j = i + 1; j < lowered.layers.size(); ++j) {
                    if (lowered.layers[j].kind == LayerKind::Flatten) {
                        shaped = shaped.reshaped(
                            {shaped.dim(0), numel_of(Shape(shaped.shape().begin() + 1,
                                                           shaped.shape().end()))});
                        continue;
                    }
                    consumer = j;
                    break;
                }
                if (consumer == SIZE_MAX) continue;  // network output
                const Layer& syn = lowered.layers[consumer];
                Expansion exp = l.lowered.expansion;
                int planes = l.lowered.planes;
                if (override_exp == ExpansionOverride::ForceUnary && exp == Expansion::BitPlane) {
                    exp = Expansion::Unary;
                    planes = l.cfg.scaled_max();
                }
                for (int p = 0; p < planes; ++p) {
                    int64_t events =
                        syn.kind == LayerKind::Conv
                            ? testutil::enumerate_conv_plane_events(shaped, syn.weight.shape(),
                                                                    syn.stride, syn.padding, exp, p)
                            : testutil::enumerate_linear_plane_events(shaped, syn.weight.dim(0),
                                                                      exp, p);
                    oracle.add_acs(consumer, t, p, events);
                }
            }
        }
    }
    return oracle;
}

bool ledgers_equal(const OpLedger& a, const OpLedger& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (size_t i = 0; i < a.entries.size(); ++i) {
        const LedgerEntry& x = a.entries[i];
        const LedgerEntry& y = b.entries[i];
        if (x.layer != y.layer || x.timestep != y.timestep || x.plane != y.plane ||
            x.macs != y.macs || x.acs != y.acs)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("popcount rule on a single synapse") {
    // neuron emits integer 5 (bits 101): two set bits, fan-out 2
    LayerGraph g;
    g.input_shape = {1, 1, 1};
    g.layers.push_back(make_neuron(ibra_config(7.0, 1)));
    g.layers.push_back(make_conv(1, 2, 1, 1, 0));
    Layer& conv = g.layers[1];
    conv.weight.reals()[0] = 1.0;
    conv.weight.reals()[1] = 1.0;
    LayerGraph low = lower_graph(g);

    Tensor x = Tensor::from_reals({1, 1, 1}, {5.0});
    OpLedger bitplane = count_ops(low, {x});
    CHECK(bitplane.total_acs() == 2 * 2);

    OpLedger unary = count_ops(low, {x}, ExpansionOverride::ForceUnary);
    CHECK(unary.total_acs() == 5 * 2);
    CHECK(bitplane.total_macs() == 0);
}

TEST_CASE("ledger equals the event-enumeration oracle on a small cnn") {
    Rng rng(71);
    LayerGraph g = build_preset("cnn", {1, 8, 8}, 10, ibra_config(5.11, 100));
    init_params(g, rng);
    LayerGraph low = lower_graph(g);
    std::vector<Tensor> corpus;
    for (int i = 0; i < 10; ++i) corpus.push_back(testutil::random_input(rng, {1, 8, 8}));

    SUBCASE("popcount rule") {
        OpLedger impl = count_ops(low, corpus);
        OpLedger oracle = enumerate_ledger(low, corpus, ExpansionOverride::None);
        CHECK(ledgers_equal(impl, oracle));
    }
    SUBCASE("unary rule") {
        OpLedger impl = count_ops(low, corpus, ExpansionOverride::ForceUnary);
        OpLedger oracle = enumerate_ledger(low, corpus, ExpansionOverride::ForceUnary);
        CHECK(ledgers_equal(impl, oracle));
    }
}

TEST_CASE("pricing") {
    EnergyModel model;  // 4.6 / 0.9 pJ defaults
    SUBCASE("empty ledger prices to zero") {
        OpLedger empty;
        CHECK(price_mj(empty, model) == 0.0);
    }
    SUBCASE("a billion macs at 4.6 pJ is 4.6 mJ") {
        OpLedger ledger;
        ledger.add_macs(0, 0, 1000000000);
        CHECK(price_mj(ledger, model) == doctest::Approx(4.6));
    }
    SUBCASE("price is linear in the ledger") {
        OpLedger a, b;
        a.add_macs(0, 0, 123);
        a.add_acs(1, 0, 2, 456);
        b.add_acs(1, 0, 2, 44);
        b.add_acs(2, 1, 0, 7);
        CHECK(price_pj(a + b, model) == doctest::Approx(price_pj(a, model) + price_pj(b, model)));
    }
    SUBCASE("rejects non-positive energies") {
        OpLedger ledger;
        EnergyModel bad{0.0, 0.9};
        CHECK_THROWS_AS(price_pj(ledger, bad), UsageError);
    }
}

TEST_CASE("published energies reproduce the 6.34x ratio") {
    CHECK(efficiency_ratio(2.79, 0.44) == doctest::Approx(6.34));
}

TEST_CASE("mode comparison table") {
    Rng rng(73);
    LayerGraph g = build_preset("cnn", {1, 8, 8}, 10, ibra_config(5.11, 100));
    init_params(g, rng);
    LayerGraph low = lower_graph(g);
    std::vector<Tensor> corpus;
    for (int i = 0; i < 4; ++i) corpus.push_back(testutil::random_input(rng, {1, 8, 8}));

    EnergyModel model;
    ModeComparison cmp = compare_modes(g, low, corpus, model);
    REQUIRE(cmp.rows.size() == 4);
    CHECK(cmp.rows[0].mode == "relu");
    CHECK(cmp.rows[0].acs == 0);
    CHECK(cmp.rows[0].ratio_vs_ann == doctest::Approx(1.0));
    // the integer stream costs at least as much unary as binary
    CHECK(cmp.rows[3].acs <= cmp.rows[2].acs);
    // every spiking row keeps the first-layer macs only
    CHECK(cmp.rows[3].macs > 0);
    CHECK(cmp.rows[3].macs < cmp.rows[0].macs);

    std::string table = render_energy_table(cmp, model);
    CHECK(table.find("synaptic-op accounting only") != std::string::npos);
    CHECK(table.find("ibra-bitplane") != std::string::npos);
}

TEST_CASE("all-zero activations cost only the input-layer macs") {
    LayerGraph g = build_preset("cnn", {1, 8, 8}, 10, ibra_config(5.11, 100));
    // weights stay zero: every neuron is silent
    LayerGraph low = lower_graph(g);
    std::vector<Tensor> corpus = {Tensor::zeros({1, 8, 8}, Dtype::Real)};
    OpLedger ledger = count_ops(low, corpus);
    CHECK(ledger.total_acs() == 0);
    CHECK(ledger.total_macs() == 8 * 8 * 8 * 9);  // first conv only
}

TEST_CASE("zeroing an activation never increases any count") {
    Rng rng(79);
    // single neuron -> linear layer; activations are directly controlled
    LayerGraph g;
    g.input_shape = {6};
    g.layers.push_back(make_neuron(ibra_config(5.11, 100)));
    g.layers.push_back(make_linear(6, 4, true));
    init_params(g, rng);
    LayerGraph low = lower_graph(g);

    Tensor x = testutil::random_input(rng, {6}, 2.0);
    for (double& v : x.reals()) v = std::abs(v);
    OpLedger base = count_ops(low, {x});

    for (int64_t z = 0; z < 6; ++z) {
        Tensor zeroed = x;
        zeroed.reals()[static_cast<size_t>(z)] = 0.0;
        OpLedger after = count_ops(low, {zeroed});
        CHECK(after.total_acs() <= base.total_acs());
        CHECK(after.total_macs() == base.total_macs());
    }
}

TEST_CASE("spike encoding prices the input layer once") {
    Rng rng(83);
    LayerGraph direct = build_preset("mlp", {4}, 2, ibra_config(2.55, 100, 1.0, 3));
    direct.timesteps = 3;
    for (Layer& l : direct.layers)
        if (l.kind == LayerKind::Neuron) l.cfg.timesteps = 3;
    init_params(direct, rng);

    LayerGraph spike = direct;
    spike.encoding = Encoding::SpikeFirstLayer;

    std::vector<Tensor> corpus = {testutil::random_input(rng, {4})};
    OpLedger d = count_ops(direct, corpus);
    OpLedger s = count_ops(spike, corpus);
    // first linear (layer 0) runs on the constant image: once vs three times
    int64_t first_macs_direct = 0, first_macs_spike = 0;
    for (const LedgerEntry& e : d.entries)
        if (e.layer == 0) first_macs_direct += e.macs;
    for (const LedgerEntry& e : s.entries)
        if (e.layer == 0) first_macs_spike += e.macs;
    CHECK(first_macs_direct == 3 * first_macs_spike);
}

TEST_CASE("ledger csv lists layer, timestep, plane and energy") {
    LayerGraph g = build_preset("mlp", {2}, 2, ibra_config(1.5, 10));
    OpLedger ledger;
    ledger.add_macs(0, 0, 10);
    ledger.add_acs(2, 0, 1, 5);
    std::string csv = render_ledger_csv(ledger, g, EnergyModel{});
    CHECK(csv.find("layer,layer_type,timestep,plane,macs,acs,energy_pj") == 0);
    CHECK(csv.find("0,linear,0,-1,10,0,46.0") != std::string::npos);
    CHECK(csv.find("2,linear,0,1,0,5,4.5") != std::string::npos);
}
