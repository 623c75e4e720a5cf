#include <cmath>

#include "doctest.h"
#include "ibra/neuron.hpp"
#include "ibra/ops.hpp"
#include "ibra/rng.hpp"
#include "testutil.hpp"

using namespace ibra;

TEST_CASE("lif charge, fire, soft reset") {
    NeuronConfig cfg = lif_config(0.5, 1.0);
    NeuronState st{Tensor::from_reals({1}, {0.5})};
    StepValue s = lif_step(st, Tensor::from_reals({1}, {0.8}), cfg);
    CHECK(s.v_pre.reals()[0] == doctest::Approx(1.05));
    CHECK(s.output.reals()[0] == 1.0);
    CHECK(s.new_state.reals()[0] == doctest::Approx(0.05));

    NeuronState zero = NeuronState::zeros({1});
    StepValue quiet = lif_step(zero, Tensor::zeros({1}, Dtype::Real), cfg);
    CHECK(quiet.output.reals()[0] == 0.0);
    CHECK(quiet.new_state.reals()[0] == 0.0);
}

TEST_CASE("lif stream matches the scalar reference simulation") {
    Rng rng(41);
    NeuronConfig cfg = lif_config(0.5, 1.0);
    std::vector<double> stream;
    for (int i = 0; i < 100; ++i) stream.push_back(rng.uniform(0.0, 1.5));
    testutil::ScalarTrace ref = testutil::scalar_neuron_sim(stream, cfg);

    NeuronState st = NeuronState::zeros({1});
    int spikes = 0, ref_spikes = 0;
    for (size_t t = 0; t < stream.size(); ++t) {
        StepValue s = lif_step(st, Tensor::from_reals({1}, {stream[t]}), cfg);
        st.v = s.new_state;
        CHECK(s.output.reals()[0] == ref.outputs[t]);
        spikes += s.output.reals()[0] > 0.5 ? 1 : 0;
        ref_spikes += ref.outputs[t] > 0.5 ? 1 : 0;
    }
    CHECK(spikes == ref_spikes);
}

TEST_CASE("ilif rounds then clips") {
    NeuronConfig cfg = ilif_config(4.0);
    NeuronState st = NeuronState::zeros({3});
    StepValue s = ilif_step(st, Tensor::from_reals({3}, {2.6, 7.2, -0.4}), cfg);
    CHECK(s.output.reals()[0] == 3.0);
    CHECK(s.output.reals()[1] == 4.0);  // clipped
    CHECK(s.output.reals()[2] == 0.0);
}

TEST_CASE("aligned firing divides the scaled integer back") {
    NeuronConfig cfg = ibra_config(5.11, 100);
    CHECK(cfg.scaled_max() == 511);
    NeuronState st = NeuronState::zeros({1});
    StepValue s = ibra_step(st, Tensor::from_reals({1}, {0.01234}), cfg);
    CHECK(s.scaled.ints()[0] == 1);  // round(1.234)
    CHECK(s.output.reals()[0] == doctest::Approx(0.01));

    StepValue hi = ibra_step(st, Tensor::from_reals({1}, {9.0}), cfg);
    CHECK(hi.scaled.ints()[0] == 511);
    CHECK(hi.output.reals()[0] == doctest::Approx(5.11));
}

TEST_CASE("aligned neuron with N=1 reduces to ilif on the same stream") {
    Rng rng(13);
    NeuronConfig ibra = ibra_config(4.0, 1);
    NeuronConfig ilif = ilif_config(4.0);
    NeuronState sa = NeuronState::zeros({4});
    NeuronState sb = NeuronState::zeros({4});
    for (int t = 0; t < 50; ++t) {
        Tensor in = testutil::random_input(rng, {4}, 2.0);
        StepValue a = ibra_step(sa, in, ibra);
        StepValue b = ilif_step(sb, in, ilif);
        CHECK(a.output.equals(b.output));
        CHECK(a.new_state.equals(b.new_state));
        sa.v = a.new_state;
        sb.v = b.new_state;
    }
}

TEST_CASE("table of alignment ceilings and plane counts") {
    struct Row {
        double d;
        int64_t n;
        int32_t d_n;
        int planes;
    };
    const Row rows[] = {
        {1.5, 10, 15, 4},     {3.1, 10, 31, 5},     {6.3, 10, 63, 6},
        {1.27, 100, 127, 7},  {2.55, 100, 255, 8},  {5.11, 100, 511, 9},
        {1.023, 1000, 1023, 10}, {2.047, 1000, 2047, 11}, {4.095, 1000, 4095, 12},
        {8.191, 1000, 8191, 13},
    };
    for (const Row& r : rows) {
        NeuronConfig cfg = ibra_config(r.d, r.n);
        CHECK(cfg.scaled_max() == r.d_n);
        CHECK(cfg.plane_count() == r.planes);
    }
}

TEST_CASE("range and integrality of the aligned output") {
    Rng rng(59);
    NeuronConfig cfg = ibra_config(5.11, 100);
    NeuronState st = NeuronState::zeros({16});
    for (int t = 0; t < 30; ++t) {
        StepValue s = ibra_step(st, testutil::random_input(rng, {16}, 3.0), cfg);
        st.v = s.new_state;
        for (int64_t i = 0; i < 16; ++i) {
            double o = s.output.reals()[static_cast<size_t>(i)];
            CHECK(o >= 0.0);
            CHECK(o <= cfg.d_max);
            double scaled = o * 100.0;
            CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);
            CHECK(s.scaled.ints()[static_cast<size_t>(i)] ==
                  static_cast<int32_t>(std::llround(scaled)));
            // soft-reset conservation, exact
            CHECK(s.v_pre.reals()[static_cast<size_t>(i)] - o ==
                  s.new_state.reals()[static_cast<size_t>(i)]);
        }
    }
}

TEST_CASE("surrogate window is the indicator of [0, d_max]") {
    Rng rng(61);
    NeuronConfig cfg = ibra_config(5.11, 100);
    for (int i = 0; i < 1000; ++i) {
        double v = rng.uniform(-2.0, 8.0);
        double expect = (v >= 0.0 && v <= 5.11) ? 1.0 : 0.0;
        CHECK(surrogate_window(v, cfg) == expect);
    }
}

TEST_CASE("identical seeds give identical activation streams") {
    NeuronConfig cfg = ibra_config(2.55, 100);
    auto run = [&]() {
        Rng rng(77);
        NeuronState st = NeuronState::zeros({8});
        std::vector<Tensor> outs;
        for (int t = 0; t < 20; ++t) {
            StepValue s = ibra_step(st, testutil::random_input(rng, {8}), cfg);
            st.v = s.new_state;
            outs.push_back(s.output);
        }
        return outs;
    };
    auto a = run();
    auto b = run();
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].equals(b[i]));
}

TEST_CASE("tape step fires like the value step and gates gradients") {
    Rng rng(83);
    NeuronConfig cfg = ibra_config(5.11, 100);
    Tensor input = testutil::random_input(rng, {6}, 3.0);
    NeuronState st = NeuronState::zeros({6});

    StepValue val = ibra_step(st, input, cfg);

    Tape tape;
    NodeId in_id = tape.leaf(input);
    TapeStep ts = neuron_step_tape(tape, cfg, st, in_id);
    CHECK(tape.value(ts.output).equals(val.output));
    CHECK(ts.new_state.equals(val.new_state));
    CHECK(ts.scaled.equals(val.scaled));

    NodeId summed =
        ops::linear(tape, ts.output, tape.leaf(Tensor::full({1, 6}, 1.0)), kNoNode);
    NodeId loss = ops::reshape(tape, summed, {});
    Tensor g = tape.backward(loss).at(in_id);
    for (int64_t i = 0; i < 6; ++i)
        CHECK(g.reals()[static_cast<size_t>(i)] ==
              surrogate_window(val.v_pre.reals()[static_cast<size_t>(i)], cfg));
}

TEST_CASE("direct encoding repeats the image") {
    Tensor img = Tensor::from_reals({2}, {0.3, -0.7});
    auto one = encode_direct(img, 1);
    CHECK(one.size() == 1);
    CHECK(one[0].equals(img));
    auto three = encode_direct(img, 3);
    CHECK(three.size() == 3);
    for (const Tensor& t : three) CHECK(t.equals(img));
}

TEST_CASE("spike encoding runs the first neuron layer on constant current") {
    SUBCASE("zero image stays silent") {
        NeuronConfig cfg = lif_config(0.5, 1.0, 4);
        auto spikes = encode_spike_first_layer(Tensor::zeros({4}, Dtype::Real), cfg);
        for (const Tensor& s : spikes)
            for (double v : s.reals()) CHECK(v == 0.0);
    }
    SUBCASE("constant image at threshold fires on the first step") {
        NeuronConfig cfg = lif_config(1.0, 1.0, 2);
        auto spikes = encode_spike_first_layer(Tensor::full({3}, 1.0), cfg);
        for (double v : spikes[0].reals()) CHECK(v == 1.0);
    }
    SUBCASE("random image equals manual unrolling") {
        Rng rng(97);
        NeuronConfig cfg = ibra_config(2.55, 100, 0.5, 3);
        Tensor img = testutil::random_input(rng, {5});
        auto spikes = encode_spike_first_layer(img, cfg);

        NeuronState st = NeuronState::zeros({5});
        for (int t = 0; t < 3; ++t) {
            StepValue s = neuron_step(st, img, cfg);
            st.v = s.new_state;
            CHECK(spikes[static_cast<size_t>(t)].equals(s.output));
        }
    }
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(ibra_config(5.11, 100, 0.0).validate(), UsageError);  // alpha out of range
    CHECK_THROWS_AS(ilif_config(2.5).validate(), UsageError);             // non-integer D
    NeuronConfig bad = ibra_config(5.11, 100);
    bad.scale_n = 0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
}
