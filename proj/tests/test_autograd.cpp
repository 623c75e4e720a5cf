#include <cmath>

#include "doctest.h"
#include "ibra/autograd.hpp"
#include "ibra/ops.hpp"
#include "ibra/rng.hpp"
#include "testutil.hpp"

using namespace ibra;

TEST_CASE("backward requires a scalar loss") {
    Tape tape;
    NodeId x = tape.leaf(Tensor::from_reals({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(tape.backward(x), TensorError);
}

TEST_CASE("tape rejects inputs that do not precede their consumer") {
    Tape tape;
    CHECK_THROWS_AS(
        tape.record("bogus", {5}, Tensor::scalar(0.0),
                    [](const Tape&, const TapeEntry&, const Tensor&) {
                        return std::vector<Tensor>{Tensor()};
                    }),
        TensorError);
}

TEST_CASE("dL/dw equals the input for a scalar product") {
    Tape tape;
    NodeId x = tape.leaf(Tensor::from_reals({1}, {3.0}));
    NodeId w = tape.leaf(Tensor::from_reals({1, 1}, {2.0}));
    NodeId y = ops::linear(tape, x, w, kNoNode);
    NodeId loss = ops::reshape(tape, y, {});
    GradMap grads = tape.backward(loss);
    CHECK(grads.at(w).reals()[0] == 3.0);
    CHECK(grads.at(x).reals()[0] == 2.0);
}

TEST_CASE("a weight used at two timesteps accumulates both contributions") {
    // activations 2 and 3 with unit upstream: dL/dw = 2 + 3 = 5
    Tape tape;
    NodeId o1 = tape.leaf(Tensor::from_reals({1}, {2.0}));
    NodeId o2 = tape.leaf(Tensor::from_reals({1}, {3.0}));
    NodeId w = tape.leaf(Tensor::from_reals({1, 1}, {1.0}));
    NodeId y1 = ops::linear(tape, o1, w, kNoNode);
    NodeId y2 = ops::linear(tape, o2, w, kNoNode);
    NodeId loss = ops::reshape(tape, ops::add(tape, y1, y2), {});
    GradMap grads = tape.backward(loss);
    CHECK(grads.at(w).reals()[0] == 5.0);
}

TEST_CASE("custom_grad_apply forwards the function and backs the window") {
    auto round_fn = [](double v) { return std::round(v); };
    auto window_fn = [](double v) { return (v >= 0.0 && v <= 4.0) ? 1.0 : 0.0; };

    auto grad_at = [&](double x_val, double& fwd) {
        Tape tape;
        NodeId x = tape.leaf(Tensor::from_reals({1}, {x_val}));
        NodeId y = ops::custom_grad_apply(tape, x, round_fn, window_fn);
        fwd = tape.value(y).reals()[0];
        NodeId loss = ops::reshape(tape, y, {});
        return tape.backward(loss).at(x).reals()[0];
    };

    double fwd = 0.0;
    CHECK(grad_at(2.3, fwd) == 1.0);
    CHECK(fwd == 2.0);
    CHECK(grad_at(-0.5, fwd) == 0.0);
    CHECK(grad_at(5.0, fwd) == 0.0);
}

TEST_CASE("custom_grad window matches the piecewise definition pointwise") {
    Rng rng(11);
    auto round_fn = [](double v) { return std::round(v); };
    double d = 4.0;
    auto window_fn = [d](double v) { return (v >= 0.0 && v <= d) ? 1.0 : 0.0; };

    std::vector<double> xs(1000);
    for (double& v : xs) v = rng.uniform(-3.0, 8.0);
    Tape tape;
    NodeId x = tape.leaf(Tensor::from_reals({1000}, xs));
    NodeId y = ops::custom_grad_apply(tape, x, round_fn, window_fn);
    NodeId summed = ops::linear(tape, y, tape.leaf(Tensor::full({1, 1000}, 1.0)), kNoNode);
    NodeId loss = ops::reshape(tape, summed, {});
    Tensor g = tape.backward(loss).at(x);
    for (size_t i = 0; i < xs.size(); ++i) {
        double expect = (xs[i] >= 0.0 && xs[i] <= d) ? 1.0 : 0.0;
        CHECK(g.reals()[i] == expect);
    }
}

TEST_CASE("analytic gradients match finite differences on a smooth composite") {
    Rng rng(23);
    Tensor x_val = testutil::random_input(rng, {1, 1, 6, 6});
    Tensor w_val = testutil::random_input(rng, {3, 1, 3, 3}, 0.4);
    Tensor b_val = testutil::random_input(rng, {3}, 0.1);
    Tensor head_val = testutil::random_input(rng, {4, 12}, 0.3);
    std::vector<int> labels = {2};

    auto eval = [&]() {
        Tape tape;
        NodeId x = tape.leaf(x_val);
        NodeId w = tape.leaf(w_val);
        NodeId b = tape.leaf(b_val);
        NodeId h = tape.leaf(head_val);
        NodeId c = ops::bias_channel(tape, ops::conv2d(tape, x, w, 1, 0), b);
        NodeId p = ops::avg_pool2d(tape, c, 2);
        NodeId f = ops::reshape(tape, p, {1, 12});
        NodeId logits = ops::linear(tape, f, h, kNoNode);
        NodeId loss = ops::cross_entropy_mean(tape, logits, labels);
        return tape.value(loss).reals()[0];
    };

    Tape tape;
    NodeId x = tape.leaf(x_val);
    NodeId w = tape.leaf(w_val);
    NodeId b = tape.leaf(b_val);
    NodeId h = tape.leaf(head_val);
    NodeId c = ops::bias_channel(tape, ops::conv2d(tape, x, w, 1, 0), b);
    NodeId p = ops::avg_pool2d(tape, c, 2);
    NodeId f = ops::reshape(tape, p, {1, 12});
    NodeId logits = ops::linear(tape, f, h, kNoNode);
    NodeId loss = ops::cross_entropy_mean(tape, logits, labels);
    GradMap grads = tape.backward(loss);

    CHECK(testutil::grads_close(grads.at(w), testutil::finite_difference(eval, w_val)));
    CHECK(testutil::grads_close(grads.at(x), testutil::finite_difference(eval, x_val)));
    CHECK(testutil::grads_close(grads.at(h), testutil::finite_difference(eval, head_val)));
    CHECK(testutil::grads_close(grads.at(b), testutil::finite_difference(eval, b_val)));
}

TEST_CASE("batchnorm training gradients match finite differences") {
    Rng rng(31);
    Tensor x_val = testutil::random_input(rng, {4, 3});
    Tensor gamma_val = Tensor::from_reals({3}, {1.2, 0.8, 1.0});
    Tensor beta_val = Tensor::from_reals({3}, {0.1, -0.2, 0.0});
    Tensor head_val = testutil::random_input(rng, {2, 3}, 0.5);
    std::vector<int> labels = {1, 0, 1, 0};

    auto eval = [&]() {
        Tape tape;
        NodeId x = tape.leaf(x_val);
        NodeId ga = tape.leaf(gamma_val);
        NodeId be = tape.leaf(beta_val);
        NodeId h = tape.leaf(head_val);
        NodeId y = ops::batchnorm_train(tape, x, ga, be, 1e-5, nullptr);
        NodeId logits = ops::linear(tape, y, h, kNoNode);
        NodeId loss = ops::cross_entropy_mean(tape, logits, labels);
        return tape.value(loss).reals()[0];
    };

    Tape tape;
    NodeId x = tape.leaf(x_val);
    NodeId ga = tape.leaf(gamma_val);
    NodeId be = tape.leaf(beta_val);
    NodeId h = tape.leaf(head_val);
    NodeId y = ops::batchnorm_train(tape, x, ga, be, 1e-5, nullptr);
    NodeId logits = ops::linear(tape, y, h, kNoNode);
    NodeId loss = ops::cross_entropy_mean(tape, logits, labels);
    GradMap grads = tape.backward(loss);

    CHECK(testutil::grads_close(grads.at(x), testutil::finite_difference(eval, x_val)));
    CHECK(testutil::grads_close(grads.at(ga), testutil::finite_difference(eval, gamma_val)));
    CHECK(testutil::grads_close(grads.at(be), testutil::finite_difference(eval, beta_val)));
}
