#include "doctest.h"
#include "ibra/kernels.hpp"
#include "ibra/rng.hpp"
#include "testutil.hpp"

using namespace ibra;

TEST_CASE("conv2d scalar product") {
    Tensor x = Tensor::from_reals({1, 1, 1}, {2.0});
    Tensor w = Tensor::from_reals({1, 1, 1, 1}, {3.0});
    Tensor y = kernels::conv2d(x, w, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y.reals()[0] == 6.0);
}

TEST_CASE("conv2d identity kernel preserves the input") {
    Rng rng(3);
    Tensor x = testutil::random_input(rng, {2, 5, 5});
    Tensor w = Tensor::zeros({2, 2, 3, 3}, Dtype::Real);
    // kernel with a single 1 at the center of the matching channel
    for (int64_t c = 0; c < 2; ++c)
        w.reals()[static_cast<size_t>(((c * 2 + c) * 3 + 1) * 3 + 1)] = 1.0;
    Tensor y = kernels::conv2d(x, w, 1, 1);
    CHECK(y.equals(x));
}

TEST_CASE("conv2d matches the six-loop reference") {
    Rng rng(17);
    Tensor x = testutil::random_input(rng, {1, 4, 4});
    Tensor w = testutil::random_input(rng, {1, 1, 3, 3});
    SUBCASE("valid") {
        Tensor y = kernels::conv2d(x, w, 1, 0);
        CHECK(y.equals(testutil::reference_conv2d(x, w, 1, 0)));
    }
    SUBCASE("padded") {
        Tensor y = kernels::conv2d(x, w, 1, 1);
        CHECK(y.equals(testutil::reference_conv2d(x, w, 1, 1)));
    }
    SUBCASE("strided multi-channel") {
        Tensor x2 = testutil::random_input(rng, {3, 6, 6});
        Tensor w2 = testutil::random_input(rng, {4, 3, 3, 3});
        Tensor y = kernels::conv2d(x2, w2, 2, 1);
        CHECK(y.equals(testutil::reference_conv2d(x2, w2, 2, 1)));
    }
}

TEST_CASE("conv2d reports both shapes on mismatch") {
    Tensor x = Tensor::zeros({2, 4, 4}, Dtype::Real);
    Tensor w = Tensor::zeros({1, 3, 3, 3}, Dtype::Real);
    try {
        kernels::conv2d(x, w, 1, 0);
        FAIL("expected TensorError");
    } catch (const TensorError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2,4,4]") != std::string::npos);
        CHECK(msg.find("[1,3,3,3]") != std::string::npos);
    }
}

TEST_CASE("linear identity and fixed example") {
    Tensor eye = Tensor::from_reals({2, 2}, {1, 0, 0, 1});
    Tensor zero_b = Tensor::zeros({2}, Dtype::Real);
    Tensor x = Tensor::from_reals({2}, {5.0, -1.0});
    CHECK(kernels::linear(x, eye, &zero_b).equals(x));

    Tensor w = Tensor::from_reals({1, 2}, {1.0, 2.0});
    Tensor b = Tensor::zeros({1}, Dtype::Real);
    Tensor in = Tensor::from_reals({2}, {3.0, 4.0});
    CHECK(kernels::linear(in, w, &b).reals()[0] == 11.0);
}

TEST_CASE("linear matches the dot-product oracle") {
    Rng rng(29);
    Tensor x = testutil::random_input(rng, {8});
    Tensor w = testutil::random_input(rng, {4, 8});
    Tensor b = testutil::random_input(rng, {4});
    CHECK(kernels::linear(x, w, &b).equals(testutil::reference_linear(x, w, b)));
}

TEST_CASE("linear shape mismatch is descriptive") {
    Tensor x = Tensor::zeros({3}, Dtype::Real);
    Tensor w = Tensor::zeros({2, 4}, Dtype::Real);
    CHECK_THROWS_AS(kernels::linear(x, w, nullptr), TensorError);
}

TEST_CASE("avg_pool2d averages blocks and requires divisibility") {
    Tensor x = Tensor::from_reals({1, 2, 2}, {1.0, 2.0, 3.0, 6.0});
    Tensor y = kernels::avg_pool2d(x, 2);
    CHECK(y.reals()[0] == 3.0);
    Tensor odd = Tensor::zeros({1, 3, 3}, Dtype::Real);
    CHECK_THROWS_AS(kernels::avg_pool2d(odd, 2), TensorError);
}

TEST_CASE("batch statistics and normalization") {
    Tensor x = Tensor::from_reals({2, 2}, {1.0, 0.0, 3.0, 4.0});
    kernels::BnStats st = kernels::bn_batch_stats(x);
    CHECK(st.mean.reals()[0] == 2.0);
    CHECK(st.mean.reals()[1] == 2.0);
    CHECK(st.var.reals()[0] == 1.0);
    CHECK(st.var.reals()[1] == 4.0);

    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2}, Dtype::Real);
    Tensor y = kernels::bn_normalize(x, st, gamma, beta, 1e-12);
    CHECK(y.reals()[0] == doctest::Approx(-1.0));
    CHECK(y.reals()[2] == doctest::Approx(1.0));
}

TEST_CASE("cross entropy on a certain prediction is near zero") {
    Tensor logits = Tensor::from_reals({1, 3}, {20.0, 0.0, 0.0});
    Tensor sm;
    double loss = kernels::cross_entropy_mean(logits, {0}, sm);
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-6));
    CHECK_THROWS_AS(kernels::cross_entropy_mean(logits, {5}, sm), TensorError);
}
