#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ibra/io.hpp"
#include "ibra/rng.hpp"
#include "ibra/tensor.hpp"
#include "testutil.hpp"

using namespace ibra;

TEST_CASE("tensor shape/data length invariant") {
    CHECK_THROWS_AS(Tensor::from_reals({2, 3}, {1.0, 2.0}), TensorError);
    Tensor t = Tensor::from_reals({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK_THROWS_AS(t.reshaped({4}), TensorError);
    CHECK(t.reshaped({3, 2}).numel() == 6);
}

TEST_CASE("bit tensors only hold 0/1") {
    CHECK_THROWS_AS(Tensor::from_ints({2}, {0, 2}, Dtype::Bit), TensorError);
    Tensor b = Tensor::from_ints({3}, {1, 0, 1}, Dtype::Bit);
    CHECK(b.dtype() == Dtype::Bit);
}

TEST_CASE("to_int32 requires integral values") {
    Tensor t = Tensor::from_reals({2}, {3.0, 4.0000000001});
    CHECK(t.to_int32().ints()[1] == 4);
    Tensor bad = Tensor::from_reals({1}, {0.5});
    CHECK_THROWS_AS(bad.to_int32(), TensorError);
}

TEST_CASE("IBRT round-trips are exact per dtype") {
    Rng rng(7);
    SUBCASE("real64") {
        Tensor t = testutil::random_input(rng, {3, 4});
        std::stringstream ss;
        write_ibrt(ss, t);
        Tensor back = read_ibrt(ss);
        CHECK(back.equals(t));
    }
    SUBCASE("int32") {
        Tensor t = Tensor::from_ints({2, 2}, {1, -5, 300, 0});
        std::stringstream ss;
        write_ibrt(ss, t);
        CHECK(read_ibrt(ss).equals(t));
    }
    SUBCASE("bit packed, non multiple of 8") {
        std::vector<int32_t> bits;
        for (int i = 0; i < 11; ++i) bits.push_back(i % 3 == 0 ? 1 : 0);
        Tensor t = Tensor::from_ints({11}, bits, Dtype::Bit);
        std::stringstream ss;
        write_ibrt(ss, t);
        Tensor back = read_ibrt(ss);
        CHECK(back.dtype() == Dtype::Bit);
        CHECK(back.equals(t));
    }
    SUBCASE("empty tensor is a valid container") {
        Tensor t = Tensor::zeros({0, 2}, Dtype::Real);
        std::stringstream ss;
        write_ibrt(ss, t);
        Tensor back = read_ibrt(ss);
        CHECK(back.shape() == Shape{0, 2});
        CHECK(back.numel() == 0);
    }
    SUBCASE("real32 interchange rounds through float") {
        Tensor t = Tensor::from_reals({2}, {1.5, 0.1});
        std::stringstream ss;
        write_ibrt(ss, t, IbrtCode::Real32);
        Tensor back = read_ibrt(ss);
        CHECK(back.reals()[0] == 1.5);  // exactly representable
        CHECK(back.reals()[1] == doctest::Approx(0.1).epsilon(1e-7));
    }
}

TEST_CASE("IBRT rejects malformed containers") {
    Tensor t = Tensor::from_reals({2}, {1.0, 2.0});
    std::stringstream ss;
    write_ibrt(ss, t);
    std::string bytes = ss.str();

    SUBCASE("bad magic") {
        std::string corrupt = bytes;
        corrupt[0] = 'X';
        std::stringstream in(corrupt);
        CHECK_THROWS_AS(read_ibrt(in), FormatError);
    }
    SUBCASE("unsupported version") {
        std::string corrupt = bytes;
        corrupt[4] = 9;
        std::stringstream in(corrupt);
        CHECK_THROWS_AS(read_ibrt(in), FormatError);
    }
    SUBCASE("truncated data") {
        std::stringstream in(bytes.substr(0, bytes.size() - 4));
        CHECK_THROWS_AS(read_ibrt(in), FormatError);
    }
    SUBCASE("unknown dtype code") {
        std::string corrupt = bytes;
        corrupt[5] = 7;
        std::stringstream in(corrupt);
        CHECK_THROWS_AS(read_ibrt(in), FormatError);
    }
}

TEST_CASE("IBRT file save/load") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "ibrt_test";
    fs::create_directories(dir);
    Tensor t = Tensor::from_ints({5}, {1, 0, 1, 1, 0}, Dtype::Bit);
    save_ibrt((dir / "t.ibrt").string(), t);
    CHECK(load_ibrt((dir / "t.ibrt").string()).equals(t));
    CHECK_THROWS_AS(load_ibrt((dir / "missing.ibrt").string()), FormatError);
}
