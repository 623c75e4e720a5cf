#include <filesystem>
#include <map>

#include "doctest.h"
#include "ibra/data.hpp"
#include "testutil.hpp"

using namespace ibra;
namespace fs = std::filesystem;

TEST_CASE("same seed generates identical datasets") {
    Rng a(7), b(7);
    Dataset da = make_blobs(200, 2, 0.5, a);
    Dataset db = make_blobs(200, 2, 0.5, b);
    CHECK(da.features.equals(db.features));
    CHECK(da.labels == db.labels);
}

TEST_CASE("empty dataset is valid") {
    Rng rng(1);
    Dataset ds = make_blobs(0, 2, 0.5, rng);
    CHECK(ds.size() == 0);
    fs::path dir = fs::temp_directory_path() / "ibra_data_empty";
    fs::remove_all(dir);
    save_dataset(dir.string(), ds);
    Dataset back = load_dataset(dir.string());
    CHECK(back.size() == 0);
    CHECK(back.num_classes == 2);
}

TEST_CASE("digit labels are balanced within one") {
    Rng rng(13);
    Dataset ds = make_digits(203, 0.05, rng);
    std::map<int, int> counts;
    for (int l : ds.labels) ++counts[l];
    int lo = 1 << 30, hi = 0;
    for (auto& [cls, n] : counts) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    CHECK(counts.size() == 10);
    CHECK(hi - lo <= 1);
    CHECK(ds.sample_shape() == Shape{1, 8, 8});
}

TEST_CASE("moons gives two balanced classes") {
    Rng rng(17);
    Dataset ds = make_moons(101, 0.05, rng);
    int ones = 0;
    for (int l : ds.labels) ones += l;
    CHECK(std::abs(2 * ones - 101) <= 1);
}

TEST_CASE("dataset save/load round-trips") {
    Rng rng(19);
    Dataset ds = make_digits(30, 0.1, rng);
    fs::path dir = fs::temp_directory_path() / "ibra_data_rt";
    fs::remove_all(dir);
    save_dataset(dir.string(), ds);
    Dataset back = load_dataset(dir.string());
    CHECK(back.features.equals(ds.features));
    CHECK(back.labels == ds.labels);
    CHECK(back.num_classes == 10);
}

TEST_CASE("split is deterministic and partitions the data") {
    Rng rng(23);
    Dataset ds = make_blobs(100, 3, 0.4, rng);
    Rng s1(5), s2(5);
    auto [tr1, te1] = split_dataset(ds, 0.8, s1);
    auto [tr2, te2] = split_dataset(ds, 0.8, s2);
    CHECK(tr1.features.equals(tr2.features));
    CHECK(te1.features.equals(te2.features));
    CHECK(tr1.size() == 80);
    CHECK(te1.size() == 20);
}

TEST_CASE("gather stacks the requested rows") {
    Rng rng(29);
    Dataset ds = make_blobs(10, 2, 0.3, rng);
    Tensor two = ds.gather({3, 7});
    CHECK(two.shape() == Shape{2, 2});
    CHECK(two.reals()[0] == ds.features.reals()[6]);
    CHECK(two.reals()[2] == ds.features.reals()[14]);
}
