#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ibra/checkpoint.hpp"
#include "ibra/io.hpp"
#include "ibra/lowering.hpp"
#include "ibra/rng.hpp"
#include "testutil.hpp"

using namespace ibra;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "ibra_ckpt" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

LayerGraph sample_graph() {
    Rng rng(3);
    LayerGraph g = build_preset("cnn", {1, 8, 8}, 10, ibra_config(5.11, 100));
    init_params(g, rng);
    // non-trivial running stats so the blobs are not all defaults
    for (Layer& l : g.layers) {
        if (l.kind != LayerKind::BatchNorm) continue;
        for (double& v : l.running_mean.reals()) v = rng.uniform(-0.4, 0.4);
        for (double& v : l.running_var.reals()) v = rng.uniform(0.6, 1.8);
    }
    return g;
}

}  // namespace

TEST_CASE("checkpoint round-trip is exact in both modes") {
    LayerGraph g = sample_graph();
    SUBCASE("training mode") {
        fs::path dir = fresh_dir("train");
        save_checkpoint(g, dir.string());
        LayerGraph back = load_checkpoint(dir.string());
        CHECK(graphs_equal(g, back));
    }
    SUBCASE("lowered mode") {
        LayerGraph low = lower_graph(g);
        fs::path dir = fresh_dir("lowered");
        save_checkpoint(low, dir.string());
        LayerGraph back = load_checkpoint(dir.string());
        CHECK(graphs_equal(low, back));
        CHECK(back.mode == GraphMode::Lowered);
        for (const Layer& l : back.layers)
            if (l.kind == LayerKind::Neuron) CHECK(l.lowered.planes == 9);
    }
}

TEST_CASE("corrupted blob magic is a format error") {
    LayerGraph g = sample_graph();
    fs::path dir = fresh_dir("magic");
    save_checkpoint(g, dir.string());
    {
        std::fstream f(dir / "b000_weight.ibrt",
                       std::ios::binary | std::ios::in | std::ios::out);
        f.put('X');
    }
    CHECK_THROWS_AS(load_checkpoint(dir.string()), FormatError);
}

TEST_CASE("missing blob is an integrity error") {
    LayerGraph g = sample_graph();
    fs::path dir = fresh_dir("missing");
    save_checkpoint(g, dir.string());
    fs::remove(dir / "b001_bias.ibrt");
    CHECK_THROWS_AS(load_checkpoint(dir.string()), FormatError);
}

TEST_CASE("manifest version mismatch is rejected") {
    LayerGraph g = sample_graph();
    fs::path dir = fresh_dir("version");
    save_checkpoint(g, dir.string());
    std::ifstream in(dir / "manifest.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    size_t pos = text.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 19, "\"format_version\": 2");
    std::ofstream out(dir / "manifest.json");
    out << text;
    out.close();
    CHECK_THROWS_AS(load_checkpoint(dir.string()), FormatError);
}

TEST_CASE("blob shape disagreeing with the manifest is rejected") {
    LayerGraph g = sample_graph();
    fs::path dir = fresh_dir("shape");
    save_checkpoint(g, dir.string());
    // overwrite the first weight blob with a wrong-shape tensor
    save_ibrt((dir / "b000_weight.ibrt").string(), Tensor::zeros({2, 2}, Dtype::Real));
    try {
        load_checkpoint(dir.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("shape") != std::string::npos);
    }
}

TEST_CASE("truncated blob is rejected") {
    LayerGraph g = sample_graph();
    fs::path dir = fresh_dir("trunc");
    save_checkpoint(g, dir.string());
    fs::path blob = dir / "b000_weight.ibrt";
    auto size = fs::file_size(blob);
    fs::resize_file(blob, size - 8);
    CHECK_THROWS_AS(load_checkpoint(dir.string()), FormatError);
}
