#include "ibra/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ibra/error.hpp"
#include "ibra/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace ibra {

namespace {

constexpr int kFormatVersion = 1;

json shape_to_json(const Shape& s) {
    json arr = json::array();
    for (int64_t d : s) arr.push_back(d);
    return arr;
}

Shape shape_from_json(const json& arr) {
    Shape s;
    for (const auto& v : arr) s.push_back(v.get<int64_t>());
    return s;
}

struct BlobWriter {
    fs::path dir;
    int counter = 0;
    json* blobs = nullptr;

    void put(const std::string& key, const Tensor& t) {
        char name[64];
        std::snprintf(name, sizeof(name), "b%03d_%s.ibrt", counter++, key.c_str());
        save_ibrt((dir / name).string(), t);
        (*blobs)[key] = name;
    }
};

Tensor load_blob(const fs::path& dir, const json& blobs, const std::string& key,
                 const Shape& expect) {
    if (!blobs.contains(key)) throw FormatError("checkpoint: manifest missing blob '" + key + "'");
    std::string name = blobs.at(key).get<std::string>();
    Tensor t = load_ibrt((dir / name).string());
    if (t.shape() != expect)
        throw FormatError("checkpoint: blob '" + name + "' has shape " + shape_str(t.shape()) +
                          " but manifest declares " + shape_str(expect));
    return t;
}

json neuron_cfg_to_json(const NeuronConfig& c) {
    json j;
    j["kind"] = neuron_kind_name(c.kind);
    j["alpha"] = c.alpha;
    j["v_th"] = c.v_th;
    j["d_max"] = c.d_max;
    j["scale_n"] = c.scale_n;
    j["timesteps"] = c.timesteps;
    return j;
}

NeuronConfig neuron_cfg_from_json(const json& j) {
    NeuronConfig c;
    c.kind = neuron_kind_from_name(j.at("kind").get<std::string>());
    c.alpha = j.at("alpha").get<double>();
    c.v_th = j.at("v_th").get<double>();
    c.d_max = j.at("d_max").get<double>();
    c.scale_n = j.at("scale_n").get<int64_t>();
    c.timesteps = j.at("timesteps").get<int>();
    return c;
}

}  // namespace

void save_checkpoint(const LayerGraph& g, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["mode"] = g.mode == GraphMode::Training ? "training" : "lowered";
    manifest["encoding"] = g.encoding == Encoding::Direct ? "direct" : "spike";
    manifest["timesteps"] = g.timesteps;
    manifest["input_shape"] = shape_to_json(g.input_shape);
    json layers = json::array();

    BlobWriter writer{fs::path(dir), 0, nullptr};
    for (size_t i = 0; i < g.layers.size(); ++i) {
        const Layer& l = g.layers[i];
        json jl;
        jl["type"] = layer_kind_name(l.kind);
        json blobs;
        writer.blobs = &blobs;
        switch (l.kind) {
            case LayerKind::Conv:
                jl["stride"] = l.stride;
                jl["padding"] = l.padding;
                jl["weight_shape"] = shape_to_json(l.weight.shape());
                writer.put("weight", l.weight);
                writer.put("bias", l.bias);
                break;
            case LayerKind::Linear:
                jl["head"] = l.head;
                jl["weight_shape"] = shape_to_json(l.weight.shape());
                writer.put("weight", l.weight);
                writer.put("bias", l.bias);
                break;
            case LayerKind::BatchNorm:
                jl["channels"] = l.gamma.numel();
                jl["eps"] = l.eps;
                jl["momentum"] = l.momentum;
                writer.put("gamma", l.gamma);
                writer.put("beta", l.beta);
                writer.put("running_mean", l.running_mean);
                writer.put("running_var", l.running_var);
                break;
            case LayerKind::Neuron:
                jl["config"] = neuron_cfg_to_json(l.cfg);
                if (g.mode == GraphMode::Lowered) {
                    json lw;
                    lw["expansion"] = expansion_name(l.lowered.expansion);
                    lw["scale_n"] = l.lowered.scale_n;
                    lw["planes"] = l.lowered.planes;
                    lw["plane_order"] = "lsb_first";
                    jl["lowered"] = lw;
                }
                break;
            case LayerKind::Pool:
                jl["k"] = l.pool_k;
                break;
            case LayerKind::Flatten:
                break;
            case LayerKind::Activation:
                jl["act"] = act_kind_name(l.act);
                jl["lo"] = l.clip_lo;
                jl["hi"] = l.clip_hi;
                break;
        }
        if (!blobs.empty()) jl["blobs"] = blobs;
        layers.push_back(jl);
    }
    manifest["layers"] = layers;

    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw FormatError("checkpoint: cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

LayerGraph load_checkpoint(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw FormatError("checkpoint: missing manifest.json in " + dir);
    json manifest = json::parse(f, nullptr, true);

    int version = manifest.at("format_version").get<int>();
    if (version != kFormatVersion)
        throw FormatError("checkpoint: format version " + std::to_string(version) +
                          " not supported (expected " + std::to_string(kFormatVersion) + ")");

    LayerGraph g;
    std::string mode = manifest.at("mode").get<std::string>();
    if (mode == "training")
        g.mode = GraphMode::Training;
    else if (mode == "lowered")
        g.mode = GraphMode::Lowered;
    else
        throw FormatError("checkpoint: unknown mode '" + mode + "'");
    g.encoding =
        manifest.at("encoding").get<std::string>() == "spike" ? Encoding::SpikeFirstLayer
                                                              : Encoding::Direct;
    g.timesteps = manifest.at("timesteps").get<int>();
    g.input_shape = shape_from_json(manifest.at("input_shape"));

    fs::path d(dir);
    for (const auto& jl : manifest.at("layers")) {
        std::string type = jl.at("type").get<std::string>();
        Layer l;
        if (type == "conv") {
            Shape ws = shape_from_json(jl.at("weight_shape"));
            if (ws.size() != 4) throw FormatError("checkpoint: conv weight_shape must be rank 4");
            l = make_conv(ws[1], ws[0], static_cast<int>(ws[2]), jl.at("stride").get<int>(),
                          jl.at("padding").get<int>());
            l.weight = load_blob(d, jl.at("blobs"), "weight", ws);
            l.bias = load_blob(d, jl.at("blobs"), "bias", {ws[0]});
        } else if (type == "linear") {
            Shape ws = shape_from_json(jl.at("weight_shape"));
            if (ws.size() != 2) throw FormatError("checkpoint: linear weight_shape must be rank 2");
            l = make_linear(ws[1], ws[0], jl.at("head").get<bool>());
            l.weight = load_blob(d, jl.at("blobs"), "weight", ws);
            l.bias = load_blob(d, jl.at("blobs"), "bias", {ws[0]});
        } else if (type == "batchnorm") {
            int64_t c = jl.at("channels").get<int64_t>();
            l = make_batchnorm(c, jl.at("eps").get<double>(), jl.at("momentum").get<double>());
            l.gamma = load_blob(d, jl.at("blobs"), "gamma", {c});
            l.beta = load_blob(d, jl.at("blobs"), "beta", {c});
            l.running_mean = load_blob(d, jl.at("blobs"), "running_mean", {c});
            l.running_var = load_blob(d, jl.at("blobs"), "running_var", {c});
        } else if (type == "neuron") {
            l = make_neuron(neuron_cfg_from_json(jl.at("config")));
            if (jl.contains("lowered")) {
                const json& lw = jl.at("lowered");
                l.lowered.expansion = expansion_from_name(lw.at("expansion").get<std::string>());
                l.lowered.scale_n = lw.at("scale_n").get<int64_t>();
                l.lowered.planes = lw.at("planes").get<int>();
            }
        } else if (type == "pool") {
            l = make_pool(jl.at("k").get<int>());
        } else if (type == "flatten") {
            l = make_flatten();
        } else if (type == "activation") {
            std::string act = jl.at("act").get<std::string>();
            ActKind k = act == "relu" ? ActKind::Relu
                                      : (act == "clip" ? ActKind::Clip : ActKind::Identity);
            l = make_activation(k, jl.at("lo").get<double>(), jl.at("hi").get<double>());
        } else {
            throw FormatError("checkpoint: unknown layer type '" + type + "'");
        }
        g.layers.push_back(std::move(l));
    }
    g.validate();
    return g;
}

bool graphs_equal(const LayerGraph& a, const LayerGraph& b) {
    if (a.mode != b.mode || a.encoding != b.encoding || a.timesteps != b.timesteps ||
        a.input_shape != b.input_shape || a.layers.size() != b.layers.size())
        return false;
    for (size_t i = 0; i < a.layers.size(); ++i) {
        const Layer& x = a.layers[i];
        const Layer& y = b.layers[i];
        if (x.kind != y.kind) return false;
        switch (x.kind) {
            case LayerKind::Conv:
            case LayerKind::Linear:
                if (x.stride != y.stride || x.padding != y.padding || x.head != y.head)
                    return false;
                if (!x.weight.equals(y.weight) || !x.bias.equals(y.bias)) return false;
                break;
            case LayerKind::BatchNorm:
                if (x.eps != y.eps || x.momentum != y.momentum) return false;
                if (!x.gamma.equals(y.gamma) || !x.beta.equals(y.beta) ||
                    !x.running_mean.equals(y.running_mean) ||
                    !x.running_var.equals(y.running_var))
                    return false;
                break;
            case LayerKind::Neuron:
                if (x.cfg.kind != y.cfg.kind || x.cfg.alpha != y.cfg.alpha ||
                    x.cfg.v_th != y.cfg.v_th || x.cfg.d_max != y.cfg.d_max ||
                    x.cfg.scale_n != y.cfg.scale_n || x.cfg.timesteps != y.cfg.timesteps)
                    return false;
                if (x.lowered.expansion != y.lowered.expansion ||
                    x.lowered.scale_n != y.lowered.scale_n || x.lowered.planes != y.lowered.planes)
                    return false;
                break;
            case LayerKind::Pool:
                if (x.pool_k != y.pool_k) return false;
                break;
            case LayerKind::Flatten:
                break;
            case LayerKind::Activation:
                if (x.act != y.act || x.clip_lo != y.clip_lo || x.clip_hi != y.clip_hi)
                    return false;
                break;
        }
    }
    return true;
}

}  // namespace ibra
