// Command-line front door: dataset generation, training, lowering, inference,
// equivalence verification, energy reporting and the range/gradient
// diagnostics. Exit codes: 0 ok, 1 usage error, 2 verification failure,
// 3 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ibra/checkpoint.hpp"
#include "ibra/data.hpp"
#include "ibra/diag.hpp"
#include "ibra/energy.hpp"
#include "ibra/error.hpp"
#include "ibra/graph.hpp"
#include "ibra/lowering.hpp"
#include "ibra/neuron.hpp"
#include "ibra/optim.hpp"
#include "ibra/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ibra;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerification = 2;
constexpr int kExitNumeric = 3;

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw UsageError("cannot write " + path.string());
    f << content;
}

// Settings shared across subcommands. A config file (--config or the
// IBRA_CONFIG environment variable) overrides flag values, flags override
// defaults; the resolved result is dumped next to every run's outputs.
struct RunConfig {
    uint64_t seed = 1;
    std::string out;
    std::string dataset;
    std::string generator = "blobs";
    int64_t count = 200;
    int classes = 2;
    double noise = 0.4;

    std::string arch = "mlp";
    std::string neuron = "ibra";
    double d_max = 5.11;
    int64_t scale_n = 100;
    double alpha = 1.0;
    double v_th = 1.0;
    int timesteps = 1;
    std::string encoding = "direct";

    std::string optimizer = "adam";
    double lr = 0.01;
    int epochs = 30;
    int batch = 32;
    double train_frac = 0.8;

    double tol = 1e-5;
    int verify_samples = 32;
    double e_mac = 4.6;
    double e_ac = 0.9;
    int energy_samples = 16;

    std::string checkpoint;
    std::string trained;
    std::string lowered;
    std::string baseline_checkpoint;
    std::string config_path;

    void apply_json(const json& j) {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("seed", seed);
        get("out", out);
        get("dataset", dataset);
        get("generator", generator);
        get("count", count);
        get("classes", classes);
        get("noise", noise);
        get("arch", arch);
        get("neuron", neuron);
        get("d_max", d_max);
        get("scale_n", scale_n);
        get("alpha", alpha);
        get("v_th", v_th);
        get("timesteps", timesteps);
        get("encoding", encoding);
        get("optimizer", optimizer);
        get("lr", lr);
        get("epochs", epochs);
        get("batch", batch);
        get("train_frac", train_frac);
        get("tol", tol);
        get("verify_samples", verify_samples);
        get("e_mac", e_mac);
        get("e_ac", e_ac);
        get("energy_samples", energy_samples);
        get("checkpoint", checkpoint);
        get("trained", trained);
        get("lowered", lowered);
        get("baseline_checkpoint", baseline_checkpoint);
    }

    json to_json() const {
        json j;
        j["seed"] = seed;
        j["out"] = out;
        j["dataset"] = dataset;
        j["generator"] = generator;
        j["count"] = count;
        j["classes"] = classes;
        j["noise"] = noise;
        j["arch"] = arch;
        j["neuron"] = neuron;
        j["d_max"] = d_max;
        j["scale_n"] = scale_n;
        j["alpha"] = alpha;
        j["v_th"] = v_th;
        j["timesteps"] = timesteps;
        j["encoding"] = encoding;
        j["optimizer"] = optimizer;
        j["lr"] = lr;
        j["epochs"] = epochs;
        j["batch"] = batch;
        j["train_frac"] = train_frac;
        j["tol"] = tol;
        j["verify_samples"] = verify_samples;
        j["e_mac"] = e_mac;
        j["e_ac"] = e_ac;
        j["energy_samples"] = energy_samples;
        j["checkpoint"] = checkpoint;
        j["trained"] = trained;
        j["lowered"] = lowered;
        j["baseline_checkpoint"] = baseline_checkpoint;
        return j;
    }
};

void resolve_config(RunConfig& cfg) {
    std::string path = cfg.config_path;
    if (path.empty()) {
        const char* env = std::getenv("IBRA_CONFIG");
        if (env) path = env;
    }
    if (path.empty()) return;
    std::ifstream f(path);
    if (!f) throw UsageError("config file not found: " + path);
    cfg.apply_json(json::parse(f));
}

void dump_resolved(const RunConfig& cfg, const std::string& command) {
    if (cfg.out.empty()) return;
    json j = cfg.to_json();
    j["command"] = command;
    write_text(fs::path(cfg.out) / "resolved_config.json", j.dump(2) + "\n");
}

NeuronConfig neuron_from(const RunConfig& cfg) {
    NeuronKind kind = neuron_kind_from_name(cfg.neuron);
    NeuronConfig c;
    switch (kind) {
        case NeuronKind::Lif: c = lif_config(cfg.alpha, cfg.v_th, cfg.timesteps); break;
        case NeuronKind::ILif: c = ilif_config(cfg.d_max, cfg.alpha, cfg.timesteps); break;
        case NeuronKind::IbraLif:
            c = ibra_config(cfg.d_max, cfg.scale_n, cfg.alpha, cfg.timesteps);
            break;
    }
    c.validate();
    return c;
}

std::vector<Tensor> corpus_from_dataset(const Dataset& ds, int max_samples) {
    std::vector<Tensor> corpus;
    int64_t n = std::min<int64_t>(ds.size(), max_samples);
    for (int64_t i = 0; i < n; ++i) corpus.push_back(ds.sample(i));
    return corpus;
}

std::vector<Tensor> synthetic_corpus(const Shape& shape, int samples, uint64_t seed) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<Tensor> corpus;
    for (int i = 0; i < samples; ++i) {
        Tensor t = Tensor::zeros(shape, Dtype::Real);
        for (double& v : t.reals()) v = rng.normal();
        corpus.push_back(std::move(t));
    }
    return corpus;
}

std::string equivalence_json(const EquivalenceReport& rep) {
    json j;
    j["pass"] = rep.pass;
    j["max_abs_diff"] = rep.max_abs_diff;
    j["max_rel_diff"] = rep.max_rel_diff;
    j["tol"] = rep.tol;
    j["samples"] = rep.samples;
    j["first_divergence"] = rep.first_divergence;
    j["rel_diff_denominator"] = "max(|a|,|b|,1e-6)";
    return j.dump(2) + "\n";
}

// --- train / grad-report ------------------------------------------------------

struct TrainResult {
    LayerGraph graph;
    std::string metrics_csv;
    std::string grad_csv;
    double final_train_acc = 0.0;
    double test_acc = 0.0;
    bool nonfinite = false;
    std::string nonfinite_detail;
};

TrainResult run_training(const RunConfig& cfg) {
    Dataset full = load_dataset(cfg.dataset);
    Rng split_rng(cfg.seed);
    auto [train_ds, test_ds] = split_dataset(full, cfg.train_frac, split_rng);

    NeuronConfig ncfg = neuron_from(cfg);
    LayerGraph g = build_preset(cfg.arch, full.sample_shape(), full.num_classes, ncfg);
    if (cfg.encoding == "spike") g.encoding = Encoding::SpikeFirstLayer;
    Rng rng(cfg.seed + 1);
    init_params(g, rng);

    auto opt = make_optimizer(cfg.optimizer, cfg.lr);
    auto names = g.param_names();

    std::string header = "epoch,loss,accuracy";
    for (const std::string& n : names) header += ",grad_max_" + n;
    TrainResult result;
    result.metrics_csv = header + "\n";
    result.grad_csv = header + ",nonfinite\n";

    TrainOptions options;
    options.batch_size = cfg.batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochMetrics m;
        try {
            m = train_epoch(g, train_ds, *opt, rng, options);
        } catch (const NumericError& e) {
            result.nonfinite = true;
            result.nonfinite_detail = e.what();
            result.grad_csv += std::to_string(epoch) + ",nan,nan";
            for (size_t i = 0; i < names.size(); ++i) result.grad_csv += ",nan";
            result.grad_csv += ",1\n";
            break;
        }
        std::string row = std::to_string(epoch) + "," + fmt_g(m.mean_loss) + "," +
                          fmt_g(m.accuracy);
        for (double gmax : m.grad_max) row += "," + fmt_g(gmax);
        result.metrics_csv += row + "\n";
        result.grad_csv += row + ",0\n";
        result.final_train_acc = m.accuracy;
    }
    if (!result.nonfinite && test_ds.size() > 0)
        result.test_acc = evaluate_accuracy(g, test_ds);
    result.graph = std::move(g);
    return result;
}

// --- subcommand bodies ----------------------------------------------------------

int cmd_gen_data(RunConfig& cfg) {
    Rng rng(cfg.seed);
    Dataset ds = make_dataset(cfg.generator, cfg.count, cfg.classes, cfg.noise, rng);
    save_dataset(cfg.out, ds);
    dump_resolved(cfg, "gen-data");
    std::cout << "wrote " << ds.size() << " samples (" << ds.num_classes << " classes) to "
              << cfg.out << "\n";
    return kExitOk;
}

int cmd_train(RunConfig& cfg, bool grad_report) {
    TrainResult r = run_training(cfg);
    fs::create_directories(cfg.out);
    dump_resolved(cfg, grad_report ? "grad-report" : "train");
    if (grad_report) {
        write_text(fs::path(cfg.out) / "grad_report.csv", r.grad_csv);
    } else {
        write_text(fs::path(cfg.out) / "metrics.csv", r.metrics_csv);
    }
    if (r.nonfinite) {
        write_text(fs::path(cfg.out) / "nonfinite_report.txt", r.nonfinite_detail + "\n");
        std::cerr << "training aborted: " << r.nonfinite_detail << "\n";
        return kExitNumeric;
    }
    save_checkpoint(r.graph, (fs::path(cfg.out) / "checkpoint").string());
    json summary;
    summary["train_accuracy"] = r.final_train_acc;
    summary["test_accuracy"] = r.test_acc;
    write_text(fs::path(cfg.out) / "summary.json", summary.dump(2) + "\n");
    std::cout << "train_accuracy " << fmt_g(r.final_train_acc) << " test_accuracy "
              << fmt_g(r.test_acc) << "\n";
    return kExitOk;
}

int cmd_lower(RunConfig& cfg) {
    LayerGraph trained = load_checkpoint(cfg.checkpoint);
    LayerGraph low = lower_graph(trained);
    fs::create_directories(cfg.out);
    save_checkpoint(low, (fs::path(cfg.out) / "checkpoint").string());
    dump_resolved(cfg, "lower");

    std::vector<Tensor> corpus =
        cfg.dataset.empty()
            ? synthetic_corpus(trained.input_shape, cfg.verify_samples, cfg.seed)
            : corpus_from_dataset(load_dataset(cfg.dataset), cfg.verify_samples);
    EquivalenceReport rep = verify_equivalence(trained, low, corpus, cfg.tol);
    write_text(fs::path(cfg.out) / "equivalence_report.json", equivalence_json(rep));

    AuditReport audit = audit_accumulate_only(low);
    std::string audit_text =
        std::string("accumulate-only audit: ") + (audit.pass ? "pass" : "FAIL") + "\n";
    for (const std::string& line : audit.lines) audit_text += line + "\n";
    write_text(fs::path(cfg.out) / "audit_report.txt", audit_text);

    std::cout << "equivalence max_rel_diff " << fmt_g(rep.max_rel_diff) << " (tol "
              << fmt_g(rep.tol) << ") -> " << (rep.pass ? "pass" : "FAIL") << "\n";
    if (!audit.pass) {
        std::cerr << "accumulate-only audit failed\n";
        return kExitVerification;
    }
    return rep.pass ? kExitOk : kExitVerification;
}

int cmd_infer(RunConfig& cfg) {
    LayerGraph g = load_checkpoint(cfg.checkpoint);
    Dataset ds = load_dataset(cfg.dataset);
    fs::create_directories(cfg.out);
    dump_resolved(cfg, "infer");

    std::string csv = "index,label,prediction\n";
    int64_t correct = 0;
    for (int64_t i = 0; i < ds.size(); ++i) {
        Tensor sample = ds.sample(i);
        Shape batched = sample.shape();
        batched.insert(batched.begin(), 1);
        Tensor input = sample.reshaped(batched);
        Tensor logits = g.mode == GraphMode::Training
                            ? eval_forward(g, input).mean_logits
                            : lowered_forward(g, input).mean_logits;
        auto ls = logits.reals();
        int64_t best = 0;
        for (int64_t j = 1; j < logits.dim(1); ++j)
            if (ls[static_cast<size_t>(j)] > ls[static_cast<size_t>(best)]) best = j;
        if (static_cast<int>(best) == ds.labels[static_cast<size_t>(i)]) ++correct;
        csv += std::to_string(i) + "," + std::to_string(ds.labels[static_cast<size_t>(i)]) + "," +
               std::to_string(best) + "\n";
    }
    write_text(fs::path(cfg.out) / "predictions.csv", csv);
    double acc = ds.size() ? static_cast<double>(correct) / static_cast<double>(ds.size()) : 0.0;
    json summary;
    summary["accuracy"] = acc;
    summary["count"] = ds.size();
    write_text(fs::path(cfg.out) / "summary.json", summary.dump(2) + "\n");
    std::cout << "accuracy " << fmt_g(acc) << " over " << ds.size() << " samples\n";
    return kExitOk;
}

int cmd_verify(RunConfig& cfg) {
    LayerGraph trained = load_checkpoint(cfg.trained);
    LayerGraph low = load_checkpoint(cfg.lowered);
    std::vector<Tensor> corpus =
        cfg.dataset.empty()
            ? synthetic_corpus(trained.input_shape, cfg.verify_samples, cfg.seed)
            : corpus_from_dataset(load_dataset(cfg.dataset), cfg.verify_samples);
    EquivalenceReport rep = verify_equivalence(trained, low, corpus, cfg.tol);
    if (!cfg.out.empty()) {
        dump_resolved(cfg, "verify");
        write_text(fs::path(cfg.out) / "equivalence_report.json", equivalence_json(rep));
    }
    std::cout << "max_abs_diff " << fmt_g(rep.max_abs_diff) << " max_rel_diff "
              << fmt_g(rep.max_rel_diff) << " -> " << (rep.pass ? "pass" : "FAIL") << "\n";
    return rep.pass ? kExitOk : kExitVerification;
}

int cmd_energy(RunConfig& cfg) {
    LayerGraph trained = load_checkpoint(cfg.trained);
    LayerGraph low = load_checkpoint(cfg.lowered);
    Dataset ds = load_dataset(cfg.dataset);
    std::vector<Tensor> corpus = corpus_from_dataset(ds, cfg.energy_samples);
    EnergyModel model{cfg.e_mac, cfg.e_ac};
    ModeComparison cmp = compare_modes(trained, low, corpus, model);

    fs::create_directories(cfg.out);
    dump_resolved(cfg, "energy");
    std::string table = render_energy_table(cmp, model);
    write_text(fs::path(cfg.out) / "energy_table.txt", table);
    const char* names[4] = {"relu", "lif", "ilif-unary", "ibra-bitplane"};
    for (int i = 0; i < 4; ++i) {
        const LayerGraph& graph_for = i == 0 ? trained : low;
        write_text(fs::path(cfg.out) / ("energy_" + std::string(names[i]) + ".csv"),
                   energy_exclusions_header() +
                       render_ledger_csv(cmp.ledgers[i], graph_for, model));
    }
    std::cout << table;
    return kExitOk;
}

int cmd_range_report(RunConfig& cfg) {
    LayerGraph g = load_checkpoint(cfg.checkpoint);
    if (g.mode != GraphMode::Training)
        throw UsageError("range-report expects a training-mode checkpoint");
    Dataset ds = load_dataset(cfg.dataset);
    fs::create_directories(cfg.out);
    dump_resolved(cfg, "range-report");

    RangeCoverageReport rep = range_coverage(g, ds);
    write_text(fs::path(cfg.out) / "coverage_summary.csv", render_coverage_summary_csv(rep));
    for (const LayerCoverage& c : rep.layers)
        write_text(fs::path(cfg.out) / ("hist_l" + std::to_string(c.layer_idx) + ".csv"),
                   render_coverage_histogram_csv(c));

    if (!cfg.baseline_checkpoint.empty()) {
        LayerGraph base = load_checkpoint(cfg.baseline_checkpoint);
        RangeCoverageReport base_rep = range_coverage(base, ds);
        write_text(fs::path(cfg.out) / "baseline_coverage_summary.csv",
                   render_coverage_summary_csv(base_rep));
        for (const LayerCoverage& c : base_rep.layers)
            write_text(fs::path(cfg.out) /
                           ("baseline_hist_l" + std::to_string(c.layer_idx) + ".csv"),
                       render_coverage_histogram_csv(c));
        std::string comparison = "layer,coverage,baseline_coverage,aligned_not_worse\n";
        size_t n = std::min(rep.layers.size(), base_rep.layers.size());
        for (size_t i = 0; i < n; ++i) {
            char line[128];
            std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,%d\n", rep.layers[i].layer_idx,
                          rep.layers[i].coverage, base_rep.layers[i].coverage,
                          rep.layers[i].coverage >= base_rep.layers[i].coverage ? 1 : 0);
            comparison += line;
        }
        write_text(fs::path(cfg.out) / "coverage_comparison.csv", comparison);
    }
    std::cout << render_coverage_summary_csv(rep);
    return kExitOk;
}

void add_common(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--seed", cfg.seed, "deterministic seed");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--config", cfg.config_path,
                    "JSON config; its values override command-line flags");
}

void add_neuron_flags(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--neuron", cfg.neuron, "neuron kind: lif | ilif | ibra");
    sub->add_option("--d-max", cfg.d_max, "maximum emitted value D");
    sub->add_option("--scale-n", cfg.scale_n, "range-alignment factor N");
    sub->add_option("--alpha", cfg.alpha, "membrane decay");
    sub->add_option("--v-th", cfg.v_th, "lif threshold");
    sub->add_option("--timesteps", cfg.timesteps, "timesteps T");
    sub->add_option("--encoding", cfg.encoding, "direct | spike");
}

void add_train_flags(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--optimizer", cfg.optimizer, "sgd | adam");
    sub->add_option("--lr", cfg.lr, "learning rate");
    sub->add_option("--epochs", cfg.epochs, "epochs");
    sub->add_option("--batch", cfg.batch, "batch size");
    sub->add_option("--train-frac", cfg.train_frac, "train split fraction");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"integer binary range-aligned spiking network engine"};
    app.require_subcommand(1);
    RunConfig cfg;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen, cfg);
    gen->add_option("--generator", cfg.generator, "blobs | moons | digits");
    gen->add_option("--n", cfg.count, "sample count");
    gen->add_option("--classes", cfg.classes, "class count (blobs)");
    gen->add_option("--noise", cfg.noise, "noise / spread");

    CLI::App* train = app.add_subcommand("train", "train a network");
    add_common(train, cfg);
    add_neuron_flags(train, cfg);
    add_train_flags(train, cfg);
    train->add_option("--dataset", cfg.dataset, "dataset directory")->required();
    train->add_option("--arch", cfg.arch, "mlp | cnn | mlp-spike | ann-mlp | ann-cnn");

    CLI::App* lower = app.add_subcommand("lower", "lower a trained checkpoint");
    add_common(lower, cfg);
    lower->add_option("--checkpoint", cfg.checkpoint, "trained checkpoint")->required();
    lower->add_option("--dataset", cfg.dataset, "held-out corpus for verification");
    lower->add_option("--tol", cfg.tol, "equivalence tolerance");
    lower->add_option("--verify-samples", cfg.verify_samples, "verification sample count");

    CLI::App* infer = app.add_subcommand("infer", "run inference on a dataset");
    add_common(infer, cfg);
    infer->add_option("--checkpoint", cfg.checkpoint, "checkpoint (either mode)")->required();
    infer->add_option("--dataset", cfg.dataset, "dataset directory")->required();

    CLI::App* verify = app.add_subcommand("verify", "verify train/lowered equivalence");
    add_common(verify, cfg);
    verify->add_option("--trained", cfg.trained, "training-mode checkpoint")->required();
    verify->add_option("--lowered", cfg.lowered, "lowered checkpoint")->required();
    verify->add_option("--dataset", cfg.dataset, "corpus (defaults to synthetic)");
    verify->add_option("--tol", cfg.tol, "equivalence tolerance");
    verify->add_option("--verify-samples", cfg.verify_samples, "sample count");

    CLI::App* energy = app.add_subcommand("energy", "energy comparison table");
    add_common(energy, cfg);
    energy->add_option("--trained", cfg.trained, "training-mode checkpoint")->required();
    energy->add_option("--lowered", cfg.lowered, "lowered checkpoint")->required();
    energy->add_option("--dataset", cfg.dataset, "dataset directory")->required();
    energy->add_option("--e-mac", cfg.e_mac, "energy per MAC (pJ)");
    energy->add_option("--e-ac", cfg.e_ac, "energy per AC (pJ)");
    energy->add_option("--samples", cfg.energy_samples, "corpus sample count");

    CLI::App* range = app.add_subcommand("range-report", "emitted-value coverage report");
    add_common(range, cfg);
    range->add_option("--checkpoint", cfg.checkpoint, "training-mode checkpoint")->required();
    range->add_option("--dataset", cfg.dataset, "dataset directory")->required();
    range->add_option("--baseline-checkpoint", cfg.baseline_checkpoint,
                      "paired run without alignment (N=1)");

    CLI::App* grad = app.add_subcommand("grad-report", "per-layer gradient magnitude timeline");
    add_common(grad, cfg);
    add_neuron_flags(grad, cfg);
    add_train_flags(grad, cfg);
    grad->add_option("--dataset", cfg.dataset, "dataset directory")->required();
    grad->add_option("--arch", cfg.arch, "architecture preset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        resolve_config(cfg);
        if (gen->parsed()) return cmd_gen_data(cfg);
        if (train->parsed()) return cmd_train(cfg, false);
        if (lower->parsed()) return cmd_lower(cfg);
        if (infer->parsed()) return cmd_infer(cfg);
        if (verify->parsed()) return cmd_verify(cfg);
        if (energy->parsed()) return cmd_energy(cfg);
        if (range->parsed()) return cmd_range_report(cfg);
        if (grad->parsed()) return cmd_train(cfg, true);
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const GraphError& e) {
        std::cerr << "graph error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
