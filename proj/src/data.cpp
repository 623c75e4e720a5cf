#include "ibra/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ibra/error.hpp"
#include "ibra/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace ibra {

Shape Dataset::sample_shape() const {
    Shape s = features.shape();
    if (s.empty()) return {};
    s.erase(s.begin());
    return s;
}

Tensor Dataset::gather(const std::vector<int64_t>& indices) const {
    Shape ss = sample_shape();
    int64_t inner = numel_of(ss);
    Shape out_shape = ss;
    out_shape.insert(out_shape.begin(), static_cast<int64_t>(indices.size()));
    Tensor out = Tensor::zeros(out_shape, Dtype::Real);
    auto o = out.reals();
    auto xs = features.reals();
    for (size_t b = 0; b < indices.size(); ++b) {
        int64_t i = indices[b];
        for (int64_t j = 0; j < inner; ++j)
            o[b * static_cast<size_t>(inner) + static_cast<size_t>(j)] =
                xs[static_cast<size_t>(i * inner + j)];
    }
    return out;
}

Tensor Dataset::sample(int64_t i) const {
    Tensor row = gather({i});
    return row.reshaped(sample_shape());
}

namespace {

// Round-robin labels keep every class within +-1 of the others; a final
// joint shuffle removes the ordering.
void shuffle_joint(std::vector<double>& flat, int64_t inner, std::vector<int>& labels, Rng& rng) {
    int64_t n = static_cast<int64_t>(labels.size());
    for (int64_t i = n; i > 1; --i) {
        int64_t j = rng.uniform_int(0, i - 1);
        std::swap(labels[static_cast<size_t>(i - 1)], labels[static_cast<size_t>(j)]);
        for (int64_t c = 0; c < inner; ++c)
            std::swap(flat[static_cast<size_t>((i - 1) * inner + c)],
                      flat[static_cast<size_t>(j * inner + c)]);
    }
}

const char* const kDigitGlyphs[10][8] = {
    {"..####..", ".#....#.", "#......#", "#......#", "#......#", "#......#", ".#....#.", "..####.."},
    {"...##...", "..###...", ".#.##...", "...##...", "...##...", "...##...", "...##...", ".######."},
    {".#####..", "#.....#.", "......#.", ".....#..", "...##...", "..#.....", ".#......", "#######."},
    {".#####..", "#.....#.", "......#.", "..####..", "......#.", "......#.", "#.....#.", ".#####.."},
    {"....##..", "...#.#..", "..#..#..", ".#...#..", "#....#..", "#######.", ".....#..", ".....#.."},
    {"#######.", "#.......", "#.......", "######..", "......#.", "......#.", "#.....#.", ".#####.."},
    {"..####..", ".#......", "#.......", "######..", "#.....#.", "#.....#.", ".#....#.", "..####.."},
    {"#######.", "......#.", ".....#..", "....#...", "...#....", "..#.....", ".#......", ".#......"},
    {".#####..", "#.....#.", "#.....#.", ".#####..", "#.....#.", "#.....#.", "#.....#.", ".#####.."},
    {".#####..", "#.....#.", "#.....#.", ".######.", "......#.", "......#.", ".....#..", "..###..."},
};

}  // namespace

Dataset make_blobs(int64_t n, int k, double spread, Rng& rng) {
    if (k < 1) throw UsageError("blobs: need at least one class");
    std::vector<double> flat(static_cast<size_t>(n) * 2);
    std::vector<int> labels(static_cast<size_t>(n));
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (int64_t i = 0; i < n; ++i) {
        int cls = static_cast<int>(i % k);
        double angle = two_pi * cls / k;
        double cx = 2.5 * std::cos(angle), cy = 2.5 * std::sin(angle);
        flat[static_cast<size_t>(2 * i)] = cx + spread * rng.normal();
        flat[static_cast<size_t>(2 * i + 1)] = cy + spread * rng.normal();
        labels[static_cast<size_t>(i)] = cls;
    }
    shuffle_joint(flat, 2, labels, rng);
    Dataset ds;
    ds.features = Tensor::from_reals({n, 2}, std::move(flat));
    ds.labels = std::move(labels);
    ds.num_classes = k;
    return ds;
}

Dataset make_moons(int64_t n, double noise, Rng& rng) {
    std::vector<double> flat(static_cast<size_t>(n) * 2);
    std::vector<int> labels(static_cast<size_t>(n));
    const double pi = 3.14159265358979323846;
    for (int64_t i = 0; i < n; ++i) {
        int cls = static_cast<int>(i % 2);
        double t = pi * rng.uniform();
        double x, y;
        if (cls == 0) {
            x = std::cos(t);
            y = std::sin(t);
        } else {
            x = 1.0 - std::cos(t);
            y = 0.5 - std::sin(t);
        }
        flat[static_cast<size_t>(2 * i)] = x + noise * rng.normal();
        flat[static_cast<size_t>(2 * i + 1)] = y + noise * rng.normal();
        labels[static_cast<size_t>(i)] = cls;
    }
    shuffle_joint(flat, 2, labels, rng);
    Dataset ds;
    ds.features = Tensor::from_reals({n, 2}, std::move(flat));
    ds.labels = std::move(labels);
    ds.num_classes = 2;
    return ds;
}

Dataset make_digits(int64_t n, double noise, Rng& rng) {
    std::vector<double> flat(static_cast<size_t>(n) * 64);
    std::vector<int> labels(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int cls = static_cast<int>(i % 10);
        double brightness = rng.uniform(0.8, 1.2);
        int dy = static_cast<int>(rng.uniform_int(-1, 1));
        int dx = static_cast<int>(rng.uniform_int(-1, 1));
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                int sy = y - dy, sx = x - dx;
                double v = 0.0;
                if (sy >= 0 && sy < 8 && sx >= 0 && sx < 8 && kDigitGlyphs[cls][sy][sx] == '#')
                    v = brightness;
                v += noise * rng.normal();
                flat[static_cast<size_t>(i * 64 + y * 8 + x)] = v;
            }
        labels[static_cast<size_t>(i)] = cls;
    }
    shuffle_joint(flat, 64, labels, rng);
    Dataset ds;
    ds.features = Tensor::from_reals({n, 1, 8, 8}, std::move(flat));
    ds.labels = std::move(labels);
    ds.num_classes = 10;
    return ds;
}

Dataset make_dataset(const std::string& generator, int64_t n, int k, double noise, Rng& rng) {
    if (generator == "blobs") return make_blobs(n, k, noise, rng);
    if (generator == "moons") return make_moons(n, noise, rng);
    if (generator == "digits") return make_digits(n, noise, rng);
    throw UsageError("unknown dataset generator '" + generator +
                     "' (expected blobs, moons or digits)");
}

void save_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(dir);
    save_ibrt((fs::path(dir) / "features.ibrt").string(), ds.features);
    std::vector<int32_t> lab(ds.labels.begin(), ds.labels.end());
    int64_t n_labels = static_cast<int64_t>(lab.size());
    save_ibrt((fs::path(dir) / "labels.ibrt").string(),
              Tensor::from_ints({n_labels}, std::move(lab)));
    json meta;
    meta["num_classes"] = ds.num_classes;
    meta["count"] = ds.size();
    std::ofstream f(fs::path(dir) / "meta.json");
    f << meta.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    ds.features = load_ibrt((fs::path(dir) / "features.ibrt").string());
    Tensor lab = load_ibrt((fs::path(dir) / "labels.ibrt").string());
    ds.labels.assign(lab.ints().begin(), lab.ints().end());
    std::ifstream f(fs::path(dir) / "meta.json");
    if (!f) throw FormatError("dataset: missing meta.json in " + dir);
    json meta = json::parse(f);
    ds.num_classes = meta.at("num_classes").get<int>();
    if (static_cast<int64_t>(ds.labels.size()) != ds.size())
        throw FormatError("dataset: feature/label count mismatch in " + dir);
    return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_frac, Rng& rng) {
    int64_t n = ds.size();
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    rng.shuffle(idx);
    int64_t n_train = static_cast<int64_t>(std::llround(train_frac * static_cast<double>(n)));
    std::vector<int64_t> tr(idx.begin(), idx.begin() + n_train);
    std::vector<int64_t> te(idx.begin() + n_train, idx.end());

    auto build = [&](const std::vector<int64_t>& ids) {
        Dataset out;
        out.features = ds.gather(ids);
        out.labels.reserve(ids.size());
        for (int64_t i : ids) out.labels.push_back(ds.labels[static_cast<size_t>(i)]);
        out.num_classes = ds.num_classes;
        return out;
    };
    return {build(tr), build(te)};
}

}  // namespace ibra
