#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ibra/rng.hpp"
#include "ibra/tensor.hpp"

namespace ibra {

struct Dataset {
    Tensor features;  // [n, ...sample shape]
    std::vector<int> labels;
    int num_classes = 0;

    int64_t size() const { return features.rank() > 0 ? features.dim(0) : 0; }
    Shape sample_shape() const;
    // Gathers rows into a [batch, ...sample] tensor.
    Tensor gather(const std::vector<int64_t>& indices) const;
    Tensor sample(int64_t i) const;
};

// Gaussian clusters on a circle, k classes in 2-D.
Dataset make_blobs(int64_t n, int k, double spread, Rng& rng);
// Two interleaved half-circles.
Dataset make_moons(int64_t n, double noise, Rng& rng);
// Procedural 8x8 digit glyphs with brightness jitter, pixel noise and
// one-pixel shifts; 10 classes, shape [1,8,8].
Dataset make_digits(int64_t n, double noise, Rng& rng);

Dataset make_dataset(const std::string& generator, int64_t n, int k, double noise, Rng& rng);

void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

// Deterministic split: shuffles indices with the given rng, then cuts.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_frac, Rng& rng);

}  // namespace ibra
