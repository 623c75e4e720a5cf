#pragma once

#include <cstdint>

#include "ibra/tensor.hpp"

namespace ibra {

// Observer for neuron firing streams; receives the scaled integer
// activations k = O*N per neuron layer and timestep.
struct ActivationProbe {
    virtual ~ActivationProbe() = default;
    virtual void on_neuron(size_t layer_idx, int t, const Tensor& scaled) = 0;
};

// Observer for synaptic operations. Counting never changes numerical
// results; executors call these from their inner loops or with closed-form
// counts that equal the loop count.
struct SynapticCounter {
    virtual ~SynapticCounter() = default;
    virtual void add_macs(size_t layer_idx, int t, int64_t count) = 0;
    virtual void add_acs(size_t layer_idx, int t, int plane, int64_t count) = 0;
};

}  // namespace ibra
