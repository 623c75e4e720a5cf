#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ibra/tensor.hpp"

namespace ibra {

using NodeId = int32_t;
inline constexpr NodeId kNoNode = -1;

class Tape;
struct TapeEntry;

// Returns one gradient per input, aligned with entry.inputs. An empty Tensor
// marks an input that takes no gradient (e.g. integer labels).
using BackwardFn =
    std::function<std::vector<Tensor>(const Tape&, const TapeEntry&, const Tensor& upstream)>;

struct TapeEntry {
    std::string op;
    std::vector<NodeId> inputs;
    NodeId output;
    BackwardFn backward;
};

using GradMap = std::unordered_map<NodeId, Tensor>;

// Records forward operations in order; backward replays them strictly in
// reverse, accumulating gradients per tensor id. A weight consumed at several
// timesteps receives the sum of its per-use contributions.
class Tape {
public:
    NodeId leaf(Tensor value);
    NodeId record(std::string op, std::vector<NodeId> inputs, Tensor output, BackwardFn backward);

    const Tensor& value(NodeId id) const { return values_.at(static_cast<size_t>(id)); }
    size_t num_values() const { return values_.size(); }
    size_t num_entries() const { return entries_.size(); }
    const TapeEntry& entry(size_t i) const { return entries_[i]; }

    GradMap backward(NodeId loss) const;

private:
    std::vector<Tensor> values_;
    std::vector<TapeEntry> entries_;
};

}  // namespace ibra
