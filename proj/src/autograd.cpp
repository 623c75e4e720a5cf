#include "ibra/autograd.hpp"

#include "ibra/error.hpp"

namespace ibra {

NodeId Tape::leaf(Tensor value) {
    values_.push_back(std::move(value));
    return static_cast<NodeId>(values_.size() - 1);
}

NodeId Tape::record(std::string op, std::vector<NodeId> inputs, Tensor output, BackwardFn backward) {
    NodeId out = static_cast<NodeId>(values_.size());
    for (NodeId in : inputs) {
        if (in < 0 || in >= out)
            throw TensorError("tape: op '" + op + "' consumes id " + std::to_string(in) +
                              " which does not precede it");
    }
    values_.push_back(std::move(output));
    entries_.push_back(TapeEntry{std::move(op), std::move(inputs), out, std::move(backward)});
    return out;
}

GradMap Tape::backward(NodeId loss) const {
    if (loss < 0 || static_cast<size_t>(loss) >= values_.size())
        throw TensorError("backward: unknown loss id");
    const Tensor& loss_val = values_[static_cast<size_t>(loss)];
    if (loss_val.numel() != 1 || loss_val.dtype() != Dtype::Real)
        throw TensorError("backward: loss must be a real scalar, got shape " +
                          shape_str(loss_val.shape()));

    GradMap grads;
    grads[loss] = Tensor::full(loss_val.shape(), 1.0);

    for (size_t i = entries_.size(); i-- > 0;) {
        const TapeEntry& e = entries_[i];
        auto it = grads.find(e.output);
        if (it == grads.end()) continue;
        if (!e.backward) continue;
        std::vector<Tensor> input_grads = e.backward(*this, e, it->second);
        if (input_grads.size() != e.inputs.size())
            throw TensorError("tape: op '" + e.op + "' returned " +
                              std::to_string(input_grads.size()) + " gradients for " +
                              std::to_string(e.inputs.size()) + " inputs");
        for (size_t k = 0; k < e.inputs.size(); ++k) {
            Tensor& g = input_grads[k];
            if (g.numel() == 0) continue;  // no gradient for this input
            NodeId id = e.inputs[k];
            auto slot = grads.find(id);
            if (slot == grads.end()) {
                grads.emplace(id, std::move(g));
            } else {
                Tensor& acc = slot->second;
                auto a = acc.reals();
                auto b = g.reals();
                for (size_t j = 0; j < a.size(); ++j) a[j] += b[j];
            }
        }
    }
    return grads;
}

}  // namespace ibra
