#pragma once

#include <string>

#include "ibra/graph.hpp"

namespace ibra {

// Checkpoint layout: <dir>/manifest.json plus one IBRT blob per parameter
// tensor. The manifest records architecture, neuron configs, mode and the
// blob names; loading validates declared shapes against blob dims.
void save_checkpoint(const LayerGraph& g, const std::string& dir);
LayerGraph load_checkpoint(const std::string& dir);

// Exact comparison (mode, architecture, bitwise tensor data).
bool graphs_equal(const LayerGraph& a, const LayerGraph& b);

}  // namespace ibra
