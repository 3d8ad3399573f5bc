#pragma once

#include <iosfwd>

#include "travag/network.hpp"

namespace travag {

/// Writes a network as a JSON document {format_version, seed, layers,
/// weights, biases}. Doubles round-trip exactly (shortest-representation
/// decimal encoding).
void save_network(const Network& net, std::ostream& out);

/// Inverse of save_network. Throws FormatError on schema or version
/// mismatches.
Network load_network(std::istream& in);

}  // namespace travag
