#pragma once

#include "metapomdp/net.hpp"

#include <string>

namespace metapomdp::net {

// Checkpoint layout (all integers little-endian uint32, values float64):
//   magic "MPCK", version (1), tensor count
//   per tensor: name length, name bytes, rows, cols, rows*cols values in row-major order
// Tensors appear in NetTensors::visit order.

void save_checkpoint(const AgentParams& params, const std::string& path);

/// Throws IoError on unreadable or malformed files.
AgentParams load_checkpoint(const std::string& path);

}  // namespace metapomdp::net
