#pragma once

// Model checkpoint container: one JSON document holding the architecture,
// head type, weight kind, every parameter array (mu/rho for variational
// slots), the normaliser statistics and the hash of the training config.
// Doubles are written in shortest round-trip form, so save/load is exact.

#include <string>
#include <string_view>

#include "uqfire/layers.hpp"
#include "uqfire/network.hpp"

namespace uqfire {

struct Checkpoint {
  Model model;
  Normalizer normalizer;
  std::string variant;
  std::string config_hash;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view text);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace uqfire
