#pragma once

// Parameter checkpoints.
//
// Text format, one record per line:
//
//   haven-checkpoint 1
//   meta <key> <value...>
//   tensor <name> <rows> <cols>
//   <rows * cols values, space separated, shortest round-trip decimal>
//
// Values are written with std::to_chars so a save/load cycle is exact.

#include "haven/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace haven {

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double value);

}  // namespace haven
