#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "puray/adam.hpp"
#include "puray/network.hpp"
#include "puray/param_store.hpp"

namespace puray {

struct OptimizerBlob {
  double lr = 0.005;
  std::uint64_t step_count = 0;
  ad::AdamConfig config;
  std::vector<std::vector<double>> m;  // aligned with the parameter order
  std::vector<std::vector<double>> v;
};

struct Checkpoint {
  NetConfig net;
  ad::ParamStore params;
  std::uint64_t seed = 1;
  int epoch = 0;
  std::optional<OptimizerBlob> optimizer;
};

Checkpoint make_checkpoint(const NetConfig& net, const ad::ParamStore& params,
                           std::uint64_t seed, int epoch,
                           const ad::AdamState* adam = nullptr);
// Overwrites lr, step count, and moments; the state must wrap a store with
// the same parameter layout.
void restore_adam(const OptimizerBlob& blob, ad::AdamState& adam);

// Fixed binary layout (little-endian, float64 arrays); round-trips the
// parameters bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace puray
