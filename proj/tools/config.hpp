#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wgmrf/baselines.hpp"
#include "wgmrf/wgmrf_model.hpp"

namespace wgmrf::cli {

enum class ModelKind { iid, lowrank, wgmrf };

ModelKind parse_model(const std::string& name);
const char* model_name(ModelKind m);

/// Resolved settings for fit and cv. Schema (all keys optional):
///
///   {
///     "model": "wgmrf" | "lowrank" | "iid",
///     "seed": 1,
///     "schedule": {"iterations": 20000, "burn_in": 10000, "thin": 5},
///     "wgmrf":   {"k_bound", "mu_prior_scale", "ig_shape", "ig_rate", "delta",
///                 "step_psi", "step_r", "accept_low", "accept_high",
///                 "adapt_interval", "winding_init": "unwrap" | "zero"},
///     "lowrank": {"knots", "k_bound", "mu_prior_scale", "sigma_shape",
///                 "sigma_rate", "tau_shape", "tau_rate", "delta",
///                 "phi_fraction", "step_phi", "kmeans_restarts", "unwrap_init"},
///     "iid":     {"k_bound", "mu_prior_scale", "ig_shape", "ig_rate"},
///     "cv":      {"folds": 10, "block_rows": 10, "block_cols": 10}
///   }
///
/// delta = 0 means "domain diameter of the data". Unknown keys are errors.
struct RunConfig {
  ModelKind model = ModelKind::wgmrf;
  std::optional<std::uint64_t> seed;
  int iterations = 20000;
  int burn_in = 10000;
  int thin = 5;
  WgmrfConfig wgmrf;
  LowRankConfig lowrank;
  IidConfig iid;
  int folds = 10;
  int block_rows = 10;
  int block_cols = 10;

  /// Pushes schedule and seed into the per-model configs and validates them.
  void finalize();
  nlohmann::json to_json() const;
};

RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& j);

}  // namespace wgmrf::cli
