#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "safempc/bayesnet.hpp"
#include "safempc/dynamics.hpp"
#include "safempc/gate.hpp"
#include "safempc/imitation.hpp"
#include "safempc/mpc.hpp"
#include "safempc/table.hpp"

namespace safempc {

dynamics::ObservationEncoding encoding_from_string(const std::string& name);
const char* to_string(dynamics::ObservationEncoding encoding);

/// Every tunable of the pipeline. Field names match the JSON keys; see
/// docs/config.md.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int threads = 1;
  TraceFormat format = TraceFormat::kCsv;

  dynamics::CartPoleParams plant;
  dynamics::ObservationEncoding encoding = dynamics::ObservationEncoding::kSinCos;
  mpc::MpcConfig mpc;
  bayesnet::Architecture network;
  int mc_samples = 30;
  imitation::CollectConfig collect;
  imitation::TrainConfig train;

  int eval_episodes = 20;
  int eval_horizon = 500;

  gate::CemConfig cem;
  std::optional<double> cem_initial_mu;     // unset -> measured
  std::optional<double> cem_initial_sigma;  // unset -> mu0 / 2
  gate::DisturbanceConfig disturbance;
  bool expert_tracks_plant = true;
  bool always_check = false;

  /// Threshold for `demo`; unset -> the default CEM initial mean.
  std::optional<double> demo_threshold;
  int demo_episode = 0;

  /// Throws ConfigError for the first violated module precondition.
  void validate() const;
  /// Same checks, but module errors keep their own types.
  void validate_sections() const;

  imitation::EnvConfig env() const { return {plant, encoding}; }
  std::filesystem::path output_path() const;
};

nlohmann::ordered_json to_json(const RunConfig& config);

/// Overlays `patch` on the defaults; unknown keys and type mismatches raise
/// ConfigError. The result is validated.
RunConfig config_from_json(const nlohmann::json& patch);

/// Applies "section.key=value" overrides. The value is parsed as JSON when
/// possible and taken as a string otherwise.
nlohmann::json apply_overrides(nlohmann::json patch,
                               const std::vector<std::string>& overrides);

/// Reads a JSON file (or uses {} for an empty path), applies overrides and
/// SAFEMPC_OUTPUT_DIR.
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

}  // namespace safempc
