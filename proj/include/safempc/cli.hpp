#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "safempc/config.hpp"

namespace safempc::cli {

enum class Command { kCollect, kTrain, kEval, kCem, kDemo };

Command command_from_string(const std::string& name);
const char* to_string(Command command);

struct CommandOutput {
  std::vector<std::filesystem::path> artifacts;
  std::string summary;  // one line, printed on success
};

// Artifact names inside RunConfig::output_dir. Trace tables take the
// extension of the configured format.
inline constexpr const char* kDatasetFile = "dataset.csv";
inline constexpr const char* kModelFile = "model.ckpt";
inline constexpr const char* kTrainingCurve = "training_curve";
inline constexpr const char* kEvalEpisodes = "eval_episodes";
inline constexpr const char* kCemTrace = "cem_trace";
inline constexpr const char* kCemSummary = "cem_summary";
inline constexpr const char* kDemoSteps = "demo_steps";

std::filesystem::path trace_path(const RunConfig& config, const std::string& stem);

/// Threshold distribution `cem` starts from: cem.initial_mu / initial_sigma
/// when set, otherwise the measured default.
gate::ThresholdDistribution initial_distribution(const RunConfig& config,
                                                 const gate::GateSystem& system);

gate::GateSystem gate_system(const RunConfig& config, const bayesnet::NetParams& learner);

/// Runs one pipeline stage against `config`. Throws on any error.
CommandOutput run(Command command, const RunConfig& config);

/// Loads the config, runs the command and reports. Returns 0 on success;
/// otherwise writes "error: <message>" to `err` and returns 1 (2 for a bad
/// configuration).
int run_command(const std::string& command, const std::filesystem::path& config_path,
                const std::vector<std::string>& overrides, std::ostream& out,
                std::ostream& err);

}  // namespace safempc::cli
