#include "safempc/cli.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "safempc/errors.hpp"

namespace safempc::cli {

namespace fs = std::filesystem;

Command command_from_string(const std::string& name) {
  if (name == "collect") return Command::kCollect;
  if (name == "train") return Command::kTrain;
  if (name == "eval") return Command::kEval;
  if (name == "cem") return Command::kCem;
  if (name == "demo") return Command::kDemo;
  throw ConfigError("unknown command '" + name + "'");
}

const char* to_string(Command command) {
  switch (command) {
    case Command::kCollect: return "collect";
    case Command::kTrain: return "train";
    case Command::kEval: return "eval";
    case Command::kCem: return "cem";
    case Command::kDemo: return "demo";
  }
  return "?";
}

fs::path trace_path(const RunConfig& config, const std::string& stem) {
  return config.output_path() / (stem + (config.format == TraceFormat::kCsv ? ".csv" : ".json"));
}

gate::GateSystem gate_system(const RunConfig& config, const bayesnet::NetParams& learner) {
  gate::GateSystem system;
  system.learner = &learner;
  system.env = config.env();
  system.expert = config.mpc;
  system.mc_samples = config.mc_samples;
  system.expert_tracks_plant = config.expert_tracks_plant;
  system.always_check = config.always_check;
  return system;
}

gate::ThresholdDistribution initial_distribution(const RunConfig& config,
                                                 const gate::GateSystem& system) {
  gate::ThresholdDistribution d;
  if (config.cem_initial_mu) {
    d.mu = *config.cem_initial_mu;
  } else {
    d.mu = gate::default_initial_distribution(system, config.cem.horizon, config.seed).mu;
  }
  const double sigma = config.cem_initial_sigma.value_or(d.mu / 2.0);
  d.sigma2 = std::max(sigma * sigma, gate::kVarianceFloor);
  d.validate();
  return d;
}

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

bayesnet::NetParams load_model(const RunConfig& config) {
  const fs::path path = config.output_path() / kModelFile;
  if (!fs::exists(path)) throw IoError("missing " + path.string() + " (run train first)");
  bayesnet::NetParams params = bayesnet::load_checkpoint(path);
  if (params.arch.input_dim != dynamics::observation_size(config.encoding)) {
    throw ShapeMismatch("checkpoint input size does not match the observation encoding");
  }
  return params;
}

CommandOutput collect(const RunConfig& config) {
  const auto result = imitation::collect_dataset(config.env(), config.mpc, config.collect,
                                                 config.seed, config.threads);
  const fs::path path = config.output_path() / kDatasetFile;
  imitation::write_dataset_csv(result.dataset, path);
  return {{path},
          "collected " + std::to_string(result.dataset.size()) + " records (" +
              std::to_string(result.discarded_episodes) + " episodes discarded)"};
}

CommandOutput train(const RunConfig& config) {
  const fs::path data = config.output_path() / kDatasetFile;
  if (!fs::exists(data)) throw IoError("missing " + data.string() + " (run collect first)");
  const auto dataset = imitation::read_dataset_csv(data);
  if (dataset.observation_dim() != config.network.input_dim) {
    throw ShapeMismatch("dataset observation size does not match the network input");
  }
  const auto result = imitation::train(dataset, config.network, config.train, config.seed);
  const fs::path model = config.output_path() / kModelFile;
  bayesnet::save_checkpoint(result.params, model);
  const fs::path curve = trace_path(config, kTrainingCurve);
  write_trace(imitation::training_curve_table(result), curve, config.format);

  std::string summary = "trained " + std::to_string(config.train.epochs) + " epochs";
  if (!result.epoch_loss.empty()) summary += ", final loss " + fmt(result.epoch_loss.back());
  summary += ", drop probabilities";
  for (int i = 0; i < result.params.arch.num_layers(); ++i) {
    summary += " " + fmt(result.params.drop_probability(i));
  }
  return {{model, curve}, summary};
}

CommandOutput eval(const RunConfig& config) {
  const auto params = load_model(config);
  const auto result = imitation::evaluate_policy(params, config.env(), config.eval_episodes,
                                                 config.eval_horizon, config.mc_samples,
                                                 config.seed, config.threads);
  const fs::path path = trace_path(config, kEvalEpisodes);
  write_trace(imitation::episode_table(result), path, config.format);
  int wins = 0;
  for (const auto& e : result.episodes) wins += e.success ? 1 : 0;
  return {{path}, "success rate " + fmt(result.success_rate) + " (" + std::to_string(wins) +
                      "/" + std::to_string(config.eval_episodes) + ")"};
}

CommandOutput cem(const RunConfig& config) {
  const auto params = load_model(config);
  const auto system = gate_system(config, params);
  const auto initial = initial_distribution(config, system);
  const auto result = gate::cem_optimize_cartpole(initial, config.cem, system,
                                                  config.disturbance, config.seed,
                                                  config.threads);
  const fs::path trace = trace_path(config, kCemTrace);
  const fs::path summary = trace_path(config, kCemSummary);
  write_trace(gate::cem_trace_table(result), trace, config.format);
  write_trace(gate::cem_summary_table(result), summary, config.format);
  return {{trace, summary},
          "final mu " + fmt(result.mu()) + " sigma " +
              fmt(std::sqrt(result.final_distribution.sigma2)) + " (initial mu " +
              fmt(initial.mu) + " sigma " + fmt(std::sqrt(initial.sigma2)) + ")"};
}

CommandOutput demo(const RunConfig& config) {
  const auto params = load_model(config);
  const auto system = gate_system(config, params);
  const double threshold =
      config.demo_threshold ? *config.demo_threshold : initial_distribution(config, system).mu;
  const auto scenario =
      gate::cem_scenario(config.disturbance, dynamics::observation_size(config.encoding),
                         config.cem.horizon, config.seed, config.demo_episode);
  Rng rng = make_rng(config.seed, "demo-mc", {static_cast<std::uint64_t>(config.demo_episode)});
  std::vector<gate::StepRecord> log;
  const auto r = gate::gated_rollout(system, threshold, scenario, config.cem.horizon, rng, &log);
  const fs::path path = trace_path(config, kDemoSteps);
  write_trace(gate::step_log_table(log), path, config.format);
  return {{path}, "threshold " + fmt(threshold) + ", trigger step " +
                      std::to_string(r.trigger_step) + ", switch step " +
                      (r.switch_step ? std::to_string(*r.switch_step) : std::string("none")) +
                      ", reward " + fmt(r.reward) + ", " + (r.success ? "success" : "failure")};
}

}  // namespace

CommandOutput run(Command command, const RunConfig& config) {
  config.validate();
  std::error_code ec;
  fs::create_directories(config.output_path(), ec);
  if (ec) throw IoError("cannot create " + config.output_dir + ": " + ec.message());
  switch (command) {
    case Command::kCollect: return collect(config);
    case Command::kTrain: return train(config);
    case Command::kEval: return eval(config);
    case Command::kCem: return cem(config);
    case Command::kDemo: return demo(config);
  }
  throw ConfigError("unknown command");
}

int run_command(const std::string& command, const fs::path& config_path,
                const std::vector<std::string>& overrides, std::ostream& out,
                std::ostream& err) {
  try {
    const Command c = command_from_string(command);
    const RunConfig config = load_run_config(config_path, overrides);
    const CommandOutput result = run(c, config);
    out << result.summary << '\n';
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace safempc::cli
