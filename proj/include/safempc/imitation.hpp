#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "safempc/bayesnet.hpp"
#include "safempc/dynamics.hpp"
#include "safempc/mpc.hpp"
#include "safempc/table.hpp"

namespace safempc::imitation {

struct EnvConfig {
  dynamics::CartPoleParams plant;
  dynamics::ObservationEncoding encoding = dynamics::ObservationEncoding::kSinCos;
};

/// (observation, expert control) pairs plus the observation statistics used
/// to standardize network inputs.
struct Dataset {
  std::vector<Eigen::VectorXd> observations;
  std::vector<double> controls;
  bayesnet::Standardizer normalization;

  std::size_t size() const { return controls.size(); }
  int observation_dim() const;
  Eigen::MatrixXd observation_matrix() const;  // one column per record
  Eigen::VectorXd control_vector() const;
  /// Recomputes `normalization` from the records.
  void refresh_normalization();
};

struct CollectConfig {
  int episodes = 20;
  int steps = 500;
  // Actuation noise is a stationary AR(1) process n_t = a n_{t-1} + e_t with
  // marginal std explore_noise (N) and a = explore_correlation; a = 0 is
  // white noise.
  double explore_noise = 1.0;
  double explore_correlation = 0.9;

  void validate() const;
};

struct CollectionResult {
  Dataset dataset;
  int discarded_episodes = 0;  // expert left the track
};

/// Runs the MPC expert from randomized hanging starts. The label is always
/// the expert's own control; the plant is actuated with that control plus
/// the exploration noise. Episodes where the cart leaves the track are
/// dropped entirely. Episode e draws from stream ("collect", e).
CollectionResult collect_dataset(const EnvConfig& env, const mpc::MpcConfig& expert,
                                 const CollectConfig& config, std::uint64_t seed,
                                 int threads = 1);

// Dataset CSV: header obs_0..obs_{k-1},control; one record per row.
void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double length_scale = 1e-2;
  double temperature = 0.1;
  double initial_drop_probability = 0.1;
  // Labels are divided by this during training and the factor is folded into
  // the output layer afterwards, so the returned network predicts in N.
  double target_scale = 10.0;

  void validate() const;
};

struct TrainResult {
  bayesnet::NetParams params;
  std::vector<double> epoch_loss;  // mean minibatch objective per epoch, scaled units
};

/// Rescales a network's output: mean by `factor`, variance by factor^2.
void scale_outputs(bayesnet::NetParams& params, double factor);

/// Shuffled minibatch training. Streams: "init" (weights), "shuffle",
/// "masks". Throws NonFiniteLoss.
TrainResult train(const Dataset& dataset, const bayesnet::Architecture& arch,
                  const TrainConfig& config, std::uint64_t seed);

// --- closed-loop evaluation ----------------------------------------------

/// A feedback policy for the cart-pole.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual double act(const dynamics::CartPoleState& state) = 0;
};

/// Acts with the Monte-Carlo mean of the Bayesian network.
class LearnerController final : public Controller {
 public:
  LearnerController(const bayesnet::NetParams& params,
                    dynamics::ObservationEncoding encoding, int samples, Rng rng);

  double act(const dynamics::CartPoleState& state) override;
  bayesnet::PredictiveOutput predict(const Eigen::VectorXd& observation);
  const bayesnet::PredictiveOutput& last() const { return last_; }

 private:
  const bayesnet::NetParams& params_;
  dynamics::ObservationEncoding encoding_;
  int samples_;
  Rng rng_;
  bayesnet::PredictiveOutput last_;
};

class ExpertController final : public Controller {
 public:
  ExpertController(const mpc::MpcConfig& config, const dynamics::CartPoleParams& model)
      : mpc_(config, model) {}
  double act(const dynamics::CartPoleState& state) override { return mpc_.act(state); }

 private:
  mpc::MpcController mpc_;
};

struct EpisodeLog {
  int episode = 0;
  bool success = false;
  dynamics::CartPoleState start;
  dynamics::CartPoleState final_state;
  int first_success_step = -1;  // first step satisfying is_success, or -1
};

struct EvalResult {
  double success_rate = 0.0;
  std::vector<EpisodeLog> episodes;
};

using ControllerFactory = std::function<std::unique_ptr<Controller>(int episode)>;

/// Undisturbed closed-loop rollouts of `horizon` steps from randomized
/// hanging starts (stream ("eval-start", e)); success judged at the end.
EvalResult evaluate_controller(const ControllerFactory& make_controller,
                               const EnvConfig& env, int episodes, int horizon,
                               std::uint64_t seed, int threads = 1);

/// evaluate_controller with the network's MC mean as the control; episode e
/// samples masks from stream ("eval-mc", e).
EvalResult evaluate_policy(const bayesnet::NetParams& params, const EnvConfig& env,
                           int episodes, int horizon, int mc_samples,
                           std::uint64_t seed, int threads = 1);

// Trace tables.
Table training_curve_table(const TrainResult& result);  // epoch,loss
Table episode_table(const EvalResult& result);  // episode,success,start_*,final_*,first_success_step

}  // namespace safempc::imitation
