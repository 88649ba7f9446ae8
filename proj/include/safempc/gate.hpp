#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "safempc/bayesnet.hpp"
#include "safempc/dynamics.hpp"
#include "safempc/imitation.hpp"
#include "safempc/mpc.hpp"
#include "safempc/table.hpp"

namespace safempc::gate {

enum class Actor { kLearner, kExpert };

const char* to_string(Actor actor);

/// Immediate reward (1 for a learner step, 0 for an expert step) or, when
/// `terminal` is set, the terminal bonus (T on success, else 0).
double reward(Actor actor, bool terminal, bool success, int horizon);

inline constexpr double kNeverSwitch = std::numeric_limits<double>::infinity();
inline constexpr double kVarianceFloor = 1e-10;

/// Gaussian over switching thresholds, in units of total predictive variance.
struct ThresholdDistribution {
  double mu = 0.0;
  double sigma2 = 1.0;

  void validate() const;
};

/// Learner, expert and plant that a gated rollout runs against.
struct GateSystem {
  const bayesnet::NetParams* learner = nullptr;
  imitation::EnvConfig env;
  mpc::MpcConfig expert;
  int mc_samples = 30;
  /// The expert plans with the disturbed plant parameters once engaged;
  /// otherwise it keeps the nominal model.
  bool expert_tracks_plant = true;
  /// Check the gate at every step instead of only from the trigger step on.
  bool always_check = false;

  void validate() const;
};

/// Initial condition of one rollout: hanging start plus disturbance.
struct Scenario {
  dynamics::CartPoleState start;
  dynamics::DisturbanceSchedule disturbance;
};

struct RolloutResult {
  double threshold = 0.0;
  double reward = 0.0;
  bool success = false;
  std::optional<int> switch_step;
  int trigger_step = 0;
  int learner_steps = 0;  // counted from the trigger step
  int expert_steps = 0;
  dynamics::CartPoleState final_state;
};

/// One row of the optional per-step log. Prediction fields are NaN on
/// steps where the learner is no longer queried.
struct StepRecord {
  int t = 0;
  dynamics::CartPoleState state;
  Actor actor = Actor::kLearner;
  double mean = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
  double total = 0.0;
  double control = 0.0;
};

/// Runs the learner from the scenario's start. At every checked step the
/// learner's MC prediction is compared to `threshold`; when the total variance
/// exceeds it the expert takes over for the rest of the rollout, starting from
/// a fresh plan. The step on which the switch happens is already an expert
/// step. Rewards accrue from the trigger step onward and the terminal bonus is
/// added at step `horizon`.
RolloutResult gated_rollout(const GateSystem& system, double threshold,
                            const Scenario& scenario, int horizon, Rng& mc_rng,
                            std::vector<StepRecord>* log = nullptr);

struct EliteRefit {
  ThresholdDistribution distribution;
  std::vector<double> elites;  // best first
};

/// Sorts by descending reward (ties: smaller threshold first), keeps the
/// best `elite_count` and returns their population mean and variance, the
/// latter floored at kVarianceFloor.
EliteRefit elite_refit(std::span<const double> thresholds,
                       std::span<const double> rewards, int elite_count);

struct CemConfig {
  int episodes = 30;
  int rollouts = 20;
  int elites = 5;
  int min_successes = 2;
  int max_retries = 10;
  int horizon = 500;

  void validate() const;
};

/// What a single CEM rollout reports back.
struct RolloutOutcome {
  double reward = 0.0;
  bool success = false;
  std::optional<int> switch_step;
};

/// rollout(episode, attempt, index, threshold). Must be safe to call
/// concurrently for distinct (attempt, index) within one episode.
using RolloutFn = std::function<RolloutOutcome(int, int, int, double)>;

struct CemSample {
  int episode = 0;
  int rollout = 0;  // attempt * rollouts + index
  double threshold = 0.0;
  RolloutOutcome outcome;
};

struct CemEpisode {
  int episode = 0;
  int attempts = 1;
  ThresholdDistribution refit;
  double reward_sum = 0.0;
  int successes = 0;
};

struct CemResult {
  ThresholdDistribution initial;
  ThresholdDistribution final_distribution;
  std::vector<CemSample> samples;
  std::vector<CemEpisode> episodes;

  double mu() const { return final_distribution.mu; }
};

/// Cross-entropy search over the switching threshold. Each attempt draws
/// `rollouts` thresholds from N(mu, sigma2) (negative draws are redrawn) out
/// of stream ("cem-threshold", episode, attempt). An attempt with fewer than
/// `min_successes` successes is discarded and redrawn from the same
/// distribution, at most `max_retries` times; the last attempt is refit
/// regardless.
CemResult cem_optimize(const ThresholdDistribution& initial, const CemConfig& config,
                       const RolloutFn& rollout, std::uint64_t seed, int threads = 1);

/// Disturbance applied in every CEM episode.
struct DisturbanceConfig {
  enum class Kind { kNone, kMassChange, kObservationCorruption };
  Kind kind = Kind::kMassChange;
  double cart_mass = 0.1;
  Eigen::VectorXd offset;  // empty -> zeros
  Eigen::VectorXd scale;   // empty -> ones
  int trigger_step = -1;   // < 0 -> uniform in [T/4, T/2] per episode

  dynamics::DisturbanceSchedule make_schedule(int horizon, int observation_dim,
                                              Rng& rng) const;
  void validate() const;
};

DisturbanceConfig::Kind disturbance_kind_from_string(const std::string& name);
const char* to_string(DisturbanceConfig::Kind kind);

/// Environment reset for CEM episode `episode`, from stream ("cem-env", e).
/// Retries within an episode reuse it.
Scenario cem_scenario(const DisturbanceConfig& disturbance, int observation_dim,
                      int horizon, std::uint64_t seed, int episode);

/// CEM over gated cart-pole rollouts. Rollout j of attempt a in episode e
/// draws its dropout masks from stream ("cem-mc", e, a, j).
CemResult cem_optimize_cartpole(const ThresholdDistribution& initial,
                                const CemConfig& config, const GateSystem& system,
                                const DisturbanceConfig& disturbance,
                                std::uint64_t seed, int threads = 1);

/// The learner's total variance at the states of an undisturbed expert
/// rollout from stream ("cem-init"), for steps horizon/4 .. horizon-1.
std::vector<double> reference_variances(const GateSystem& system, int horizon,
                                        std::uint64_t seed);

/// mu0 = 10 x the 99th percentile of reference_variances; sigma0 = mu0 / 2.
ThresholdDistribution default_initial_distribution(const GateSystem& system,
                                                   int horizon, std::uint64_t seed);

/// Linear-interpolation percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

// Trace tables.
Table cem_trace_table(const CemResult& result);    // episode,rollout,threshold,reward,success,switch_step
Table cem_summary_table(const CemResult& result);  // episode,mu,sigma2,R_sum,successes
Table step_log_table(const std::vector<StepRecord>& log);

}  // namespace safempc::gate
