#include "safempc/gate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "safempc/errors.hpp"
#include "safempc/parallel.hpp"

namespace safempc::gate {

using dynamics::CartPoleState;

const char* to_string(Actor actor) {
  return actor == Actor::kLearner ? "learner" : "expert";
}

double reward(Actor actor, bool terminal, bool success, int horizon) {
  if (terminal) return success ? static_cast<double>(horizon) : 0.0;
  return actor == Actor::kLearner ? 1.0 : 0.0;
}

void ThresholdDistribution::validate() const {
  if (!std::isfinite(mu)) throw ConfigError("threshold mean must be finite");
  if (!(sigma2 >= kVarianceFloor)) {
    throw ConfigError("threshold variance must be >= 1e-10");
  }
}

void GateSystem::validate() const {
  if (learner == nullptr) throw ConfigError("gate needs learner parameters");
  learner->validate();
  if (mc_samples < 2) throw ConfigError("mc_samples must be >= 2");
  env.plant.validate();
  expert.validate();
  if (dynamics::observation_size(env.encoding) != learner->arch.input_dim) {
    throw ShapeMismatch("observation encoding does not match network input_dim");
  }
}

RolloutResult gated_rollout(const GateSystem& system, double threshold,
                            const Scenario& scenario, int horizon, Rng& mc_rng,
                            std::vector<StepRecord>* log) {
  if (!(threshold >= 0)) throw ConfigError("threshold must be >= 0");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  system.validate();
  scenario.disturbance.validate();

  RolloutResult result;
  result.threshold = threshold;
  result.trigger_step = scenario.disturbance.trigger_step;

  mpc::MpcController expert(system.expert, system.env.plant);
  Actor actor = Actor::kLearner;
  CartPoleState s = scenario.start;
  for (int t = 0; t < horizon; ++t) {
    const auto inputs = dynamics::apply_disturbance(
        system.env.plant, dynamics::observe(s, system.env.encoding),
        scenario.disturbance, t);
    const bool counted = t >= result.trigger_step;

    StepRecord rec;
    rec.t = t;
    rec.state = s;
    double control = 0.0;
    if (actor == Actor::kLearner) {
      const auto pred = bayesnet::mc_predict(*system.learner, inputs.observation,
                                             system.mc_samples, mc_rng);
      rec.mean = pred.mean;
      rec.aleatoric = pred.aleatoric;
      rec.epistemic = pred.epistemic;
      rec.total = pred.total;
      control = pred.mean;
      if ((counted || system.always_check) && pred.total > threshold) {
        actor = Actor::kExpert;
        result.switch_step = t;
        expert.reset();
      }
    } else {
      rec.mean = rec.aleatoric = rec.epistemic = rec.total =
          std::numeric_limits<double>::quiet_NaN();
    }
    if (actor == Actor::kExpert) {
      expert.set_model(system.expert_tracks_plant ? inputs.params : system.env.plant);
      control = expert.act(s);
    }

    if (counted) {
      result.reward += reward(actor, false, false, horizon);
      (actor == Actor::kLearner ? result.learner_steps : result.expert_steps) += 1;
    }
    rec.actor = actor;
    rec.control = std::clamp(control, -inputs.params.force_limit, inputs.params.force_limit);
    if (log) log->push_back(rec);
    s = dynamics::step(s, control, inputs.params);
  }
  result.final_state = s;
  result.success = dynamics::is_success(s);
  result.reward += reward(actor, true, result.success, horizon);
  return result;
}

EliteRefit elite_refit(std::span<const double> thresholds,
                       std::span<const double> rewards, int elite_count) {
  if (thresholds.size() != rewards.size()) {
    throw ShapeMismatch("elite_refit: thresholds and rewards differ in length");
  }
  if (elite_count < 1 || static_cast<std::size_t>(elite_count) > thresholds.size()) {
    throw ConfigError("elite_refit: elite count must be in [1, sample count]");
  }
  std::vector<std::size_t> order(thresholds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rewards[a] != rewards[b]) return rewards[a] > rewards[b];
    return thresholds[a] < thresholds[b];
  });

  EliteRefit out;
  for (int i = 0; i < elite_count; ++i) out.elites.push_back(thresholds[order[i]]);
  const double n = elite_count;
  double mean = 0.0;
  for (double x : out.elites) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : out.elites) var += (x - mean) * (x - mean);
  var /= n;
  out.distribution = {mean, std::max(var, kVarianceFloor)};
  return out;
}

void CemConfig::validate() const {
  if (episodes < 1) throw ConfigError("cem.episodes must be >= 1");
  if (rollouts < 1) throw ConfigError("cem.rollouts must be >= 1");
  if (elites < 1 || elites > rollouts) {
    throw ConfigError("cem.elites must be in [1, cem.rollouts]");
  }
  if (min_successes < 0 || min_successes > elites) {
    throw ConfigError("cem.min_successes must be in [0, cem.elites]");
  }
  if (max_retries < 0) throw ConfigError("cem.max_retries must be >= 0");
  if (horizon < 1) throw ConfigError("cem.horizon must be >= 1");
}

namespace {

double sample_threshold(const ThresholdDistribution& d, Rng& rng) {
  const double sd = std::sqrt(d.sigma2);
  for (int i = 0; i < 1000; ++i) {
    const double x = gaussian(rng, d.mu, sd);
    if (x >= 0) return x;
  }
  return 0.0;
}

}  // namespace

CemResult cem_optimize(const ThresholdDistribution& initial, const CemConfig& config,
                       const RolloutFn& rollout, std::uint64_t seed, int threads) {
  config.validate();
  initial.validate();

  CemResult result;
  result.initial = initial;
  ThresholdDistribution dist = initial;
  const auto n = static_cast<std::size_t>(config.rollouts);

  for (int e = 0; e < config.episodes; ++e) {
    CemEpisode summary;
    summary.episode = e;
    std::vector<double> thresholds(n);
    std::vector<RolloutOutcome> outcomes(n);
    for (int attempt = 0;; ++attempt) {
      Rng rng = make_rng(seed, "cem-threshold",
                         {static_cast<std::uint64_t>(e), static_cast<std::uint64_t>(attempt)});
      for (double& x : thresholds) x = sample_threshold(dist, rng);
      parallel_for(config.rollouts, threads, [&](int j) {
        outcomes[static_cast<std::size_t>(j)] =
            rollout(e, attempt, j, thresholds[static_cast<std::size_t>(j)]);
      });

      int successes = 0;
      for (std::size_t j = 0; j < n; ++j) {
        successes += outcomes[j].success ? 1 : 0;
        result.samples.push_back({e, attempt * config.rollouts + static_cast<int>(j),
                                  thresholds[j], outcomes[j]});
      }
      summary.attempts = attempt + 1;
      summary.successes = successes;
      if (successes >= config.min_successes || attempt >= config.max_retries) break;
    }

    std::vector<double> rewards(n);
    summary.reward_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      rewards[j] = outcomes[j].reward;
      summary.reward_sum += rewards[j];
    }
    dist = elite_refit(thresholds, rewards, config.elites).distribution;
    summary.refit = dist;
    result.episodes.push_back(summary);
  }
  result.final_distribution = dist;
  return result;
}

DisturbanceConfig::Kind disturbance_kind_from_string(const std::string& name) {
  if (name == "none") return DisturbanceConfig::Kind::kNone;
  if (name == "mass_change") return DisturbanceConfig::Kind::kMassChange;
  if (name == "observation_corruption") {
    return DisturbanceConfig::Kind::kObservationCorruption;
  }
  throw ConfigError("unknown disturbance kind '" + name + "'");
}

const char* to_string(DisturbanceConfig::Kind kind) {
  switch (kind) {
    case DisturbanceConfig::Kind::kNone: return "none";
    case DisturbanceConfig::Kind::kMassChange: return "mass_change";
    case DisturbanceConfig::Kind::kObservationCorruption: return "observation_corruption";
  }
  return "none";
}

void DisturbanceConfig::validate() const {
  if (kind == Kind::kMassChange && !(cart_mass > 0)) {
    throw ConfigError("disturbance.cart_mass must be > 0");
  }
  if (offset.size() && scale.size() && offset.size() != scale.size()) {
    throw ConfigError("disturbance.offset and disturbance.scale differ in length");
  }
}

dynamics::DisturbanceSchedule DisturbanceConfig::make_schedule(int horizon,
                                                             int observation_dim,
                                                             Rng& rng) const {
  validate();
  dynamics::DisturbanceSchedule s;
  s.trigger_step = trigger_step >= 0 ? trigger_step : dynamics::sample_trigger_step(horizon, rng);
  switch (kind) {
    case Kind::kNone:
      break;
    case Kind::kMassChange:
      s.kind = dynamics::MassChange{cart_mass};
      break;
    case Kind::kObservationCorruption: {
      dynamics::ObservationCorruption c;
      c.offset = offset.size() ? offset : Eigen::VectorXd::Zero(observation_dim);
      c.scale = scale.size() ? scale : Eigen::VectorXd::Ones(observation_dim);
      if (c.offset.size() != observation_dim || c.scale.size() != observation_dim) {
        throw ConfigError("observation corruption must match the observation size");
      }
      s.kind = std::move(c);
      break;
    }
  }
  s.validate();
  return s;
}

Scenario cem_scenario(const DisturbanceConfig& disturbance, int observation_dim,
                      int horizon, std::uint64_t seed, int episode) {
  Rng rng = make_rng(seed, "cem-env", {static_cast<std::uint64_t>(episode)});
  Scenario sc;
  sc.start = dynamics::sample_hanging_start(rng);
  sc.disturbance = disturbance.make_schedule(horizon, observation_dim, rng);
  return sc;
}

CemResult cem_optimize_cartpole(const ThresholdDistribution& initial,
                                const CemConfig& config, const GateSystem& system,
                                const DisturbanceConfig& disturbance,
                                std::uint64_t seed, int threads) {
  config.validate();
  system.validate();
  const int obs_dim = dynamics::observation_size(system.env.encoding);

  std::vector<Scenario> scenarios;
  for (int e = 0; e < config.episodes; ++e) {
    scenarios.push_back(cem_scenario(disturbance, obs_dim, config.horizon, seed, e));
  }
  const RolloutFn fn = [&](int e, int attempt, int j, double threshold) {
    Rng rng = make_rng(seed, "cem-mc",
                       {static_cast<std::uint64_t>(e), static_cast<std::uint64_t>(attempt),
                        static_cast<std::uint64_t>(j)});
    const RolloutResult r = gated_rollout(system, threshold,
                                          scenarios[static_cast<std::size_t>(e)],
                                          config.horizon, rng);
    return RolloutOutcome{r.reward, r.success, r.switch_step};
  };
  return cem_optimize(initial, config, fn, seed, threads);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("percentile of an empty sample");
  if (!(q >= 0 && q <= 100)) throw ConfigError("percentile must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<double> reference_variances(const GateSystem& system, int horizon,
                                        std::uint64_t seed) {
  system.validate();
  Rng rng = make_rng(seed, "cem-init");
  CartPoleState s = dynamics::sample_hanging_start(rng);
  mpc::MpcController expert(system.expert, system.env.plant);
  std::vector<double> totals;
  for (int t = 0; t < horizon; ++t) {
    if (t >= horizon / 4) {
      const auto obs = dynamics::observe(s, system.env.encoding);
      totals.push_back(
          bayesnet::mc_predict(*system.learner, obs, system.mc_samples, rng).total);
    }
    s = dynamics::step(s, expert.act(s), system.env.plant);
  }
  return totals;
}

ThresholdDistribution default_initial_distribution(const GateSystem& system,
                                                   int horizon, std::uint64_t seed) {
  const double mu0 = 10.0 * percentile(reference_variances(system, horizon, seed), 99.0);
  const double sigma0 = mu0 / 2.0;
  return {mu0, std::max(sigma0 * sigma0, kVarianceFloor)};
}

Table cem_trace_table(const CemResult& result) {
  Table t;
  t.columns = {{"episode", ColumnType::kInteger},   {"rollout", ColumnType::kInteger},
               {"threshold", ColumnType::kReal},    {"reward", ColumnType::kReal},
               {"success", ColumnType::kInteger},   {"switch_step", ColumnType::kInteger}};
  for (const auto& s : result.samples) {
    Cell sw = std::monostate{};
    if (s.outcome.switch_step) sw = static_cast<std::int64_t>(*s.outcome.switch_step);
    t.add_row({static_cast<std::int64_t>(s.episode), static_cast<std::int64_t>(s.rollout),
               s.threshold, s.outcome.reward, static_cast<std::int64_t>(s.outcome.success),
               sw});
  }
  return t;
}

Table cem_summary_table(const CemResult& result) {
  Table t;
  t.columns = {{"episode", ColumnType::kInteger}, {"mu", ColumnType::kReal},
               {"sigma2", ColumnType::kReal},     {"R_sum", ColumnType::kReal},
               {"successes", ColumnType::kInteger}};
  for (const auto& e : result.episodes) {
    t.add_row({static_cast<std::int64_t>(e.episode), e.refit.mu, e.refit.sigma2,
               e.reward_sum, static_cast<std::int64_t>(e.successes)});
  }
  return t;
}

Table step_log_table(const std::vector<StepRecord>& log) {
  Table t;
  t.columns = {{"t", ColumnType::kInteger},      {"x", ColumnType::kReal},
               {"x_dot", ColumnType::kReal},     {"theta", ColumnType::kReal},
               {"theta_dot", ColumnType::kReal}, {"actor", ColumnType::kText},
               {"mean", ColumnType::kReal},      {"aleatoric", ColumnType::kReal},
               {"epistemic", ColumnType::kReal}, {"total", ColumnType::kReal},
               {"control", ColumnType::kReal}};
  auto real = [](double v) -> Cell {
    if (std::isnan(v)) return std::monostate{};
    return v;
  };
  for (const auto& r : log) {
    t.add_row({static_cast<std::int64_t>(r.t), r.state.x, r.state.x_dot, r.state.theta,
               r.state.theta_dot, std::string(to_string(r.actor)), real(r.mean),
               real(r.aleatoric), real(r.epistemic), real(r.total), r.control});
  }
  return t;
}

}  // namespace safempc::gate
