#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "safempc/errors.hpp"
#include "safempc/gate.hpp"

using namespace safempc;
using namespace safempc::gate;
using dynamics::CartPoleState;

namespace {

constexpr int kHorizon = 500;

// Zero weights: mean `mean`, aleatoric `variance`, no epistemic spread.
bayesnet::NetParams constant_network(double mean, double variance) {
  auto p = bayesnet::NetParams::zeros({}, 0.2);
  p.biases.back() << mean, std::log(variance);
  return p;
}

GateSystem make_system(const bayesnet::NetParams& net) {
  GateSystem s;
  s.learner = &net;
  s.mc_samples = 5;
  return s;
}

Scenario upright_scenario(int trigger) {
  return {CartPoleState{}, {trigger, dynamics::MassChange{0.1}}};
}

Scenario hanging_scenario(int trigger) {
  return {CartPoleState{0.01, 0, std::numbers::pi - 0.05, 0}, {trigger, dynamics::MassChange{0.1}}};
}

void expect_accounting(const RolloutResult& r, int horizon) {
  EXPECT_EQ(r.learner_steps + r.expert_steps, horizon - r.trigger_step);
  EXPECT_EQ(r.reward, r.learner_steps + (r.success ? horizon : 0));
}

}  // namespace

TEST(Reward, Identities) {
  EXPECT_EQ(reward(Actor::kLearner, false, false, kHorizon), 1.0);
  EXPECT_EQ(reward(Actor::kExpert, false, false, kHorizon), 0.0);
  EXPECT_EQ(reward(Actor::kLearner, false, true, kHorizon), 1.0);
  EXPECT_EQ(reward(Actor::kExpert, true, true, kHorizon), 500.0);
  EXPECT_EQ(reward(Actor::kLearner, true, true, kHorizon), 500.0);
  EXPECT_EQ(reward(Actor::kLearner, true, false, kHorizon), 0.0);
  EXPECT_EQ(reward(Actor::kExpert, true, false, 37), 0.0);
  EXPECT_EQ(reward(Actor::kExpert, true, true, 37), 37.0);
}

TEST(GatedRollout, NeverSwitchSuccessEarnsRemainingStepsPlusBonus) {
  const auto net = constant_network(0.0, 1.0);
  for (int trigger : {0, 1, 125, 250, 499}) {
    Rng rng(1);
    const auto r = gated_rollout(make_system(net), kNeverSwitch, upright_scenario(trigger),
                                 kHorizon, rng);
    EXPECT_FALSE(r.switch_step.has_value());
    EXPECT_EQ(r.expert_steps, 0);
    EXPECT_TRUE(r.success);
    EXPECT_EQ(r.reward, (kHorizon - trigger) + kHorizon);
    expect_accounting(r, kHorizon);
  }
}

TEST(GatedRollout, NeverSwitchFailureEarnsRemainingSteps) {
  const auto net = constant_network(0.0, 1.0);
  Rng rng(1);
  const auto r = gated_rollout(make_system(net), kNeverSwitch, hanging_scenario(200), kHorizon, rng);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.reward, kHorizon - 200);
  expect_accounting(r, kHorizon);
}

TEST(GatedRollout, PureExpertEarnsExactlyTheTerminalBonus) {
  const auto net = constant_network(0.0, 1.0);
  for (int trigger : {0, 125, 250}) {
    Rng rng(2);
    const auto r = gated_rollout(make_system(net), 0.0, hanging_scenario(trigger), kHorizon, rng);
    ASSERT_TRUE(r.switch_step.has_value());
    EXPECT_EQ(*r.switch_step, trigger);
    EXPECT_EQ(r.learner_steps, 0);
    EXPECT_EQ(r.expert_steps, kHorizon - trigger);
    EXPECT_TRUE(r.success);
    EXPECT_EQ(r.reward, reward(Actor::kExpert, true, r.success, kHorizon));
    expect_accounting(r, kHorizon);
  }
}

TEST(GatedRollout, ThresholdAgainstTotalVariance) {
  const auto net = constant_network(0.0, 2.0);
  Rng a(3), b(3);
  const auto below = gated_rollout(make_system(net), 1.999, upright_scenario(100), kHorizon, a);
  ASSERT_TRUE(below.switch_step.has_value());
  EXPECT_EQ(*below.switch_step, 100);
  const auto above = gated_rollout(make_system(net), 2.001, upright_scenario(100), kHorizon, b);
  EXPECT_FALSE(above.switch_step.has_value());
}

TEST(GatedRollout, AlwaysCheckSwitchesBeforeTrigger) {
  const auto net = constant_network(0.0, 2.0);
  GateSystem s = make_system(net);
  s.always_check = true;
  Rng rng(3);
  const auto r = gated_rollout(s, 1.0, upright_scenario(100), kHorizon, rng);
  ASSERT_TRUE(r.switch_step.has_value());
  EXPECT_EQ(*r.switch_step, 0);
  EXPECT_EQ(r.expert_steps, kHorizon - 100);
  expect_accounting(r, kHorizon);
}

TEST(GatedRollout, SwitchIsOneWay) {
  Rng init(4);
  const auto net = bayesnet::initialize({}, init, 0.3);
  Rng rng(5);
  std::vector<StepRecord> log;
  const auto r = gated_rollout(make_system(net), 0.5, hanging_scenario(50), 200, rng, &log);
  ASSERT_EQ(log.size(), 200u);
  bool expert = false;
  for (const auto& rec : log) {
    if (expert) {
      EXPECT_EQ(rec.actor, Actor::kExpert);
      EXPECT_TRUE(std::isnan(rec.total));
    }
    if (rec.actor == Actor::kExpert) expert = true;
    EXPECT_LE(std::abs(rec.control), 10.0);
  }
  if (r.switch_step) EXPECT_EQ(log[*r.switch_step].actor, Actor::kExpert);
  expect_accounting(r, 200);
}

TEST(GatedRollout, SwitchStepMonotoneInThreshold) {
  Rng init(6);
  const auto net = bayesnet::initialize({}, init, 0.3);
  const Scenario sc = hanging_scenario(40);
  int previous = -1;
  for (double x : {0.0, 0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 1e3, 1e6, kNeverSwitch}) {
    Rng rng(7);
    const auto r = gated_rollout(make_system(net), x, sc, 150, rng);
    const int step = r.switch_step ? *r.switch_step : 1 << 30;
    EXPECT_GE(step, previous) << x;
    previous = step;
    expect_accounting(r, 150);
  }
}

TEST(GatedRollout, LogMatchesResult) {
  const auto net = constant_network(0.5, 2.0);
  Rng rng(8);
  std::vector<StepRecord> log;
  const auto r = gated_rollout(make_system(net), kNeverSwitch, upright_scenario(10), 30, rng, &log);
  ASSERT_EQ(log.size(), 30u);
  for (const auto& rec : log) {
    EXPECT_EQ(rec.actor, Actor::kLearner);
    EXPECT_DOUBLE_EQ(rec.mean, 0.5);
    EXPECT_DOUBLE_EQ(rec.total, 2.0);
    EXPECT_EQ(rec.epistemic, 0.0);
    EXPECT_DOUBLE_EQ(rec.control, 0.5);
  }
  EXPECT_EQ(log.back().t, 29);
  EXPECT_EQ(r.learner_steps, 20);
  const Table t = step_log_table(log);
  EXPECT_EQ(t.rows.size(), 30u);
  EXPECT_EQ(t.columns.size(), 11u);
}

TEST(GatedRollout, Preconditions) {
  const auto net = constant_network(0.0, 1.0);
  Rng rng(1);
  EXPECT_THROW(gated_rollout(make_system(net), -1.0, upright_scenario(0), 10, rng), ConfigError);
  EXPECT_THROW(gated_rollout(make_system(net), 1.0, upright_scenario(0), 0, rng), ConfigError);
  GateSystem missing;
  EXPECT_THROW(gated_rollout(missing, 1.0, upright_scenario(0), 10, rng), ConfigError);
}

TEST(EliteRefit, Example) {
  const std::vector<double> x = {1, 2, 3, 4}, r = {10, 40, 20, 30};
  const auto e = elite_refit(x, r, 2);
  EXPECT_EQ(e.elites, (std::vector<double>{2, 4}));
  EXPECT_DOUBLE_EQ(e.distribution.mu, 3.0);
  EXPECT_DOUBLE_EQ(e.distribution.sigma2, 1.0);
}

TEST(EliteRefit, AllEqualRewards) {
  const std::vector<double> x = {5, 1, 3, 7}, r = {2, 2, 2, 2};
  const auto e = elite_refit(x, r, 4);
  EXPECT_DOUBLE_EQ(e.distribution.mu, 4.0);
  EXPECT_DOUBLE_EQ(e.distribution.sigma2, 5.0);
  EXPECT_EQ(e.elites, (std::vector<double>{1, 3, 5, 7}));
}

TEST(EliteRefit, SingleEliteHitsFloor) {
  const std::vector<double> x = {5, 1, 3}, r = {1, 9, 4};
  const auto e = elite_refit(x, r, 1);
  EXPECT_EQ(e.distribution.mu, 1.0);
  EXPECT_EQ(e.distribution.sigma2, kVarianceFloor);
}

TEST(EliteRefit, TiesPreferSmallerThreshold) {
  const std::vector<double> x = {9, 2, 6}, r = {5, 5, 5};
  EXPECT_EQ(elite_refit(x, r, 1).distribution.mu, 2.0);
}

TEST(EliteRefit, ElitesAreSamplesAndMeanInRange) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(20), r(20);
    for (int i = 0; i < 20; ++i) {
      x[i] = uniform(rng, 0, 10);
      r[i] = std::floor(uniform(rng, 0, 5));
    }
    const auto e = elite_refit(x, r, 5);
    for (double v : e.elites) EXPECT_NE(std::find(x.begin(), x.end(), v), x.end());
    const auto [lo, hi] = std::minmax_element(e.elites.begin(), e.elites.end());
    EXPECT_GE(e.distribution.mu, *lo - 1e-12);
    EXPECT_LE(e.distribution.mu, *hi + 1e-12);
  }
}

TEST(EliteRefit, Preconditions) {
  const std::vector<double> x = {1, 2}, r = {1};
  EXPECT_THROW(elite_refit(x, r, 1), ShapeMismatch);
  EXPECT_THROW(elite_refit(x, x, 3), ConfigError);
  EXPECT_THROW(elite_refit(x, x, 0), ConfigError);
}

TEST(Cem, SyntheticIntervalOptimum) {
  // Succeeds iff the threshold lies in [2, 3]; reward peaks at 2.5 inside.
  const RolloutFn fn = [](int, int, int, double x) {
    const bool inside = x >= 2.0 && x <= 3.0;
    return RolloutOutcome{inside ? 100.0 - std::abs(x - 2.5) : -std::abs(x - 2.5), inside, {}};
  };
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r = cem_optimize({0.5, 4.0}, {}, fn, seed);
    EXPECT_GE(r.mu(), 2.0);
    EXPECT_LE(r.mu(), 3.0);
    EXPECT_EQ(r.episodes.size(), 30u);
  }
}

TEST(Cem, AllEliteSingleEpisode) {
  const RolloutFn fn = [](int, int, int, double x) { return RolloutOutcome{x, true, {}}; };
  CemConfig cfg;
  cfg.episodes = 1;
  cfg.rollouts = 6;
  cfg.elites = 6;
  const auto r = cem_optimize({10.0, 4.0}, cfg, fn, 4);
  ASSERT_EQ(r.samples.size(), 6u);
  std::vector<double> x, rewards(6, 1.0);
  for (const auto& s : r.samples) x.push_back(s.threshold);
  const auto expected = elite_refit(x, rewards, 6).distribution;
  EXPECT_NEAR(r.mu(), expected.mu, 1e-12);
  EXPECT_NEAR(r.final_distribution.sigma2, expected.sigma2, 1e-12);
}

TEST(Cem, RetriesFromUnchangedDistribution) {
  int calls = 0;
  const RolloutFn fn = [&](int, int attempt, int, double x) {
    ++calls;
    return RolloutOutcome{x, attempt >= 3, {}};
  };
  CemConfig cfg;
  cfg.episodes = 2;
  cfg.rollouts = 4;
  cfg.elites = 2;
  const auto r = cem_optimize({5.0, 1.0}, cfg, fn, 5);
  EXPECT_EQ(r.episodes[0].attempts, 4);
  EXPECT_EQ(r.samples.size(), static_cast<std::size_t>(calls));
  EXPECT_EQ(calls, (4 + 4) * 4);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(r.samples[i].rollout, static_cast<int>(i));
}

TEST(Cem, RetryBoundThenBestEffort) {
  const RolloutFn fn = [](int, int, int, double x) { return RolloutOutcome{-x, false, {}}; };
  CemConfig cfg;
  cfg.episodes = 3;
  cfg.rollouts = 5;
  cfg.elites = 2;
  const auto r = cem_optimize({5.0, 1.0}, cfg, fn, 6);
  for (const auto& e : r.episodes) EXPECT_EQ(e.attempts, cfg.max_retries + 1);
  EXPECT_EQ(r.samples.size(), 3u * 11u * 5u);
  EXPECT_LE(r.episodes.size(), static_cast<std::size_t>(cfg.episodes * (cfg.max_retries + 1)));
  // Best effort: the last attempt's two smallest thresholds become the elites.
  std::vector<double> last;
  for (const auto& smp : r.samples) {
    if (smp.episode == 2 && smp.rollout >= cfg.max_retries * cfg.rollouts) last.push_back(smp.threshold);
  }
  ASSERT_EQ(last.size(), 5u);
  std::sort(last.begin(), last.end());
  EXPECT_DOUBLE_EQ(r.mu(), 0.5 * (last[0] + last[1]));
}

TEST(Cem, NegativeDrawsAreResampled) {
  const RolloutFn fn = [](int, int, int, double x) { return RolloutOutcome{x, true, {}}; };
  CemConfig cfg;
  cfg.episodes = 5;
  const auto r = cem_optimize({0.0, 4.0}, cfg, fn, 7);
  for (const auto& s : r.samples) EXPECT_GE(s.threshold, 0.0);
}

TEST(Cem, SameResultForAnyThreadCount) {
  const RolloutFn fn = [](int e, int, int j, double x) {
    return RolloutOutcome{std::sin(x * (e + 1)) + 0.01 * j, x > 1.0, {}};
  };
  const auto a = cem_optimize({3.0, 4.0}, {}, fn, 8, 1);
  const auto b = cem_optimize({3.0, 4.0}, {}, fn, 8, 4);
  EXPECT_EQ(to_csv(cem_trace_table(a)), to_csv(cem_trace_table(b)));
  EXPECT_EQ(to_csv(cem_summary_table(a)), to_csv(cem_summary_table(b)));
}

TEST(Cem, Preconditions) {
  const RolloutFn fn = [](int, int, int, double) { return RolloutOutcome{}; };
  CemConfig cfg;
  cfg.min_successes = 6;
  EXPECT_THROW(cem_optimize({1, 1}, cfg, fn, 1), ConfigError);
  cfg = {};
  cfg.elites = 21;
  EXPECT_THROW(cem_optimize({1, 1}, cfg, fn, 1), ConfigError);
  cfg = {};
  cfg.episodes = 0;
  EXPECT_THROW(cem_optimize({1, 1}, cfg, fn, 1), ConfigError);
  EXPECT_THROW(cem_optimize({1, 0.0}, {}, fn, 1), ConfigError);
  EXPECT_THROW(cem_optimize({std::nan(""), 1}, {}, fn, 1), ConfigError);
}

TEST(Cem, TraceTables) {
  CemResult r;
  r.samples.push_back({0, 0, 1.5, {10.0, true, 130}});
  r.samples.push_back({0, 1, 2.5, {3.0, false, {}}});
  r.episodes.push_back({0, 1, {2.0, 0.25}, 13.0, 1});
  EXPECT_EQ(to_csv(cem_trace_table(r)),
            "episode,rollout,threshold,reward,success,switch_step\n"
            "0,0,1.5,10,1,130\n0,1,2.5,3,0,\n");
  EXPECT_EQ(to_csv(cem_summary_table(r)), "episode,mu,sigma2,R_sum,successes\n0,2,0.25,13,1\n");
}

TEST(CemCartPole, DeterministicAcrossThreads) {
  Rng init(9);
  const auto net = bayesnet::initialize({}, init, 0.2);
  CemConfig cfg;
  cfg.episodes = 2;
  cfg.rollouts = 4;
  cfg.elites = 2;
  cfg.min_successes = 0;
  cfg.horizon = 40;
  DisturbanceConfig dist;
  dist.trigger_step = 10;
  const auto a = cem_optimize_cartpole({1.0, 0.25}, cfg, make_system(net), dist, 3, 1);
  const auto b = cem_optimize_cartpole({1.0, 0.25}, cfg, make_system(net), dist, 3, 3);
  EXPECT_EQ(to_csv(cem_trace_table(a)), to_csv(cem_trace_table(b)));
  EXPECT_EQ(a.samples.size(), 8u);
}

TEST(CemScenario, SharedAcrossAttemptsAndSeeded) {
  DisturbanceConfig d;
  const auto a = cem_scenario(d, 5, kHorizon, 1, 3);
  const auto b = cem_scenario(d, 5, kHorizon, 1, 3);
  const auto c = cem_scenario(d, 5, kHorizon, 1, 4);
  EXPECT_EQ(a.start, b.start);
  EXPECT_EQ(a.disturbance.trigger_step, b.disturbance.trigger_step);
  EXPECT_NE(a.start, c.start);
  EXPECT_GE(a.disturbance.trigger_step, kHorizon / 4);
  EXPECT_LE(a.disturbance.trigger_step, kHorizon / 2);
  ASSERT_TRUE(std::holds_alternative<dynamics::MassChange>(a.disturbance.kind));
  EXPECT_EQ(std::get<dynamics::MassChange>(a.disturbance.kind).cart_mass, 0.1);
}

TEST(DisturbanceConfig, Kinds) {
  Rng rng(1);
  DisturbanceConfig d;
  d.kind = DisturbanceConfig::Kind::kObservationCorruption;
  d.trigger_step = 7;
  const auto s = d.make_schedule(kHorizon, 5, rng);
  EXPECT_EQ(s.trigger_step, 7);
  const auto& c = std::get<dynamics::ObservationCorruption>(s.kind);
  EXPECT_EQ(c.offset, Eigen::VectorXd(Eigen::VectorXd::Zero(5)));
  d.offset = Eigen::VectorXd::Ones(3);
  EXPECT_THROW(d.make_schedule(kHorizon, 5, rng), ConfigError);
  EXPECT_EQ(disturbance_kind_from_string("none"), DisturbanceConfig::Kind::kNone);
  EXPECT_STREQ(to_string(DisturbanceConfig::Kind::kMassChange), "mass_change");
  EXPECT_THROW(disturbance_kind_from_string("wind"), ConfigError);
}

TEST(InitialDistribution, ScalesWithReferenceVariance) {
  const auto net = constant_network(0.0, 2.0);
  const auto v = reference_variances(make_system(net), 100, 1);
  EXPECT_EQ(v.size(), 75u);
  const auto d = default_initial_distribution(make_system(net), 100, 1);
  EXPECT_DOUBLE_EQ(d.mu, 20.0);
  EXPECT_DOUBLE_EQ(d.sigma2, 100.0);
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 50), 3.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 100), 5.0);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 50), 2.5);
  EXPECT_DOUBLE_EQ(percentile({0, 10}, 99), 9.9);
  EXPECT_THROW(percentile({}, 50), ConfigError);
}
