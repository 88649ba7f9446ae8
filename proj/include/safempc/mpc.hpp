#pragma once

#include <span>
#include <vector>

#include "safempc/ddp.hpp"
#include "safempc/dynamics.hpp"

namespace safempc::mpc {

/// Weights of the swing-up cost
///   l   = w_x x^2 + w_xdot x_dot^2 + w_theta (1 - cos theta)
///         + w_thetadot theta_dot^2 + w_u u^2
///   phi = k_term * (state terms of l).
struct CostSpec {
  double w_x = 1.0;
  double w_xdot = 0.1;
  double w_theta = 10.0;
  double w_thetadot = 0.1;
  double w_u = 0.001;
  double k_term = 10.0;

  void validate() const;
};

class CartPoleCost final : public ddp::CostModel {
 public:
  explicit CartPoleCost(const CostSpec& spec) : spec_(spec) {}

  ddp::RunningCostTerms running(const ddp::Vector& x,
                                const ddp::Vector& u) const override;
  ddp::TerminalCostTerms terminal(const ddp::Vector& x) const override;
  double running_value(const ddp::Vector& x, const ddp::Vector& u) const override;
  double terminal_value(const ddp::Vector& x) const override;

 private:
  double state_value(const ddp::Vector& x) const;
  CostSpec spec_;
};

/// Cart-pole as a ddp::ControlSystem: Gym derivatives, force box limits,
/// theta wrapped after every step and in state differences.
ddp::ControlSystem make_cartpole_system(const dynamics::CartPoleParams& params);

struct MpcConfig {
  int horizon = 50;
  int iterations = 2;
  double alpha = 0.8;
  double lambda_init = 1e-6;
  // Constant force of the plan a controller starts from after reset().
  double fresh_plan_control = 0.01;
  CostSpec cost;

  void validate() const;
};

struct MpcStepResult {
  double control = 0.0;               // clamped first control
  std::vector<double> warm_start;     // shifted sequence, length H - 1
  double cost = 0.0;                  // cost of the solved plan
};

/// One receding-horizon step: a short DDP solve warm-started from `warm`,
/// returning the first control and the left-shifted plan with the last entry
/// duplicated.
MpcStepResult mpc_step(const dynamics::CartPoleState& state,
                       std::span<const double> warm,
                       const dynamics::CartPoleParams& model,
                       const MpcConfig& config);

/// Stateful expert policy that carries the warm start between steps.
class MpcController {
 public:
  MpcController(MpcConfig config, dynamics::CartPoleParams model);

  double act(const dynamics::CartPoleState& state);
  /// Drops the warm start; the next act() solves from the fresh plan.
  void reset();
  void set_model(const dynamics::CartPoleParams& model) { model_ = model; }
  const dynamics::CartPoleParams& model() const { return model_; }
  const std::vector<double>& warm_start() const { return warm_; }

 private:
  MpcConfig config_;
  dynamics::CartPoleParams model_;
  std::vector<double> warm_;
};

}  // namespace safempc::mpc
