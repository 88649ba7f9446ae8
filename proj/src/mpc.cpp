#include "safempc/mpc.hpp"

#include <algorithm>
#include <cmath>

#include "safempc/errors.hpp"

namespace safempc::mpc {

using ddp::Matrix;
using ddp::Vector;

void CostSpec::validate() const {
  for (double w : {w_x, w_xdot, w_theta, w_thetadot, k_term}) {
    if (!(std::isfinite(w) && w >= 0)) throw ConfigError("cost weights must be >= 0");
  }
  if (!(std::isfinite(w_u) && w_u > 0)) throw ConfigError("cost w_u must be > 0");
}

double CartPoleCost::state_value(const Vector& x) const {
  return spec_.w_x * x[0] * x[0] + spec_.w_xdot * x[1] * x[1] +
         spec_.w_theta * (1.0 - std::cos(x[2])) +
         spec_.w_thetadot * x[3] * x[3];
}

double CartPoleCost::running_value(const Vector& x, const Vector& u) const {
  return state_value(x) + spec_.w_u * u[0] * u[0];
}

double CartPoleCost::terminal_value(const Vector& x) const {
  return spec_.k_term * state_value(x);
}

ddp::RunningCostTerms CartPoleCost::running(const Vector& x,
                                            const Vector& u) const {
  ddp::RunningCostTerms t;
  t.value = running_value(x, u);
  t.l_x.resize(4);
  t.l_x << 2.0 * spec_.w_x * x[0], 2.0 * spec_.w_xdot * x[1],
      spec_.w_theta * std::sin(x[2]), 2.0 * spec_.w_thetadot * x[3];
  t.l_xx = Matrix::Zero(4, 4);
  t.l_xx.diagonal() << 2.0 * spec_.w_x, 2.0 * spec_.w_xdot,
      spec_.w_theta * std::cos(x[2]), 2.0 * spec_.w_thetadot;
  t.l_u = Vector::Constant(1, 2.0 * spec_.w_u * u[0]);
  t.l_uu = Matrix::Constant(1, 1, 2.0 * spec_.w_u);
  t.l_ux = Matrix::Zero(1, 4);
  return t;
}

ddp::TerminalCostTerms CartPoleCost::terminal(const Vector& x) const {
  const double k = spec_.k_term;
  ddp::TerminalCostTerms t;
  t.value = terminal_value(x);
  t.phi_x.resize(4);
  t.phi_x << 2.0 * k * spec_.w_x * x[0], 2.0 * k * spec_.w_xdot * x[1],
      k * spec_.w_theta * std::sin(x[2]), 2.0 * k * spec_.w_thetadot * x[3];
  t.phi_xx = Matrix::Zero(4, 4);
  t.phi_xx.diagonal() << 2.0 * k * spec_.w_x, 2.0 * k * spec_.w_xdot,
      k * spec_.w_theta * std::cos(x[2]), 2.0 * k * spec_.w_thetadot;
  return t;
}

ddp::ControlSystem make_cartpole_system(const dynamics::CartPoleParams& params) {
  ddp::ControlSystem sys;
  sys.state_dim = 4;
  sys.control_dim = 1;
  sys.dt = params.dt;
  sys.derivative = [params](const Vector& x, const Vector& u) -> Vector {
    return dynamics::derivatives(dynamics::CartPoleState::from_vector(x), u[0],
                                 params);
  };
  sys.control_lower = Vector::Constant(1, -params.force_limit);
  sys.control_upper = Vector::Constant(1, params.force_limit);
  sys.difference = [](const Vector& a, const Vector& b) -> Vector {
    Vector d = a - b;
    d[2] = dynamics::wrap_angle(d[2]);
    return d;
  };
  sys.normalize = [](Vector& x) { x[2] = dynamics::wrap_angle(x[2]); };
  return sys;
}

void MpcConfig::validate() const {
  if (horizon < 2) throw InvalidHorizon("mpc horizon must be >= 2");
  if (iterations < 1) throw ConfigError("mpc iterations must be >= 1");
  if (!(alpha > 0 && alpha <= 1)) throw ConfigError("mpc alpha must be in (0, 1]");
  if (!(lambda_init >= 0)) throw ConfigError("mpc lambda_init must be >= 0");
  if (!std::isfinite(fresh_plan_control)) {
    throw ConfigError("mpc fresh_plan_control must be finite");
  }
  cost.validate();
}

MpcStepResult mpc_step(const dynamics::CartPoleState& state,
                       std::span<const double> warm,
                       const dynamics::CartPoleParams& model,
                       const MpcConfig& config) {
  if (config.horizon < 2) throw InvalidHorizon("mpc horizon must be >= 2");
  const std::size_t steps = static_cast<std::size_t>(config.horizon - 1);

  if (warm.size() != steps) throw ShapeMismatch("mpc warm start must have horizon - 1 entries");

  std::vector<Vector> controls(steps, Vector::Zero(1));
  for (std::size_t t = 0; t < steps; ++t) controls[t][0] = warm[t];

  const ddp::ControlSystem system = make_cartpole_system(model);
  const CartPoleCost cost(config.cost);
  ddp::DdpOptions options;
  options.max_iterations = config.iterations;
  options.alpha = config.alpha;
  options.lambda_init = config.lambda_init;
  const ddp::DdpResult solved =
      ddp::ddp_solve(system, cost, state.as_vector(), controls, options);

  MpcStepResult out;
  const auto& plan = solved.trajectory.controls;
  out.control = std::clamp(plan[0][0], -model.force_limit, model.force_limit);
  out.warm_start.resize(steps);
  for (std::size_t t = 0; t + 1 < steps; ++t) out.warm_start[t] = plan[t + 1][0];
  out.warm_start[steps - 1] = plan[steps - 1][0];
  out.cost = solved.cost_history.back();
  return out;
}

MpcController::MpcController(MpcConfig config, dynamics::CartPoleParams model)
    : config_(std::move(config)), model_(model) {
  config_.validate();
  reset();
}

void MpcController::reset() {
  warm_.assign(static_cast<std::size_t>(config_.horizon - 1),
               config_.fresh_plan_control);
}

double MpcController::act(const dynamics::CartPoleState& state) {
  MpcStepResult r = mpc_step(state, warm_, model_, config_);
  warm_ = std::move(r.warm_start);
  return r.control;
}

}  // namespace safempc::mpc
