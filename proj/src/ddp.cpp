#include "safempc/ddp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "safempc/errors.hpp"

namespace safempc::ddp {

Vector ControlSystem::propagate(const Vector& x, const Vector& u) const {
  Vector next = x + derivative(x, u) * dt;
  if (normalize) normalize(next);
  return next;
}

Vector ControlSystem::clamp(const Vector& u) const {
  if (control_lower.size() == 0) return u;
  return u.cwiseMax(control_lower).cwiseMin(control_upper);
}

Vector ControlSystem::diff(const Vector& a, const Vector& b) const {
  return difference ? difference(a, b) : Vector(a - b);
}

QuadraticCost::QuadraticCost(Matrix q, Matrix r, Matrix q_final)
    : q_(std::move(q)), r_(std::move(r)), q_final_(std::move(q_final)) {}

RunningCostTerms QuadraticCost::running(const Vector& x, const Vector& u) const {
  RunningCostTerms t;
  t.l_x = q_ * x;
  t.l_u = r_ * u;
  t.value = 0.5 * (x.dot(t.l_x) + u.dot(t.l_u));
  t.l_xx = q_;
  t.l_uu = r_;
  t.l_ux = Matrix::Zero(u.size(), x.size());
  return t;
}

TerminalCostTerms QuadraticCost::terminal(const Vector& x) const {
  TerminalCostTerms t;
  t.phi_x = q_final_ * x;
  t.value = 0.5 * x.dot(t.phi_x);
  t.phi_xx = q_final_;
  return t;
}

Linearization linearize(const ControlSystem& system, const Vector& x,
                        const Vector& u) {
  const int n = system.state_dim;
  const int m = system.control_dim;
  Linearization lin;
  lin.phi = Matrix::Identity(n, n);
  lin.b = Matrix::Zero(n, m);
  if (system.jacobian) {
    Matrix f_x, f_u;
    system.jacobian(x, u, f_x, f_u);
    if (f_x.rows() != n || f_x.cols() != n || f_u.rows() != n || f_u.cols() != m) {
      throw ShapeMismatch("analytic jacobian has the wrong shape");
    }
    lin.phi += f_x * system.dt;
    lin.b = f_u * system.dt;
    return lin;
  }
  const double scale = system.dt / (2.0 * kJacobianStep);

  Vector xp = x;
  for (int i = 0; i < n; ++i) {
    xp[i] = x[i] + kJacobianStep;
    const Vector f_plus = system.derivative(xp, u);
    xp[i] = x[i] - kJacobianStep;
    const Vector f_minus = system.derivative(xp, u);
    xp[i] = x[i];
    lin.phi.col(i) += (f_plus - f_minus) * scale;
  }
  Vector up = u;
  for (int j = 0; j < m; ++j) {
    up[j] = u[j] + kJacobianStep;
    const Vector f_plus = system.derivative(x, up);
    up[j] = u[j] - kJacobianStep;
    const Vector f_minus = system.derivative(x, up);
    up[j] = u[j];
    lin.b.col(j) = (f_plus - f_minus) * scale;
  }
  return lin;
}

QExpansion q_expansion(const RunningCostTerms& l, const ValueExpansion& next,
                       const Linearization& lin, double dt,
                       double regularization) {
  QExpansion q;
  const Matrix vxx_b = next.v_xx * lin.b;
  q.q0 = l.value * dt + next.value;
  q.q_x = l.l_x * dt + lin.phi.transpose() * next.v_x;
  q.q_u = l.l_u * dt + lin.b.transpose() * next.v_x;
  q.q_xx = l.l_xx * dt + lin.phi.transpose() * next.v_xx * lin.phi;
  q.q_ux = l.l_ux * dt + vxx_b.transpose() * lin.phi;
  q.q_uu = l.l_uu * dt + lin.b.transpose() * vxx_b;
  q.q_xx = 0.5 * (q.q_xx + q.q_xx.transpose()).eval();
  q.q_uu = 0.5 * (q.q_uu + q.q_uu.transpose()).eval();
  q.q_uu.diagonal().array() += regularization;
  return q;
}

std::vector<Linearization> linearize_trajectory(const ControlSystem& system,
                                                const Trajectory& traj) {
  std::vector<Linearization> lin;
  lin.reserve(traj.controls.size());
  for (std::size_t t = 0; t < traj.controls.size(); ++t) {
    lin.push_back(linearize(system, traj.states[t], traj.controls[t]));
  }
  return lin;
}

BackwardPassResult backward_pass(const Trajectory& traj,
                                 const std::vector<Linearization>& lin,
                                 const CostModel& cost, double dt,
                                 double regularization) {
  const int horizon = traj.horizon();
  if (horizon < 2) throw InvalidHorizon("backward pass needs H >= 2");
  const int steps = horizon - 1;

  BackwardPassResult out;
  out.values.resize(horizon);
  out.gains.feedback.resize(steps);
  out.gains.feedforward.resize(steps);

  const TerminalCostTerms terminal = cost.terminal(traj.states.back());
  ValueExpansion& last = out.values.back();
  last.value = terminal.value;
  last.v_x = terminal.phi_x;
  last.v_xx = 0.5 * (terminal.phi_xx + terminal.phi_xx.transpose());

  for (int t = steps - 1; t >= 0; --t) {
    const RunningCostTerms l = cost.running(traj.states[t], traj.controls[t]);
    const QExpansion q =
        q_expansion(l, out.values[t + 1], lin[t], dt, regularization);

    const Eigen::LLT<Matrix> llt(q.q_uu);
    if (llt.info() != Eigen::Success) {
      out.ok = false;
      out.failed_step = t;
      return out;
    }
    Vector k_ff = -llt.solve(q.q_u);
    Matrix k_fb = -llt.solve(q.q_ux);

    ValueExpansion& v = out.values[t];
    v.value = q.q0 + 0.5 * q.q_u.dot(k_ff);
    v.v_x = q.q_x + q.q_ux.transpose() * k_ff;
    v.v_xx = q.q_xx + q.q_ux.transpose() * k_fb;
    v.v_xx = 0.5 * (v.v_xx + v.v_xx.transpose()).eval();

    out.gains.feedforward[t] = std::move(k_ff);
    out.gains.feedback[t] = std::move(k_fb);
  }
  out.ok = true;
  return out;
}

BackwardPassResult backward_pass(const ControlSystem& system,
                                 const Trajectory& traj, const CostModel& cost,
                                 double regularization) {
  return backward_pass(traj, linearize_trajectory(system, traj), cost,
                       system.dt, regularization);
}

Trajectory forward_pass(const ControlSystem& system, const Trajectory& traj,
                        const Gains& gains, double alpha) {
  Trajectory next;
  next.states.resize(traj.states.size());
  next.controls.resize(traj.controls.size());
  next.states[0] = traj.states[0];
  for (std::size_t t = 0; t < traj.controls.size(); ++t) {
    const Vector dx = system.diff(next.states[t], traj.states[t]);
    const Vector du = gains.feedforward[t] + gains.feedback[t] * dx;
    next.controls[t] = system.clamp(traj.controls[t] + alpha * du);
    next.states[t + 1] = system.propagate(next.states[t], next.controls[t]);
  }
  return next;
}

Trajectory rollout(const ControlSystem& system, const Vector& x0,
                   const std::vector<Vector>& controls) {
  Trajectory traj;
  traj.states.reserve(controls.size() + 1);
  traj.controls.reserve(controls.size());
  traj.states.push_back(x0);
  for (const Vector& u : controls) {
    traj.controls.push_back(system.clamp(u));
    traj.states.push_back(system.propagate(traj.states.back(), traj.controls.back()));
  }
  return traj;
}

double trajectory_cost(const ControlSystem& system, const CostModel& cost,
                       const Trajectory& traj) {
  double total = 0.0;
  for (std::size_t t = 0; t < traj.controls.size(); ++t) {
    total += cost.running_value(traj.states[t], traj.controls[t]) * system.dt;
  }
  return total + cost.terminal_value(traj.states.back());
}

DdpResult ddp_solve(const ControlSystem& system, const CostModel& cost,
                    const Vector& x0, const std::vector<Vector>& initial_controls,
                    const DdpOptions& options) {
  if (initial_controls.empty()) {
    throw InvalidHorizon("ddp_solve needs H >= 2 (at least one control)");
  }
  if (options.max_iterations < 1) {
    throw ConfigError("ddp_solve needs max_iterations >= 1");
  }

  DdpResult result;
  result.trajectory = rollout(system, x0, initial_controls);
  double cost_now = trajectory_cost(system, cost, result.trajectory);
  result.cost_history.push_back(cost_now);

  double lambda = options.lambda_init;
  const auto grow = [&] {
    lambda = std::max(lambda * options.lambda_grow, options.lambda_min);
  };

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const std::vector<Linearization> lin =
        linearize_trajectory(system, result.trajectory);

    bool accepted = false;
    double cost_new = cost_now;
    while (!accepted && lambda <= options.lambda_max) {
      BackwardPassResult bp =
          backward_pass(result.trajectory, lin, cost, system.dt, lambda);
      if (!bp.ok) {
        grow();
        continue;
      }
      for (double step : {options.alpha, 0.5 * options.alpha}) {
        Trajectory candidate =
            forward_pass(system, result.trajectory, bp.gains, step);
        const double j = trajectory_cost(system, cost, candidate);
        if (std::isfinite(j) && j <= cost_now) {
          result.trajectory = std::move(candidate);
          result.gains = std::move(bp.gains);
          cost_new = j;
          accepted = true;
          break;
        }
      }
      if (!accepted) grow();
    }
    result.iterations = iter + 1;
    if (!accepted) break;  // lambda exceeded lambda_max

    lambda /= options.lambda_shrink;
    const double delta = cost_now - cost_new;
    cost_now = cost_new;
    result.cost_history.push_back(cost_now);
    if (std::abs(delta) < options.tolerance * std::max(1.0, std::abs(cost_now))) {
      result.converged = true;
      break;
    }
  }

  if (result.gains.feedforward.empty()) {
    // No accepted step: report zero gains so callers always get H - 1 entries.
    const int m = system.control_dim;
    const int n = system.state_dim;
    result.gains.feedforward.assign(initial_controls.size(), Vector::Zero(m));
    result.gains.feedback.assign(initial_controls.size(), Matrix::Zero(m, n));
  }
  return result;
}

}  // namespace safempc::ddp
