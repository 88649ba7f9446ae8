#pragma once

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace safempc::ddp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Discrete-time view of a continuous system x_dot = f(x, u), integrated with
/// explicit Euler. `difference` and `normalize` let systems with angular
/// coordinates keep deltas and states wrapped; both default to plain
/// Euclidean behaviour when left empty.
struct ControlSystem {
  int state_dim = 0;
  int control_dim = 0;
  double dt = 0.0;
  std::function<Vector(const Vector& x, const Vector& u)> derivative;
  // Optional analytic df/dx and df/du; central differences when empty.
  std::function<void(const Vector& x, const Vector& u, Matrix& f_x, Matrix& f_u)> jacobian;
  // Box limits applied to every control; empty vectors mean unbounded.
  Vector control_lower;
  Vector control_upper;
  std::function<Vector(const Vector& a, const Vector& b)> difference;
  std::function<void(Vector& x)> normalize;

  Vector propagate(const Vector& x, const Vector& u) const;
  Vector clamp(const Vector& u) const;
  Vector diff(const Vector& a, const Vector& b) const;
};

struct RunningCostTerms {
  double value = 0.0;
  Vector l_x;
  Vector l_u;
  Matrix l_xx;
  Matrix l_uu;
  Matrix l_ux;
};

struct TerminalCostTerms {
  double value = 0.0;
  Vector phi_x;
  Matrix phi_xx;
};

/// Running cost l(x, u) (integrated as l * dt) and terminal cost phi(x).
class CostModel {
 public:
  virtual ~CostModel() = default;
  virtual RunningCostTerms running(const Vector& x, const Vector& u) const = 0;
  virtual TerminalCostTerms terminal(const Vector& x) const = 0;
  virtual double running_value(const Vector& x, const Vector& u) const {
    return running(x, u).value;
  }
  virtual double terminal_value(const Vector& x) const {
    return terminal(x).value;
  }
};

/// l = 1/2 x'Qx + 1/2 u'Ru, phi = 1/2 x'Qf x.
class QuadraticCost final : public CostModel {
 public:
  QuadraticCost(Matrix q, Matrix r, Matrix q_final);
  RunningCostTerms running(const Vector& x, const Vector& u) const override;
  TerminalCostTerms terminal(const Vector& x) const override;

 private:
  Matrix q_;
  Matrix r_;
  Matrix q_final_;
};

struct Trajectory {
  std::vector<Vector> states;    // H knots
  std::vector<Vector> controls;  // H - 1 controls

  int horizon() const { return static_cast<int>(states.size()); }
};

struct Gains {
  std::vector<Matrix> feedback;     // K_fb, m x n
  std::vector<Vector> feedforward;  // K_ff, m
};

struct ValueExpansion {
  double value = 0.0;
  Vector v_x;
  Matrix v_xx;
};

struct QExpansion {
  double q0 = 0.0;
  Vector q_x;
  Vector q_u;
  Matrix q_xx;
  Matrix q_ux;
  Matrix q_uu;
};

struct Linearization {
  Matrix phi;  // I + df/dx dt
  Matrix b;    // df/du dt
};

inline constexpr double kJacobianStep = 1e-5;

/// Central finite-difference linearization about (x, u).
Linearization linearize(const ControlSystem& system, const Vector& x,
                        const Vector& u);

/// Quadratic expansion of l dt + V' about the nominal. The Levenberg-Marquardt
/// term `regularization * I` is added to Q_uu.
QExpansion q_expansion(const RunningCostTerms& l, const ValueExpansion& next,
                       const Linearization& lin, double dt,
                       double regularization);

struct BackwardPassResult {
  bool ok = false;
  int failed_step = -1;  // knot where Q_uu + lambda I failed Cholesky
  Gains gains;
  std::vector<ValueExpansion> values;  // H entries, values[H-1] from phi
};

std::vector<Linearization> linearize_trajectory(const ControlSystem& system,
                                                const Trajectory& traj);

BackwardPassResult backward_pass(const Trajectory& traj,
                                 const std::vector<Linearization>& lin,
                                 const CostModel& cost, double dt,
                                 double regularization);

BackwardPassResult backward_pass(const ControlSystem& system,
                                 const Trajectory& traj, const CostModel& cost,
                                 double regularization);

/// Replays u' = u + alpha (K_ff + K_fb dx) through the nonlinear system.
Trajectory forward_pass(const ControlSystem& system, const Trajectory& traj,
                        const Gains& gains, double alpha);

/// Open-loop rollout of `controls` (clamped) from x0.
Trajectory rollout(const ControlSystem& system, const Vector& x0,
                   const std::vector<Vector>& controls);

/// J = sum_t l(x_t, u_t) dt + phi(x_{H-1}).
double trajectory_cost(const ControlSystem& system, const CostModel& cost,
                       const Trajectory& traj);

struct DdpOptions {
  int max_iterations = 50;
  double alpha = 0.8;
  double lambda_init = 1e-6;
  double lambda_min = 1e-6;
  double lambda_max = 1e10;
  double lambda_grow = 10.0;
  double lambda_shrink = 2.0;
  // Stop once |dJ| < tolerance * max(1, |J|).
  double tolerance = 1e-6;
};

struct DdpResult {
  Trajectory trajectory;
  Gains gains;
  std::vector<double> cost_history;  // initial cost, then each accepted step
  int iterations = 0;
  bool converged = false;
};

/// Iterated backward/forward passes. Throws InvalidHorizon if the initial
/// control sequence implies H < 2.
DdpResult ddp_solve(const ControlSystem& system, const CostModel& cost,
                    const Vector& x0, const std::vector<Vector>& initial_controls,
                    const DdpOptions& options);

}  // namespace safempc::ddp
