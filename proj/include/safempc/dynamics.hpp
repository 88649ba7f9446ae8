#pragma once

#include <numbers>
#include <optional>
#include <variant>

#include <Eigen/Core>

#include "safempc/random.hpp"

namespace safempc::dynamics {

using StateVector = Eigen::Vector4d;

/// Cart-pole state. theta = 0 is upright and is kept in (-pi, pi].
struct CartPoleState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;

  StateVector as_vector() const { return {x, x_dot, theta, theta_dot}; }
  static CartPoleState from_vector(const Eigen::Ref<const Eigen::VectorXd>& v);

  bool operator==(const CartPoleState&) const = default;
};

/// Plant parameters. Defaults are the classic Gym cart-pole constants.
struct CartPoleParams {
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double gravity = 9.8;
  double force_limit = 10.0;
  double dt = 0.02;

  // Throws std::invalid_argument naming the first violated bound.
  void validate() const;
};

inline constexpr double kTrackLimit = 2.4;
inline constexpr double kAngleLimit = 15.0 * std::numbers::pi / 180.0;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

/// Continuous-time state derivative (x_dot, x_ddot, theta_dot, theta_ddot)
/// of the Gym cart-pole equations. The force is used as given.
StateVector derivatives(const CartPoleState& s, double force,
                        const CartPoleParams& p);

/// One explicit Euler step with the force clamped to +-force_limit.
CartPoleState step(const CartPoleState& s, double force,
                   const CartPoleParams& p);

/// True iff -2.4 < x < 2.4 and |theta| < 15 degrees.
bool is_success(const CartPoleState& s);

/// Randomized hanging start: theta = pi + U(-0.1, 0.1), everything else
/// U(-0.05, 0.05).
CartPoleState sample_hanging_start(Rng& rng);

// --- observations --------------------------------------------------------

enum class ObservationEncoding {
  kSinCos,  // [x, x_dot, sin(theta), cos(theta), theta_dot]
  kRaw,     // [x, x_dot, theta, theta_dot]
};

int observation_size(ObservationEncoding encoding);
Eigen::VectorXd observe(const CartPoleState& s, ObservationEncoding encoding);

// --- disturbances --------------------------------------------------------

struct NoDisturbance {};

struct MassChange {
  double cart_mass = 0.1;
};

/// obs' = scale .* obs + offset, applied to what the learner sees.
struct ObservationCorruption {
  Eigen::VectorXd offset;
  Eigen::VectorXd scale;
};

using DisturbanceKind = std::variant<NoDisturbance, MassChange, ObservationCorruption>;

struct DisturbanceSchedule {
  int trigger_step = 0;
  DisturbanceKind kind = NoDisturbance{};

  bool is_none() const { return std::holds_alternative<NoDisturbance>(kind); }
  void validate() const;
};

/// Default trigger time: uniform integer in [horizon / 4, horizon / 2].
int sample_trigger_step(int horizon, Rng& rng);

struct DisturbedInputs {
  CartPoleParams params;
  Eigen::VectorXd observation;
};

/// Returns the plant parameters and observation in effect at step t.
DisturbedInputs apply_disturbance(const CartPoleParams& params,
                                  const Eigen::VectorXd& observation,
                                  const DisturbanceSchedule& schedule, int t);

}  // namespace safempc::dynamics
