#include "safempc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace safempc::dynamics {

namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

}  // namespace

CartPoleState CartPoleState::from_vector(
    const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != 4) throw std::invalid_argument("cart-pole state needs 4 entries");
  return {v[0], v[1], v[2], v[3]};
}

void CartPoleParams::validate() const {
  require(std::isfinite(cart_mass) && cart_mass > 0, "cart_mass must be > 0");
  require(std::isfinite(pole_mass) && pole_mass >= 0, "pole_mass must be >= 0");
  require(std::isfinite(half_length) && half_length > 0, "half_length must be > 0");
  require(std::isfinite(gravity), "gravity must be finite");
  require(std::isfinite(force_limit) && force_limit > 0, "force_limit must be > 0");
  require(std::isfinite(dt) && dt > 0, "dt must be > 0");
}

double wrap_angle(double angle) {
  constexpr double kPi = std::numbers::pi;
  if (angle > -kPi && angle <= kPi) return angle;
  double wrapped = std::remainder(angle, 2.0 * kPi);  // [-pi, pi]
  if (wrapped <= -kPi) wrapped += 2.0 * kPi;
  return wrapped;
}

StateVector derivatives(const CartPoleState& s, double force,
                        const CartPoleParams& p) {
  const double total_mass = p.cart_mass + p.pole_mass;
  const double pole_ml = p.pole_mass * p.half_length;
  const double sin_t = std::sin(s.theta);
  const double cos_t = std::cos(s.theta);

  const double temp =
      (force + pole_ml * s.theta_dot * s.theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (p.gravity * sin_t - cos_t * temp) /
      (p.half_length *
       (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_ml * theta_acc * cos_t / total_mass;

  return {s.x_dot, x_acc, s.theta_dot, theta_acc};
}

CartPoleState step(const CartPoleState& s, double force,
                   const CartPoleParams& p) {
  const double u = std::clamp(force, -p.force_limit, p.force_limit);
  const StateVector next = s.as_vector() + p.dt * derivatives(s, u, p);
  return {next[0], next[1], wrap_angle(next[2]), next[3]};
}

bool is_success(const CartPoleState& s) {
  return -kTrackLimit < s.x && s.x < kTrackLimit &&
         std::abs(s.theta) < kAngleLimit;
}

CartPoleState sample_hanging_start(Rng& rng) {
  CartPoleState s;
  s.x = uniform(rng, -0.05, 0.05);
  s.x_dot = uniform(rng, -0.05, 0.05);
  s.theta = wrap_angle(std::numbers::pi + uniform(rng, -0.1, 0.1));
  s.theta_dot = uniform(rng, -0.05, 0.05);
  return s;
}

int observation_size(ObservationEncoding encoding) {
  return encoding == ObservationEncoding::kSinCos ? 5 : 4;
}

Eigen::VectorXd observe(const CartPoleState& s, ObservationEncoding encoding) {
  Eigen::VectorXd obs(observation_size(encoding));
  if (encoding == ObservationEncoding::kSinCos) {
    obs << s.x, s.x_dot, std::sin(s.theta), std::cos(s.theta), s.theta_dot;
  } else {
    obs << s.x, s.x_dot, s.theta, s.theta_dot;
  }
  return obs;
}

void DisturbanceSchedule::validate() const {
  require(trigger_step >= 0, "disturbance trigger_step must be >= 0");
  if (const auto* m = std::get_if<MassChange>(&kind)) {
    require(std::isfinite(m->cart_mass) && m->cart_mass > 0,
            "mass-change cart_mass must be > 0");
  }
  if (const auto* c = std::get_if<ObservationCorruption>(&kind)) {
    require(c->offset.size() == c->scale.size(),
            "observation corruption offset and scale differ in length");
  }
}

int sample_trigger_step(int horizon, Rng& rng) {
  const int lo = horizon / 4;
  const int hi = std::max(lo, horizon / 2);
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

DisturbedInputs apply_disturbance(const CartPoleParams& params,
                                  const Eigen::VectorXd& observation,
                                  const DisturbanceSchedule& schedule, int t) {
  DisturbedInputs out{params, observation};
  if (t < schedule.trigger_step) return out;
  std::visit(
      [&](const auto& kind) {
        using Kind = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<Kind, MassChange>) {
          out.params.cart_mass = kind.cart_mass;
        } else if constexpr (std::is_same_v<Kind, ObservationCorruption>) {
          if (kind.scale.size() != observation.size()) {
            throw std::invalid_argument(
                "observation corruption length does not match observation");
          }
          out.observation =
              kind.scale.cwiseProduct(observation) + kind.offset;
        }
      },
      schedule.kind);
  return out;
}

}  // namespace safempc::dynamics
