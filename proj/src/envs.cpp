#include "vqrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "vqrl/rng.hpp"
#include "json.hpp"

namespace vqrl::envs {

double wrap_angle(double x) {
  x = std::fmod(x + M_PI, 2.0 * M_PI);
  if (x <= 0.0) x += 2.0 * M_PI;
  return x - M_PI;
}

std::string EnvMetadata::to_json() const {
  nlohmann::json j{{"name", name},
                   {"obs_dim", obs_dim},
                   {"action_dim", action_dim},
                   {"action_lo", action_lo},
                   {"action_hi", action_hi},
                   {"r_min", r_min},
                   {"r_max", r_max},
                   {"horizon", horizon}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Pendulum

PendulumEnv::PendulumEnv() {
  meta_.name = "pendulum";
  meta_.obs_dim = 3;
  meta_.action_dim = 1;
  meta_.action_lo = -kMaxTorque;
  meta_.action_hi = kMaxTorque;
  meta_.r_min = -1600.0;
  meta_.r_max = -100.0;
  meta_.horizon = 200;
}

Vec PendulumEnv::obs() const {
  return {std::cos(theta_), std::sin(theta_), theta_dot_};
}

Vec PendulumEnv::reset(std::uint64_t seed) {
  Rng rng(seed);
  theta_ = wrap_angle(M_PI + rng.uniform(-0.1, 0.1));
  theta_dot_ = rng.uniform(-0.05, 0.05);
  steps_ = 0;
  active_ = true;
  return obs();
}

void PendulumEnv::set_state(double theta, double theta_dot) {
  theta_ = wrap_angle(theta);
  theta_dot_ = theta_dot;
  steps_ = 0;
  active_ = true;
}

double PendulumEnv::energy() const {
  const double inertia = kMass * kLength * kLength / 3.0;
  return 0.5 * inertia * theta_dot_ * theta_dot_ +
         kMass * kGravity * 0.5 * kLength * std::cos(theta_);
}

Transition PendulumEnv::step(std::span<const double> action) {
  if (!active_) throw std::logic_error("PendulumEnv::step: episode is done (call reset)");
  if (action.size() != 1) throw std::invalid_argument("PendulumEnv::step: expected 1 action dim");

  Transition t;
  t.s = obs();
  double u = std::clamp(action[0], -kMaxTorque, kMaxTorque);
  t.a = {u};

  // Semi-implicit Euler on theta_ddot = 3g/(2l) sin(theta) + 3/(m l^2) u.
  double theta_ddot = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                      3.0 / (kMass * kLength * kLength) * u;
  theta_dot_ += theta_ddot * dt_;
  theta_dot_ = std::clamp(theta_dot_, -kMaxSpeed, kMaxSpeed);
  theta_ = wrap_angle(theta_ + theta_dot_ * dt_);

  t.r = -(theta_ * theta_ + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u);
  ++steps_;
  t.done = steps_ >= meta_.horizon;
  if (t.done) active_ = false;
  t.s_next = obs();
  return t;
}

std::unique_ptr<Env> PendulumEnv::clone_fresh() const {
  return std::make_unique<PendulumEnv>();
}

// ---------------------------------------------------------------------------
// Reacher

ReacherEnv::ReacherEnv() {
  meta_.name = "reacher";
  meta_.obs_dim = 8;
  meta_.action_dim = 2;
  meta_.action_lo = -1.0;
  meta_.action_hi = 1.0;
  meta_.r_min = -60.0;
  meta_.r_max = -5.0;
  meta_.horizon = 200;
}

Vec ReacherEnv::obs() const {
  return {std::cos(q_[0]), std::sin(q_[0]), std::cos(q_[1]), std::sin(q_[1]),
          qd_[0], qd_[1], target_[0], target_[1]};
}

void ReacherEnv::fingertip(double* x, double* y) const {
  *x = kLink * std::cos(q_[0]) + kLink * std::cos(q_[0] + q_[1]);
  *y = kLink * std::sin(q_[0]) + kLink * std::sin(q_[0] + q_[1]);
}

Vec ReacherEnv::reset(std::uint64_t seed) {
  Rng rng(seed);
  q_[0] = rng.uniform(-M_PI, M_PI);
  q_[1] = rng.uniform(-M_PI, M_PI);
  qd_[0] = rng.uniform(-0.05, 0.05);
  qd_[1] = rng.uniform(-0.05, 0.05);
  // Target in the reachable annulus.
  double radius = rng.uniform(0.05, 2.0 * kLink * 0.95);
  double phi = rng.uniform(-M_PI, M_PI);
  target_[0] = radius * std::cos(phi);
  target_[1] = radius * std::sin(phi);
  steps_ = 0;
  active_ = true;
  return obs();
}

Transition ReacherEnv::step(std::span<const double> action) {
  if (!active_) throw std::logic_error("ReacherEnv::step: episode is done (call reset)");
  if (action.size() != 2) throw std::invalid_argument("ReacherEnv::step: expected 2 action dims");

  Transition t;
  t.s = obs();
  double a0 = std::clamp(action[0], meta_.action_lo, meta_.action_hi);
  double a1 = std::clamp(action[1], meta_.action_lo, meta_.action_hi);
  t.a = {a0, a1};

  // Damped joint acceleration, semi-implicit Euler.
  const double gain = 10.0, damping = 1.0;
  qd_[0] = std::clamp(qd_[0] + (gain * a0 - damping * qd_[0]) * dt_, -kMaxSpeed, kMaxSpeed);
  qd_[1] = std::clamp(qd_[1] + (gain * a1 - damping * qd_[1]) * dt_, -kMaxSpeed, kMaxSpeed);
  q_[0] = wrap_angle(q_[0] + qd_[0] * dt_);
  q_[1] = wrap_angle(q_[1] + qd_[1] * dt_);

  double fx = 0.0, fy = 0.0;
  fingertip(&fx, &fy);
  double dx = fx - target_[0], dy = fy - target_[1];
  t.r = -(dx * dx + dy * dy);
  ++steps_;
  t.done = steps_ >= meta_.horizon;
  if (t.done) active_ = false;
  t.s_next = obs();
  return t;
}

std::unique_ptr<Env> ReacherEnv::clone_fresh() const {
  return std::make_unique<ReacherEnv>();
}

std::unique_ptr<Env> make_env(const std::string& name) {
  if (name == "pendulum") return std::make_unique<PendulumEnv>();
  if (name == "reacher") return std::make_unique<ReacherEnv>();
  throw std::invalid_argument("make_env: unknown environment '" + name + "'");
}

}  // namespace vqrl::envs
