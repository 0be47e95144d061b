#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vqrl::envs {

using Vec = std::vector<double>;

struct Transition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s_next;
  bool done = false;
};

struct EnvMetadata {
  std::string name;
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  double action_lo = -1.0;
  double action_hi = 1.0;
  double r_min = 0.0;  // return normalization bounds for the robustness score
  double r_max = 0.0;
  std::size_t horizon = 200;

  std::string to_json() const;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvMetadata& metadata() const = 0;
  virtual Vec reset(std::uint64_t seed) = 0;
  virtual Transition step(std::span<const double> action) = 0;
  virtual std::unique_ptr<Env> clone_fresh() const = 0;
};

/// Swing-up pendulum. theta measured from upright, wrapped to (-pi, pi];
/// starts near hanging-down. obs = (cos theta, sin theta, theta_dot).
class PendulumEnv final : public Env {
 public:
  PendulumEnv();
  const EnvMetadata& metadata() const override { return meta_; }
  Vec reset(std::uint64_t seed) override;
  Transition step(std::span<const double> action) override;
  std::unique_ptr<Env> clone_fresh() const override;

  // Internal state access for physics tests.
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  void set_state(double theta, double theta_dot);
  void set_dt(double dt) { dt_ = dt; }
  double energy() const;  // rod pendulum: I/2 w^2 + m g l/2 cos(theta)

  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;

 private:
  Vec obs() const;
  EnvMetadata meta_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  double dt_ = 0.05;
  std::size_t steps_ = 0;
  bool active_ = false;
};

/// Two-joint planar reacher with a random target.
/// obs = (cos q1, sin q1, cos q2, sin q2, qd1, qd2, target_x, target_y).
class ReacherEnv final : public Env {
 public:
  ReacherEnv();
  const EnvMetadata& metadata() const override { return meta_; }
  Vec reset(std::uint64_t seed) override;
  Transition step(std::span<const double> action) override;
  std::unique_ptr<Env> clone_fresh() const override;

  void fingertip(double* x, double* y) const;

  static constexpr double kLink = 0.1;
  static constexpr double kMaxSpeed = 8.0;

 private:
  Vec obs() const;
  EnvMetadata meta_;
  double q_[2] = {0.0, 0.0};
  double qd_[2] = {0.0, 0.0};
  double target_[2] = {0.0, 0.0};
  double dt_ = 0.05;
  std::size_t steps_ = 0;
  bool active_ = false;
};

std::unique_ptr<Env> make_env(const std::string& name);

double wrap_angle(double x);  // into (-pi, pi]

}  // namespace vqrl::envs
