#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <variant>

#include <Eigen/Dense>

namespace impact {

struct DiscreteActions {
  int n = 2;
  bool operator==(const DiscreteActions&) const = default;
};

struct ContinuousActions {
  int dim = 1;
  Eigen::VectorXd low;
  Eigen::VectorXd high;
  bool operator==(const ContinuousActions& o) const { return dim == o.dim && low == o.low && high == o.high; }
};

struct EnvSpec {
  int obs_dim = 1;
  std::variant<DiscreteActions, ContinuousActions> actions;
  int max_episode_steps = 200;

  bool discrete() const { return std::holds_alternative<DiscreteActions>(actions); }
  /// Width of the policy head: number of actions or action dimension.
  int action_outputs() const;
  /// Width of a stored action row (1 for discrete).
  int action_width() const;
  bool operator==(const EnvSpec&) const = default;
};

struct StepResult {
  Eigen::VectorXd obs;
  double reward = 0.0;
  bool done = false;
  int episode_steps = 0;
};

/// Seedable single-agent environment. Instances are owned by one thread.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvSpec spec() const = 0;
  Eigen::VectorXd reset(std::uint64_t seed);
  /// Throws EnvError on an invalid action or when called after `done`.
  StepResult step(const Eigen::VectorXd& action);

  bool done() const { return done_; }
  int episode_steps() const { return steps_; }

 protected:
  virtual Eigen::VectorXd reset_state(std::mt19937_64& rng) = 0;
  /// Advances the dynamics; `action` is already validated (and clipped for
  /// continuous spaces). Sets `terminal` when the task itself ends.
  virtual Eigen::VectorXd advance(const Eigen::VectorXd& action, double& reward, bool& terminal) = 0;

 private:
  bool done_ = true;
  int steps_ = 0;
};

/// Classic cart-pole balancing: Euler integration with dt = 0.02, +1 reward
/// per step, termination when |angle| > 12 degrees or |x| > 2.4.
class CartPole final : public Environment {
 public:
  static constexpr double kGravity = 9.8;
  static constexpr double kCartMass = 1.0;
  static constexpr double kPoleMass = 0.1;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kForce = 10.0;
  static constexpr double kDt = 0.02;
  static constexpr double kAngleLimit = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
  static constexpr double kPositionLimit = 2.4;

  explicit CartPole(int max_episode_steps = 200) : max_steps_(max_episode_steps) {}

  EnvSpec spec() const override;

  /// One Euler step of the cart-pole ODE from `state` = (x, x_dot, theta,
  /// theta_dot) under push direction `action` (0 left, 1 right).
  static Eigen::Vector4d dynamics(const Eigen::Vector4d& state, int action);

 protected:
  Eigen::VectorXd reset_state(std::mt19937_64& rng) override;
  Eigen::VectorXd advance(const Eigen::VectorXd& action, double& reward, bool& terminal) override;

 private:
  int max_steps_;
  Eigen::Vector4d state_ = Eigen::Vector4d::Zero();
};

/// Point mass on a line, driven toward the origin. Observation (position,
/// velocity); action a force in [-1, 1]. Reward -(x - goal)^2 - 0.01 a^2 is
/// charged on the pre-step position. Semi-implicit Euler with dt = 0.1;
/// walls at |x| = 2 stop the mass.
class PointMass1D final : public Environment {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kWall = 2.0;
  static constexpr double kActionCost = 0.01;
  static constexpr double kGoal = 0.0;

  explicit PointMass1D(int max_episode_steps = 200) : max_steps_(max_episode_steps) {}

  EnvSpec spec() const override;

  static Eigen::Vector2d dynamics(const Eigen::Vector2d& state, double force);
  static double reward(const Eigen::Vector2d& state, double force);

 protected:
  Eigen::VectorXd reset_state(std::mt19937_64& rng) override;
  Eigen::VectorXd advance(const Eigen::VectorXd& action, double& reward, bool& terminal) override;

 private:
  int max_steps_;
  Eigen::Vector2d state_ = Eigen::Vector2d::Zero();
};

/// "cartpole" or "pointmass1d"; throws ConfigError otherwise.
std::unique_ptr<Environment> make_env(const std::string& id, int max_episode_steps = 0);
bool is_known_env(const std::string& id);
EnvSpec env_spec(const std::string& id);

}  // namespace impact
