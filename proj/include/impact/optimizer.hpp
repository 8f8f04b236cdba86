#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

#include "impact/nnet.hpp"

namespace impact {

enum class OptimizerKind { adam, sgd };

struct UpdateRule {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-4;
  /// Separate step size for value-only parameters; a shared trunk always
  /// moves at `lr`.
  std::optional<double> value_lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm ceiling; non-positive disables clipping.
  double grad_clip = 0.0;
};

struct OptimizerState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::uint64_t steps = 0;
  double last_grad_norm = 0.0;  // before clipping
};

/// Descent step on a minimized loss. Returns a new ParamSet with version + 1
/// and log-std clamped to the layout bounds. Throws NumericalError if the
/// result is not finite.
ParamSet apply_update(const ParamSet& params, const GradSet& grads, OptimizerState& state, const UpdateRule& rule);

/// Scales `flat` in place so its L2 norm is at most `max_norm`; returns the
/// original norm.
double clip_by_global_norm(Eigen::Ref<Eigen::VectorXd> flat, double max_norm);

}  // namespace impact
