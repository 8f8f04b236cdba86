#include "impact/optimizer.hpp"

#include <cmath>

#include "impact/errors.hpp"

namespace impact {

double clip_by_global_norm(Eigen::Ref<Eigen::VectorXd> flat, double max_norm) {
  const double norm = flat.norm();
  if (max_norm > 0.0 && norm > max_norm) flat *= max_norm / norm;
  return norm;
}

ParamSet apply_update(const ParamSet& params, const GradSet& grads, OptimizerState& state, const UpdateRule& rule) {
  Eigen::VectorXd theta = params.tensors.flatten();
  Eigen::VectorXd g = grads.flatten();
  if (g.size() != theta.size()) throw ShapeError("gradient does not match parameter shape");
  if (!g.allFinite()) throw NumericalError("non-finite gradient");
  state.last_grad_norm = clip_by_global_norm(g, rule.grad_clip);

  Eigen::VectorXd lr = Eigen::VectorXd::Constant(theta.size(), rule.lr);
  if (rule.value_lr) {
    const auto [begin, end] = params.tensors.value_range();
    lr.segment(begin, end - begin).setConstant(*rule.value_lr);
  }

  if (rule.kind == OptimizerKind::sgd) {
    theta.array() -= lr.array() * g.array();
  } else {
    if (state.first_moment.size() != theta.size()) {
      state.first_moment = Eigen::VectorXd::Zero(theta.size());
      state.second_moment = Eigen::VectorXd::Zero(theta.size());
      state.steps = 0;
    }
    ++state.steps;
    state.first_moment = rule.beta1 * state.first_moment + (1.0 - rule.beta1) * g;
    state.second_moment = rule.beta2 * state.second_moment + (1.0 - rule.beta2) * g.cwiseAbs2();
    const double t = static_cast<double>(state.steps);
    const double bias1 = 1.0 - std::pow(rule.beta1, t);
    const double bias2 = 1.0 - std::pow(rule.beta2, t);
    theta.array() -= lr.array() * (state.first_moment.array() / bias1) /
                     ((state.second_moment.array() / bias2).sqrt() + rule.eps);
  }

  ParamSet out{params.layout, params.tensors, params.version + 1};
  out.tensors.assign_flat(theta);
  if (out.tensors.log_std.size() > 0) {
    out.tensors.log_std = out.tensors.log_std.cwiseMax(params.layout.log_std_min).cwiseMin(params.layout.log_std_max);
  }
  if (!out.tensors.all_finite()) throw NumericalError("parameters became non-finite after update");
  return out;
}

}  // namespace impact
