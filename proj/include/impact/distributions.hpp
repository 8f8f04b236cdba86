#pragma once

#include <random>

#include <Eigen/Dense>

#include "impact/nnet.hpp"

namespace impact {

/// A single action distribution: logits, or mean plus log-std.
struct DistParams {
  HeadKind kind = HeadKind::categorical;
  Eigen::VectorXd params;
  Eigen::VectorXd log_std;

  static DistParams categorical(Eigen::VectorXd logits);
  static DistParams gaussian(Eigen::VectorXd mean, Eigen::VectorXd log_std);
};

DistParams row(const DistBatch& batch, Eigen::Index i);

/// Actions are stored as vectors: a categorical action is a length-1 vector
/// holding the index, a Gaussian action is the raw (unclipped) sample.
using Action = Eigen::VectorXd;

Eigen::VectorXd categorical_probs(const Eigen::Ref<const Eigen::VectorXd>& logits);

double log_prob(const DistParams& dist, const Action& action);
double entropy(const DistParams& dist);
/// KL(p || q).
double kl_divergence(const DistParams& p, const DistParams& q);

Action sample(const DistParams& dist, std::mt19937_64& rng);
/// Most likely action: argmax for categorical, mean for Gaussian.
Action mode(const DistParams& dist);

// Batched forms. `actions` has one action per row.
Eigen::VectorXd log_prob(const DistBatch& dist, const Eigen::Ref<const Eigen::MatrixXd>& actions);
Eigen::VectorXd entropy(const DistBatch& dist);
Eigen::VectorXd kl_divergence(const DistBatch& p, const DistBatch& q);

/// Per-row partial derivatives of a per-row scalar with respect to the head
/// outputs and (Gaussian) the log-std.
struct DistGrad {
  Eigen::MatrixXd params;
  Eigen::MatrixXd log_std;  // rows x dim; empty for categorical
};

DistGrad log_prob_grad(const DistBatch& dist, const Eigen::Ref<const Eigen::MatrixXd>& actions);
DistGrad entropy_grad(const DistBatch& dist);

enum class KlArgument { first, second };
/// Gradient of KL(p || q) with respect to p or q.
DistGrad kl_grad(const DistBatch& p, const DistBatch& q, KlArgument wrt);

}  // namespace impact
