#include "impact/distributions.hpp"

#include <cmath>
#include <numbers>

#include "impact/errors.hpp"

namespace impact {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;  // ln(2*pi)

Eigen::VectorXd log_softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return logits.array() - lse;
}

// Row-wise log-softmax of a logits matrix.
Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits) {
  const Eigen::VectorXd top = logits.rowwise().maxCoeff();
  Eigen::MatrixXd shifted = logits.colwise() - top;
  const Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
  shifted.colwise() -= lse;
  return shifted;
}

Eigen::Index category(const Action& action, Eigen::Index n) {
  if (action.size() != 1) throw ShapeError("categorical action must be a single index");
  const double raw = action(0);
  if (!(raw >= 0.0) || raw >= static_cast<double>(n) || std::floor(raw) != raw) {
    throw ShapeError("categorical action index out of range");
  }
  return static_cast<Eigen::Index>(raw);
}

void check_same_kind(const DistBatch& p, const DistBatch& q) {
  if (p.kind != q.kind || p.params.rows() != q.params.rows() || p.params.cols() != q.params.cols()) {
    throw ShapeError("distribution batches differ in kind or shape");
  }
}

}  // namespace

DistParams DistParams::categorical(Eigen::VectorXd logits) {
  return DistParams{HeadKind::categorical, std::move(logits), {}};
}

DistParams DistParams::gaussian(Eigen::VectorXd mean, Eigen::VectorXd log_std) {
  if (mean.size() != log_std.size()) throw ShapeError("gaussian mean and log-std lengths differ");
  return DistParams{HeadKind::gaussian, std::move(mean), std::move(log_std)};
}

DistParams row(const DistBatch& batch, Eigen::Index i) {
  return DistParams{batch.kind, batch.params.row(i).transpose(), batch.log_std};
}

Eigen::VectorXd categorical_probs(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  return log_softmax(logits).array().exp();
}

double log_prob(const DistParams& dist, const Action& action) {
  if (dist.kind == HeadKind::categorical) {
    return log_softmax(dist.params)(category(action, dist.params.size()));
  }
  if (action.size() != dist.params.size()) throw ShapeError("gaussian action has the wrong dimension");
  const Eigen::ArrayXd z = (action - dist.params).array() * (-dist.log_std.array()).exp();
  return (-0.5 * z.square() - dist.log_std.array() - 0.5 * kLogTwoPi).sum();
}

double entropy(const DistParams& dist) {
  if (dist.kind == HeadKind::categorical) {
    const Eigen::ArrayXd logp = log_softmax(dist.params).array();
    return -(logp.exp() * logp).sum();
  }
  return (dist.log_std.array() + 0.5 * (kLogTwoPi + 1.0)).sum();
}

double kl_divergence(const DistParams& p, const DistParams& q) {
  if (p.kind != q.kind || p.params.size() != q.params.size()) {
    throw ShapeError("distributions differ in kind or shape");
  }
  if (p.kind == HeadKind::categorical) {
    const Eigen::ArrayXd lp = log_softmax(p.params).array();
    const Eigen::ArrayXd lq = log_softmax(q.params).array();
    return std::max(0.0, (lp.exp() * (lp - lq)).sum());
  }
  const Eigen::ArrayXd var_p = (2.0 * p.log_std.array()).exp();
  const Eigen::ArrayXd var_q = (2.0 * q.log_std.array()).exp();
  const Eigen::ArrayXd diff = (p.params - q.params).array();
  return std::max(0.0, (q.log_std.array() - p.log_std.array() + (var_p + diff.square()) / (2.0 * var_q) - 0.5).sum());
}

Action sample(const DistParams& dist, std::mt19937_64& rng) {
  if (dist.kind == HeadKind::categorical) {
    const Eigen::VectorXd probs = categorical_probs(dist.params);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    double cumulative = 0.0;
    Eigen::Index choice = probs.size() - 1;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      cumulative += probs(i);
      if (u < cumulative) {
        choice = i;
        break;
      }
    }
    return Action::Constant(1, static_cast<double>(choice));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Action action(dist.params.size());
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    action(i) = dist.params(i) + std::exp(dist.log_std(i)) * normal(rng);
  }
  return action;
}

Action mode(const DistParams& dist) {
  if (dist.kind == HeadKind::categorical) {
    Eigen::Index best = 0;
    dist.params.maxCoeff(&best);
    return Action::Constant(1, static_cast<double>(best));
  }
  return dist.params;
}

Eigen::VectorXd log_prob(const DistBatch& dist, const Eigen::Ref<const Eigen::MatrixXd>& actions) {
  const Eigen::Index n = dist.rows();
  if (actions.rows() != n) throw ShapeError("action batch and distribution batch differ in rows");
  Eigen::VectorXd out(n);
  if (dist.kind == HeadKind::categorical) {
    const Eigen::MatrixXd logp = log_softmax_rows(dist.params);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = logp(i, category(actions.row(i).transpose(), logp.cols()));
    return out;
  }
  if (actions.cols() != dist.params.cols()) throw ShapeError("gaussian action batch has the wrong width");
  const Eigen::ArrayXXd z = ((actions - dist.params).array().rowwise() * (-dist.log_std.array()).exp().transpose());
  const double norm = dist.log_std.sum() + 0.5 * kLogTwoPi * static_cast<double>(dist.log_std.size());
  out = (-0.5 * z.square().rowwise().sum()).matrix();
  out.array() -= norm;
  return out;
}

Eigen::VectorXd entropy(const DistBatch& dist) {
  if (dist.kind == HeadKind::categorical) {
    const Eigen::ArrayXXd logp = log_softmax_rows(dist.params).array();
    return -(logp.exp() * logp).rowwise().sum().matrix();
  }
  const double h = (dist.log_std.array() + 0.5 * (kLogTwoPi + 1.0)).sum();
  return Eigen::VectorXd::Constant(dist.rows(), h);
}

Eigen::VectorXd kl_divergence(const DistBatch& p, const DistBatch& q) {
  check_same_kind(p, q);
  if (p.kind == HeadKind::categorical) {
    const Eigen::ArrayXXd lp = log_softmax_rows(p.params).array();
    const Eigen::ArrayXXd lq = log_softmax_rows(q.params).array();
    return (lp.exp() * (lp - lq)).rowwise().sum().max(0.0).matrix();
  }
  const Eigen::ArrayXd var_p = (2.0 * p.log_std.array()).exp();
  const Eigen::ArrayXd inv_var_q = (-2.0 * q.log_std.array()).exp();
  const double constant = (q.log_std.array() - p.log_std.array() + 0.5 * var_p * inv_var_q - 0.5).sum();
  const Eigen::ArrayXXd diff = (p.params - q.params).array();
  const Eigen::ArrayXd quad = (diff.square().rowwise() * (0.5 * inv_var_q).transpose()).rowwise().sum();
  return (quad + constant).max(0.0).matrix();
}

DistGrad log_prob_grad(const DistBatch& dist, const Eigen::Ref<const Eigen::MatrixXd>& actions) {
  const Eigen::Index n = dist.rows();
  if (actions.rows() != n) throw ShapeError("action batch and distribution batch differ in rows");
  DistGrad g;
  if (dist.kind == HeadKind::categorical) {
    g.params = -log_softmax_rows(dist.params).array().exp().matrix();
    for (Eigen::Index i = 0; i < n; ++i) g.params(i, category(actions.row(i).transpose(), g.params.cols())) += 1.0;
    return g;
  }
  const Eigen::ArrayXd inv_std = (-dist.log_std.array()).exp();
  const Eigen::ArrayXXd z = (actions - dist.params).array().rowwise() * inv_std.transpose();
  g.params = (z.rowwise() * inv_std.transpose()).matrix();
  g.log_std = (z.square() - 1.0).matrix();
  return g;
}

DistGrad entropy_grad(const DistBatch& dist) {
  DistGrad g;
  if (dist.kind == HeadKind::categorical) {
    const Eigen::ArrayXXd logp = log_softmax_rows(dist.params).array();
    const Eigen::ArrayXXd p = logp.exp();
    const Eigen::ArrayXd h = -(p * logp).rowwise().sum();
    // dH/dz_k = -p_k (log p_k + H)
    g.params = (-(p * (logp.colwise() + h))).matrix();
    return g;
  }
  g.params = Eigen::MatrixXd::Zero(dist.rows(), dist.params.cols());
  g.log_std = Eigen::MatrixXd::Ones(dist.rows(), dist.params.cols());
  return g;
}

DistGrad kl_grad(const DistBatch& p, const DistBatch& q, KlArgument wrt) {
  check_same_kind(p, q);
  DistGrad g;
  if (p.kind == HeadKind::categorical) {
    const Eigen::ArrayXXd lp = log_softmax_rows(p.params).array();
    const Eigen::ArrayXXd lq = log_softmax_rows(q.params).array();
    if (wrt == KlArgument::second) {
      g.params = (lq.exp() - lp.exp()).matrix();
    } else {
      const Eigen::ArrayXXd pp = lp.exp();
      const Eigen::ArrayXXd log_ratio = lp - lq;
      const Eigen::ArrayXd kl = (pp * log_ratio).rowwise().sum();
      g.params = (pp * (log_ratio.colwise() - kl)).matrix();
    }
    return g;
  }
  const Eigen::ArrayXd var_p = (2.0 * p.log_std.array()).exp();
  const Eigen::ArrayXd inv_var_q = (-2.0 * q.log_std.array()).exp();
  const Eigen::ArrayXXd diff = (p.params - q.params).array();  // m_p - m_q
  if (wrt == KlArgument::second) {
    g.params = (-(diff.rowwise() * inv_var_q.transpose())).matrix();
    g.log_std = (1.0 - ((diff.square().rowwise() + var_p.transpose()).rowwise() * inv_var_q.transpose())).matrix();
  } else {
    g.params = (diff.rowwise() * inv_var_q.transpose()).matrix();
    const Eigen::ArrayXd row = var_p * inv_var_q - 1.0;
    g.log_std = row.transpose().replicate(p.rows(), 1).matrix();
  }
  return g;
}

}  // namespace impact
