#include "impact/runtime.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "impact/errors.hpp"

namespace impact {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

Eigen::Index BatchCollector::pending_rows() const {
  Eigen::Index n = 0;
  for (const auto& b : pending_) n += b.rows();
  return n;
}

std::optional<TrainBatch> BatchCollector::add(SampleBatch batch) {
  if (batch.rows() == 0) return std::nullopt;
  pending_.push_back(std::move(batch));
  const Eigen::Index total = pending_rows();
  if (total < rows_) return std::nullopt;
  if (total != rows_) throw ShapeError("sample batches do not tile the train batch size");

  const auto& first = pending_.front();
  TrainBatch out;
  out.obs.resize(total, first.obs.cols());
  out.actions.resize(total, first.actions.cols());
  out.rewards.resize(total);
  out.worker_logp.resize(total);
  out.worker_values.resize(total);
  out.dones.reserve(total);
  out.worker_ids.reserve(total);
  out.oldest_version = first.policy_version;

  std::vector<Eigen::VectorXd> bootstrap;
  Eigen::Index pos = 0;
  const SampleBatch* previous = nullptr;
  for (const auto& b : pending_) {
    const Eigen::Index n = b.rows();
    out.obs.middleRows(pos, n) = b.obs;
    out.actions.middleRows(pos, n) = b.actions;
    out.rewards.segment(pos, n) = b.rewards;
    out.worker_logp.segment(pos, n) = b.logp;
    out.worker_values.segment(pos, n) = b.values;
    out.dones.insert(out.dones.end(), b.dones.begin(), b.dones.end());
    out.worker_ids.insert(out.worker_ids.end(), static_cast<std::size_t>(n), b.worker_id);
    out.episode_returns.insert(out.episode_returns.end(), b.episode_returns.begin(), b.episode_returns.end());
    out.oldest_version = std::min(out.oldest_version, b.policy_version);

    const bool continues = previous != nullptr && previous->worker_id == b.worker_id && previous->fragment + 1 == b.fragment;
    if (continues) {
      out.segments.back().length += n;
      bootstrap.back() = b.bootstrap_obs;
    } else {
      out.segments.push_back(Segment{pos, n, b.worker_id});
      bootstrap.push_back(b.bootstrap_obs);
    }
    previous = &b;
    pos += n;
  }
  out.bootstrap_obs.resize(static_cast<Eigen::Index>(bootstrap.size()), first.obs.cols());
  for (std::size_t i = 0; i < bootstrap.size(); ++i) out.bootstrap_obs.row(static_cast<Eigen::Index>(i)) = bootstrap[i].transpose();
  pending_.clear();
  return out;
}

void WeightPublisher::publish(std::shared_ptr<const ParamSet> params) {
  std::lock_guard lock(mutex_);
  latest_ = std::move(params);
  ++publications_;
}

std::shared_ptr<const ParamSet> WeightPublisher::latest() const {
  std::lock_guard lock(mutex_);
  return latest_;
}

std::uint64_t WeightPublisher::publications() const {
  std::lock_guard lock(mutex_);
  return publications_;
}

void RunningMeanStd::update(const Eigen::VectorXd& x) {
  ++count_;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta.cwiseProduct(x - mean_);
}

Eigen::VectorXd RunningMeanStd::stddev() const {
  if (count_ < 2) return Eigen::VectorXd::Ones(mean_.size());
  return (m2_ / static_cast<double>(count_ - 1)).cwiseSqrt();
}

Eigen::VectorXd RunningMeanStd::normalize(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd clipped = ((x - mean_).array() / (stddev().array() + 1e-8)).max(-10.0).min(10.0);
  return clipped;
}

void RunningMeanStd::save(const std::filesystem::path& path) const {
  nlohmann::json j{{"count", count_},
                   {"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
                   {"m2", std::vector<double>(m2_.data(), m2_.data() + m2_.size())}};
  std::ofstream(path) << j.dump();
}

RunningMeanStd RunningMeanStd::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read observation filter: " + path.string());
  const auto j = nlohmann::json::parse(in);
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto m2 = j.at("m2").get<std::vector<double>>();
  RunningMeanStd f(static_cast<int>(mean.size()));
  f.count_ = j.at("count").get<std::uint64_t>();
  f.mean_ = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  f.m2_ = Eigen::Map<const Eigen::VectorXd>(m2.data(), static_cast<Eigen::Index>(m2.size()));
  return f;
}

}  // namespace impact
