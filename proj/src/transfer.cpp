#include "riskmix/transfer.hpp"

#include <cmath>
#include <stdexcept>

#include "riskmix/common.hpp"

namespace riskmix {

ResponsibilityRegressor fit_responsibility_regression(
    const Eigen::MatrixXd& admissions, const Eigen::MatrixXd& responsibilities,
    std::vector<std::string> feature_names) {
  const long n = admissions.rows();
  const long s = admissions.cols();
  if (responsibilities.rows() != n)
    throw std::invalid_argument("regression: rows of admissions and responsibilities must align");
  if (n <= s)
    throw std::invalid_argument("regression: need more patients than encoded features");
  if (static_cast<long>(feature_names.size()) != s)
    throw std::invalid_argument("regression: feature names must match admission dimension");

  ResponsibilityRegressor reg;
  reg.feature_names = std::move(feature_names);
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(admissions);
  if (qr.rank() == s) {
    reg.weights = qr.solve(responsibilities);
  } else {
    const Eigen::MatrixXd gram = admissions.transpose() * admissions;
    const double lambda = 1e-6 * gram.trace() / static_cast<double>(s);
    const Eigen::MatrixXd ridged =
        gram + lambda * Eigen::MatrixXd::Identity(s, s);
    reg.weights = ridged.ldlt().solve(admissions.transpose() * responsibilities);
    reg.ridge_used = true;
  }
  reg.residual_sum_squares =
      (admissions * reg.weights - responsibilities).colwise().squaredNorm();
  return reg;
}

Eigen::VectorXd predict_responsibilities(const ResponsibilityRegressor& reg,
                                         const Eigen::VectorXd& admission) {
  if (admission.size() != reg.feature_dim())
    throw std::invalid_argument("predict_responsibilities: admission dimension mismatch");
  Eigen::VectorXd raw = reg.weights.transpose() * admission;
  raw = raw.cwiseMax(0.0);
  const double total = raw.sum();
  if (total <= 0.0)
    return Eigen::VectorXd::Constant(reg.expert_count(), 1.0 / reg.expert_count());
  return raw / total;
}

std::vector<std::vector<int>> self_taught_partition(const Eigen::MatrixXd& beta_hat,
                                                    std::uint64_t seed) {
  const int n = static_cast<int>(beta_hat.rows());
  const int m_count = static_cast<int>(beta_hat.cols());
  std::vector<std::vector<int>> sets(m_count);
  Rng rng(seed);
  for (int i = 0; i < n; ++i)
    for (int m = 0; m < m_count; ++m)
      if (rng.bernoulli(beta_hat(i, m))) sets[m].push_back(i);
  return sets;
}

void DeterioratingExpertSet::validate() const {
  if (experts.empty()) throw std::invalid_argument("deteriorating expert set is empty");
  if (expert_trained.size() != experts.size() || window_trained.size() != experts.size() ||
      sample_counts.size() != experts.size())
    throw std::invalid_argument("deteriorating expert set flags must align with experts");
  for (const auto& e : experts) e.validate();
}

DeterioratingExpertSet train_deteriorating_experts(
    std::span<const ObservationBlock> det_blocks, std::span<const double> anchors,
    const std::vector<std::vector<int>>& partition, const StableMixture& stable,
    const WindowConfig& window_cfg, const OptConfig& opt) {
  if (det_blocks.size() != anchors.size())
    throw std::invalid_argument("train_deteriorating_experts: anchors must align with blocks");
  if (static_cast<int>(partition.size()) != stable.expert_count())
    throw std::invalid_argument("train_deteriorating_experts: partition size must equal M");
  if (window_cfg.window_count < 1 || !(window_cfg.width_hours > 0.0))
    throw std::invalid_argument("train_deteriorating_experts: invalid window config");

  DeterioratingExpertSet out;
  const int m_count = stable.expert_count();
  out.experts.resize(m_count);
  out.expert_trained.assign(m_count, false);
  out.window_trained.resize(m_count);
  out.sample_counts.resize(m_count);
  for (int m = 0; m < m_count; ++m) {
    const auto& ids = partition[m];
    out.sample_counts[m] = static_cast<int>(ids.size());
    if (ids.empty()) {
      WindowedGPParams copy;
      copy.window_width_hours = window_cfg.width_hours;
      copy.windows.assign(window_cfg.window_count, stable.experts[m]);
      out.experts[m] = std::move(copy);
      out.window_trained[m].assign(window_cfg.window_count, false);
      continue;
    }
    std::vector<ObservationBlock> blocks;
    std::vector<double> block_anchors, weights;
    for (int id : ids) {
      if (id < 0 || id >= static_cast<int>(det_blocks.size()))
        throw std::invalid_argument("train_deteriorating_experts: partition index out of range");
      blocks.push_back(det_blocks[id]);
      block_anchors.push_back(anchors[id]);
      weights.push_back(1.0);
    }
    auto fit = fit_windowed_mle(blocks, block_anchors, weights, window_cfg.window_count,
                                window_cfg.width_hours, stable.experts[m], opt);
    out.experts[m] = std::move(fit.params);
    out.window_trained[m] = std::move(fit.window_trained);
    out.expert_trained[m] = true;
  }
  return out;
}

}  // namespace riskmix
