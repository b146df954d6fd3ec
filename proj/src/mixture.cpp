#include "riskmix/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "riskmix/common.hpp"

namespace riskmix {

namespace {

constexpr double kStarvedFraction = 1e-8;

struct EStepDetail {
  ResponsibilityMatrix responsibilities;
  double observed_loglik = 0.0;
  double ecdll = 0.0;  // expected complete-data log likelihood
};

EStepDetail e_step_detail(std::span<const ObservationBlock> blocks,
                          const StableMixture& mixture) {
  const int n = static_cast<int>(blocks.size());
  const int m_count = mixture.expert_count();
  Eigen::MatrixXd lml(n, m_count);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    for (int m = 0; m < m_count; ++m)
      lml(i, m) = log_marginal_likelihood(blocks[i], mixture.experts[m]);
  });

  Eigen::VectorXd log_pi(m_count);
  for (int m = 0; m < m_count; ++m)
    log_pi(m) = mixture.weights(m) > 0.0 ? std::log(mixture.weights(m))
                                         : -std::numeric_limits<double>::infinity();

  EStepDetail out;
  out.responsibilities.beta.resize(n, m_count);
  std::vector<double> scores(m_count);
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < m_count; ++m) scores[m] = log_pi(m) + lml(i, m);
    const double lse = log_sum_exp(scores);
    if (!std::isfinite(lse))
      throw std::runtime_error("e_step: all mixture components vanished for a patient");
    double row_sum = 0.0;
    for (int m = 0; m < m_count; ++m) {
      const double b = std::exp(scores[m] - lse);
      out.responsibilities.beta(i, m) = b;
      row_sum += b;
    }
    out.responsibilities.beta.row(i) /= row_sum;
    out.observed_loglik += lse;
    for (int m = 0; m < m_count; ++m) {
      const double b = out.responsibilities.beta(i, m);
      if (b > 0.0) out.ecdll += b * scores[m];
    }
  }
  return out;
}

// Seeded k-means++ / Lloyd on standardized per-patient summary vectors
// (per-stream mean and std). Ties and empty clusters resolve by lowest index.
std::vector<int> kmeans_labels(std::span<const ObservationBlock> blocks, int stream_count,
                               int k, Rng rng) {
  const int n = static_cast<int>(blocks.size());
  const int dim = 2 * stream_count;
  Eigen::MatrixXd summary = Eigen::MatrixXd::Zero(n, dim);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(stream_count);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(stream_count);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(stream_count);
    for (int a = 0; a < blocks[i].size(); ++a) {
      const int d = blocks[i].streams[a];
      sum(d) += blocks[i].values(a);
      sum_sq(d) += blocks[i].values(a) * blocks[i].values(a);
      count(d) += 1.0;
    }
    for (int d = 0; d < stream_count; ++d) {
      if (count(d) == 0.0) continue;
      const double mean = sum(d) / count(d);
      summary(i, d) = mean;
      summary(i, stream_count + d) =
          std::sqrt(std::max(0.0, sum_sq(d) / count(d) - mean * mean));
    }
  }
  for (int j = 0; j < dim; ++j) {
    const double mean = summary.col(j).mean();
    double sd = std::sqrt(std::max(0.0, summary.col(j).squaredNorm() / n - mean * mean));
    if (sd < 1e-12) sd = 1.0;
    summary.col(j) = (summary.col(j).array() - mean) / sd;
  }

  std::vector<int> center_rows;
  center_rows.push_back(static_cast<int>(rng.below(n)));
  Eigen::VectorXd dist2 = (summary.rowwise() - summary.row(center_rows[0]))
                              .rowwise().squaredNorm();
  while (static_cast<int>(center_rows.size()) < k) {
    const double total = dist2.sum();
    int pick;
    if (total <= 0.0) {
      pick = static_cast<int>(rng.below(n));
    } else {
      const double u = rng.uniform01() * total;
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += dist2(i);
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    center_rows.push_back(pick);
    const Eigen::VectorXd nd =
        (summary.rowwise() - summary.row(pick)).rowwise().squaredNorm();
    dist2 = dist2.cwiseMin(nd);
  }

  Eigen::MatrixXd centers(k, dim);
  for (int c = 0; c < k; ++c) centers.row(c) = summary.row(center_rows[c]);
  std::vector<int> labels(n, 0);
  for (int pass = 0; pass < 50; ++pass) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (summary.row(i) - centers.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (summary.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    for (int c = 0; c < k; ++c) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
      int count = 0;
      for (int i = 0; i < n; ++i) {
        if (labels[i] != c) continue;
        acc += summary.row(i).transpose();
        ++count;
      }
      if (count > 0) {
        centers.row(c) = acc.transpose() / count;
      } else {
        // Re-seed an empty cluster at the point farthest from its center.
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = (summary.row(i) - centers.row(labels[i])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers.row(c) = summary.row(far);
        labels[far] = c;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return labels;
}

}  // namespace

void StableMixture::validate() const {
  if (experts.empty()) throw std::invalid_argument("mixture needs at least one expert");
  if (weights.size() != expert_count())
    throw std::invalid_argument("mixture weights must align with experts");
  double sum = 0.0;
  for (int m = 0; m < expert_count(); ++m) {
    if (weights(m) < 0.0) throw std::invalid_argument("mixture weights must be non-negative");
    sum += weights(m);
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("mixture weights must sum to 1");
  const int D = experts.front().stream_count();
  for (const auto& e : experts) {
    e.validate();
    if (e.stream_count() != D)
      throw std::invalid_argument("all experts must share the stream count");
  }
}

void ResponsibilityMatrix::validate() const {
  for (int i = 0; i < beta.rows(); ++i) {
    double sum = 0.0;
    for (int m = 0; m < beta.cols(); ++m) {
      const double b = beta(i, m);
      if (b < 0.0 || b > 1.0)
        throw std::invalid_argument("responsibilities must lie in [0,1]");
      sum += b;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("responsibility rows must sum to 1");
  }
}

ResponsibilityMatrix e_step(std::span<const ObservationBlock> blocks,
                            const StableMixture& mixture) {
  mixture.validate();
  return e_step_detail(blocks, mixture).responsibilities;
}

StableMixture m_step(std::span<const ObservationBlock> blocks,
                     const ResponsibilityMatrix& responsibilities,
                     const StableMixture& prev,
                     const OptConfig& opt,
                     std::vector<int>* starved) {
  const int n = static_cast<int>(blocks.size());
  const int m_count = prev.expert_count();
  if (responsibilities.beta.rows() != n || responsibilities.beta.cols() != m_count)
    throw std::invalid_argument("m_step: responsibility matrix shape mismatch");

  StableMixture next = prev;
  next.weights = responsibilities.beta.colwise().mean().transpose();
  for (int m = 0; m < m_count; ++m) {
    const Eigen::VectorXd col = responsibilities.beta.col(m);
    const double total = col.sum();
    if (total < m_count * kStarvedFraction) {
      if (starved) starved->push_back(m);
      continue;  // keep the previous parameters for a starved expert
    }
    std::vector<double> w(col.data(), col.data() + n);
    next.experts[m] = fit_weighted_mle(blocks, w, prev.experts[m], opt).params;
  }
  return next;
}

EMResult run_em(std::span<const ObservationBlock> blocks, int expert_count,
                const EMConfig& cfg) {
  if (expert_count < 1) throw std::invalid_argument("run_em: expert count must be >= 1");
  if (!(cfg.eps > 0.0)) throw std::invalid_argument("run_em: eps must be positive");
  const int n = static_cast<int>(blocks.size());
  if (n == 0) throw std::invalid_argument("run_em: no patients");
  int stream_count = 0;
  for (const auto& b : blocks)
    for (int s : b.streams) stream_count = std::max(stream_count, s + 1);

  // Hard k-means assignment seeds the mixture; one M-step from the hard
  // responsibilities produces the first parameter estimates.
  std::vector<int> labels(n, 0);
  if (expert_count > 1)
    labels = kmeans_labels(blocks, stream_count, expert_count,
                           Rng(mix_seed(cfg.seed, 0x6b6d65616e73ULL)));
  ResponsibilityMatrix hard;
  hard.beta = Eigen::MatrixXd::Zero(n, expert_count);
  for (int i = 0; i < n; ++i) hard.beta(i, labels[i]) = 1.0;

  StableMixture mixture;
  mixture.experts.reserve(expert_count);
  for (int m = 0; m < expert_count; ++m) {
    const Eigen::VectorXd col = hard.beta.col(m);
    std::vector<double> w(col.data(), col.data() + n);
    if (col.sum() == 0.0) w.assign(n, 1.0);  // empty cluster: neutral init
    mixture.experts.push_back(default_fit_init(blocks, w, stream_count));
  }
  mixture.weights = hard.beta.colwise().mean().transpose();

  EMResult result;
  result.report.starved_experts.clear();
  mixture = m_step(blocks, hard, mixture, cfg.opt, &result.report.starved_experts);

  Eigen::MatrixXd beta_prev = hard.beta;
  EStepDetail est;
  int iter = 0;
  bool converged = false;
  for (iter = 1; iter <= cfg.max_iter; ++iter) {
    est = e_step_detail(blocks, mixture);
    const double delta =
        (est.responsibilities.beta - beta_prev).cwiseAbs().sum() / (n * expert_count);
    result.report.loglik_history.push_back(est.observed_loglik);
    result.report.responsibility_delta_history.push_back(delta);
    if (cfg.trace)
      (*cfg.trace) << "em,M=" << expert_count << ",iter=" << iter
                   << ",loglik=" << est.observed_loglik << ",q=" << est.ecdll
                   << ",delta=" << delta << '\n';
    if (delta < cfg.eps) {
      converged = true;
      break;
    }
    mixture = m_step(blocks, est.responsibilities, mixture, cfg.opt,
                     &result.report.starved_experts);
    beta_prev = est.responsibilities.beta;
  }
  if (!converged) {
    // Responsibilities must match the final parameters.
    est = e_step_detail(blocks, mixture);
    result.report.loglik_history.push_back(est.observed_loglik);
  }

  std::sort(result.report.starved_experts.begin(), result.report.starved_experts.end());
  result.report.starved_experts.erase(
      std::unique(result.report.starved_experts.begin(), result.report.starved_experts.end()),
      result.report.starved_experts.end());
  result.report.q_star = est.ecdll;
  result.report.observed_loglik = est.observed_loglik;
  result.report.iterations = std::min(iter, cfg.max_iter);
  result.report.converged = converged;
  result.mixture = std::move(mixture);
  result.responsibilities = std::move(est.responsibilities);
  return result;
}

long model_complexity(int expert_count, int stream_count) {
  if (expert_count < 1 || stream_count < 1)
    throw std::invalid_argument("model_complexity: arguments must be >= 1");
  const long d = stream_count;
  return static_cast<long>(expert_count) * (d * (d + 1) / 2 + d + 2);
}

BayesFactor bayes_factor(double q_m, double q_prev, long psi_m, long psi_prev, int n_o) {
  if (n_o < 1) throw std::invalid_argument("bayes_factor: n_o must be >= 1");
  const double log_n = std::log(static_cast<double>(n_o));
  BayesFactor bf;
  bf.log_value = (q_m - 0.5 * psi_m * log_n) - (q_prev - 0.5 * psi_prev * log_n);
  bf.value = std::exp(bf.log_value);
  return bf;
}

EMResult run_em_with_retry(std::span<const ObservationBlock> blocks, int expert_count,
                           const EMConfig& cfg) {
  EMResult result = run_em(blocks, expert_count, cfg);
  if (!result.report.starved_experts.empty()) {
    EMConfig retry = cfg;
    retry.seed = mix_seed(cfg.seed, 0x7265747279ULL + expert_count);
    result = run_em(blocks, expert_count, retry);
  }
  return result;
}

DiscoveryResult discover_experts(std::span<const ObservationBlock> blocks,
                                 const DiscoveryConfig& cfg) {
  if (cfg.m_max < 1) throw std::invalid_argument("discover_experts: m_max must be >= 1");
  if (!(cfg.b_bar > 0.0)) throw std::invalid_argument("discover_experts: b_bar must be positive");
  const int n = static_cast<int>(blocks.size());
  int stream_count = 0;
  for (const auto& b : blocks)
    for (int s : b.streams) stream_count = std::max(stream_count, s + 1);

  const auto run_m = [&](int m) {
    EMConfig em;
    em.eps = cfg.eps;
    em.max_iter = cfg.max_iter;
    em.opt = cfg.opt;
    em.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(m));
    em.trace = cfg.trace;
    return run_em_with_retry(blocks, m, em);
  };

  DiscoveryResult out;
  EMResult current = run_m(1);
  out.reports.push_back(current.report);
  out.selected = current;
  out.selected_m = 1;
  const double log_b_bar = std::log(cfg.b_bar);
  for (int m = 2; m <= cfg.m_max; ++m) {
    EMResult candidate = run_m(m);
    out.reports.push_back(candidate.report);
    const BayesFactor bf =
        bayes_factor(candidate.report.q_star, out.selected.report.q_star,
                     model_complexity(m, stream_count),
                     model_complexity(m - 1, stream_count), n);
    out.log_bayes_factors.push_back(bf.log_value);
    if (cfg.trace)
      (*cfg.trace) << "bayes,M=" << m << ",log_bf=" << bf.log_value << '\n';
    if (bf.log_value < log_b_bar) break;
    out.selected = std::move(candidate);
    out.selected_m = m;
  }
  return out;
}

}  // namespace riskmix
