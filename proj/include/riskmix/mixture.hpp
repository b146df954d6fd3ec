#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "riskmix/mtgp.hpp"

namespace riskmix {

// Mixture of stationary GP experts over the stable domain.
struct StableMixture {
  std::vector<StationaryGPParams> experts;
  Eigen::VectorXd weights;  // simplex

  int expert_count() const { return static_cast<int>(experts.size()); }
  int stream_count() const { return experts.empty() ? 0 : experts.front().stream_count(); }
  void validate() const;
};

// Row i holds patient i's posterior class memberships; every row is on the
// simplex.
struct ResponsibilityMatrix {
  Eigen::MatrixXd beta;

  int patient_count() const { return static_cast<int>(beta.rows()); }
  int expert_count() const { return static_cast<int>(beta.cols()); }
  void validate() const;
};

struct EMReport {
  double q_star = 0.0;           // expected complete-data log likelihood at convergence
  double observed_loglik = 0.0;  // observed-data log likelihood at convergence
  int iterations = 0;
  bool converged = false;
  // Observed-data log likelihood at each outer iteration; non-decreasing
  // under the monotone M-step.
  std::vector<double> loglik_history;
  std::vector<double> responsibility_delta_history;
  std::vector<int> starved_experts;
};

struct EMConfig {
  double eps = 1e-3;    // mean absolute responsibility change
  int max_iter = 50;    // outer EM iterations
  OptConfig opt;        // M-step optimizer settings
  std::uint64_t seed = 0;
  std::ostream* trace = nullptr;  // per-iteration delimited log when set
};

ResponsibilityMatrix e_step(std::span<const ObservationBlock> blocks,
                            const StableMixture& mixture);

// pi from responsibility column means; expert m refit by weighted MLE from
// column m, warm-started at prev. Experts whose total responsibility falls
// below M*1e-8 are left at prev and flagged in `starved`.
StableMixture m_step(std::span<const ObservationBlock> blocks,
                     const ResponsibilityMatrix& responsibilities,
                     const StableMixture& prev,
                     const OptConfig& opt,
                     std::vector<int>* starved = nullptr);

struct EMResult {
  StableMixture mixture;
  ResponsibilityMatrix responsibilities;
  EMReport report;
};

// Seeded k-means (on per-patient per-stream mean/std summaries) provides the
// initial hard assignment; one M-step from those assignments starts the
// alternation. Stops when the mean absolute responsibility change drops
// below eps.
EMResult run_em(std::span<const ObservationBlock> blocks, int expert_count,
                const EMConfig& cfg);

// Total hyper-parameter count of an M-expert model: M*(D(D+1)/2 + D + 2).
long model_complexity(int expert_count, int stream_count);

struct BayesFactor {
  double log_value = 0.0;
  double value = 1.0;
};

// BIC-approximate Bayes factor between the M- and (M-1)-expert models.
BayesFactor bayes_factor(double q_m, double q_prev, long psi_m, long psi_prev, int n_o);

struct DiscoveryConfig {
  double eps = 1e-3;
  double b_bar = 3.0;  // stop when the Bayes factor drops below this
  int m_max = 10;
  int max_iter = 50;
  OptConfig opt;
  std::uint64_t seed = 0;
  std::ostream* trace = nullptr;
};

struct DiscoveryResult {
  EMResult selected;
  int selected_m = 1;
  std::vector<EMReport> reports;          // index m-1 holds the M=m run
  std::vector<double> log_bayes_factors;  // entry m-2 compares M=m vs M=m-1
};

// Grows M from 1, comparing consecutive models with the Bayes factor, and
// returns the last M whose factor met b_bar. A run that starves an expert is
// retried once with a fresh seed and then accepted as-is.
DiscoveryResult discover_experts(std::span<const ObservationBlock> blocks,
                                 const DiscoveryConfig& cfg);

// Same starved-expert retry policy as discover_experts, for a caller-chosen M.
EMResult run_em_with_retry(std::span<const ObservationBlock> blocks, int expert_count,
                           const EMConfig& cfg);

}  // namespace riskmix
