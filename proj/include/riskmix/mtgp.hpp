#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

namespace riskmix {

// Multi-task GP over (stream, time) pairs with a separable covariance:
//   cov(X_d(t), X_d'(t')) = Sigma(d,d') * k(t,t') + noise_var * [same point],
// where Sigma = L L^T (free-form, L lower triangular with positive diagonal)
// and k is the unit-amplitude squared-exponential kernel. The mean function
// is a constant vector per stream.
struct StationaryGPParams {
  Eigen::VectorXd mean;          // length D, one constant mean per stream
  Eigen::MatrixXd chol_factor;   // D x D lower triangular, positive diagonal
  double lengthscale = 1.0;      // hours
  double noise_var = 0.1;

  int stream_count() const { return static_cast<int>(mean.size()); }
  Eigen::MatrixXd cross_stream_cov() const { return chol_factor * chol_factor.transpose(); }
  // D(D+1)/2 + D + 2 free parameters.
  int free_parameter_count() const;
  void validate() const;
};

// Non-stationary variant: W stationary parameter sets tiling backward from an
// anchor time. Window w covers anchor-(W-w)*width < t <= anchor-(W-w-1)*width;
// times at or before the earliest boundary fall in window 0. The last window
// ends at the anchor itself.
struct WindowedGPParams {
  std::vector<StationaryGPParams> windows;
  double window_width_hours = 12.0;

  int window_count() const { return static_cast<int>(windows.size()); }
  int stream_count() const { return windows.empty() ? 0 : windows.front().stream_count(); }
  void validate() const;
};

// One patient's observations vectorized as parallel arrays; entry a is
// stream streams[a] observed at times[a] with value values[a].
struct ObservationBlock {
  std::vector<int> streams;
  std::vector<double> times;
  Eigen::VectorXd values;

  int size() const { return static_cast<int>(streams.size()); }
  void validate(int stream_count) const;
};

// Window index for an observation at `time` under the anchor convention.
int window_of(double time, double anchor, int window_count, double width);

double se_kernel(double t, double t_prime, double lengthscale);

// Dense covariance of the given index set. If the plain matrix is not
// Cholesky-factorizable, jitter is added to the diagonal starting at
// 1e-10*mean(diag) and escalating tenfold up to 1e-4*mean(diag); failure past
// that throws.
Eigen::MatrixXd assemble_covariance(std::span<const int> streams,
                                    std::span<const double> times,
                                    const StationaryGPParams& params);
Eigen::MatrixXd assemble_covariance(const ObservationBlock& block,
                                    const StationaryGPParams& params);

// Unconstrained parameter vector, in order:
//   [log lengthscale, log noise_std, log diag(L) (D), strict lower triangle
//    of L row-major (D(D-1)/2), mean (D)].
Eigen::VectorXd pack_unconstrained(const StationaryGPParams& params);
StationaryGPParams unpack_unconstrained(const Eigen::VectorXd& theta, int stream_count);

double log_marginal_likelihood(const ObservationBlock& block,
                               const StationaryGPParams& params);

struct LmlWithGrad {
  double value = 0.0;
  Eigen::VectorXd grad;  // w.r.t. the unconstrained parameterization
};
LmlWithGrad log_marginal_likelihood_grad(const ObservationBlock& block,
                                         const StationaryGPParams& params);

struct OptConfig {
  int max_iter = 200;
  double grad_tol = 1e-5;       // infinity norm of the per-unit-weight gradient
  int max_backtracks = 40;
  double initial_step = 0.1;
  double max_coord_step = 1.0;  // cap on any single unconstrained coordinate move
};

struct FitResult {
  StationaryGPParams params;
  double objective = 0.0;  // weighted log likelihood sum at the fitted params
  int iterations = 0;
  bool converged = false;
};

// Data-driven starting point: weighted per-stream empirical mean, L from the
// weighted covariance of per-block stream means plus 0.1*I, lengthscale =
// median pairwise time gap, noise_var = 0.1.
StationaryGPParams default_fit_init(std::span<const ObservationBlock> blocks,
                                    std::span<const double> weights,
                                    int stream_count);

// Maximizes sum_i w_i * lml(block_i, params) by alternating a closed-form
// update of the mean with monotone backtracking gradient ascent on the kernel
// parameters. The weighted objective never decreases between accepted
// iterates. Internally the objective is normalized by the total weight, so
// rescaling all weights by a common factor leaves the trajectory unchanged.
FitResult fit_weighted_mle(std::span<const ObservationBlock> blocks,
                           std::span<const double> weights,
                           const StationaryGPParams& init,
                           const OptConfig& opt = {});

// Joint log density under the windowed model: observations are re-indexed by
// tau = t - anchor and assigned to windows; points in different windows are
// independent (block-diagonal joint), points in the same window follow that
// window's stationary model.
double windowed_log_likelihood(const ObservationBlock& block,
                               const WindowedGPParams& params,
                               double anchor);

struct WindowedFitResult {
  WindowedGPParams params;
  std::vector<bool> window_trained;  // false where the fallback was used
};

// Per-window weighted MLE; block i is anchored at anchors[i]. Windows that
// receive no data (or only zero-weight data) take `fallback` and are flagged;
// if every window is empty, or an empty window has no fallback, throws.
WindowedFitResult fit_windowed_mle(std::span<const ObservationBlock> blocks,
                                   std::span<const double> anchors,
                                   std::span<const double> weights,
                                   int window_count,
                                   double width_hours,
                                   const std::optional<StationaryGPParams>& fallback,
                                   const OptConfig& opt = {});

}  // namespace riskmix
