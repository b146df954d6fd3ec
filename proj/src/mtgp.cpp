#include "riskmix/mtgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "riskmix/common.hpp"

namespace riskmix {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::MatrixXd squared_time_dist(std::span<const double> times) {
  const int n = static_cast<int>(times.size());
  Eigen::MatrixXd sq(n, n);
  for (int a = 0; a < n; ++a) {
    sq(a, a) = 0.0;
    for (int b = 0; b < a; ++b) {
      const double d = times[a] - times[b];
      sq(a, b) = d * d;
      sq(b, a) = sq(a, b);
    }
  }
  return sq;
}

// Raw covariance (no jitter): Sigma(d_a,d_b) * k(t_a,t_b) + noise_var on the
// diagonal.
Eigen::MatrixXd raw_covariance(std::span<const int> streams,
                               const Eigen::MatrixXd& sqdist,
                               const StationaryGPParams& params) {
  const int n = static_cast<int>(streams.size());
  const Eigen::MatrixXd sigma = params.cross_stream_cov();
  const double inv_two_ell2 = 1.0 / (2.0 * params.lengthscale * params.lengthscale);
  Eigen::MatrixXd kernel = (-sqdist * inv_two_ell2).array().exp().matrix();
  Eigen::MatrixXd cov(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) cov(a, b) = sigma(streams[a], streams[b]) * kernel(a, b);
  cov.diagonal().array() += params.noise_var;
  return cov;
}

struct FactorizedCov {
  Eigen::MatrixXd cov;  // after any jitter
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

FactorizedCov factorize_covariance(std::span<const int> streams,
                                   const Eigen::MatrixXd& sqdist,
                                   const StationaryGPParams& params) {
  FactorizedCov out;
  out.cov = raw_covariance(streams, sqdist, params);
  const double mean_diag = out.cov.diagonal().mean();
  double jitter = 0.0;
  const double max_jitter = 1e-4 * mean_diag;
  for (;;) {
    Eigen::MatrixXd attempt = out.cov;
    attempt.diagonal().array() += jitter;
    out.llt.compute(attempt);
    if (out.llt.info() == Eigen::Success) {
      out.cov = std::move(attempt);
      out.jitter = jitter;
      return out;
    }
    if (jitter == 0.0) {
      jitter = 1e-10 * mean_diag;
    } else {
      jitter *= 10.0;
    }
    if (jitter > max_jitter)
      throw std::runtime_error("covariance factorization failed after maximum jitter escalation");
  }
}

Eigen::VectorXd lift_mean(std::span<const int> streams, const Eigen::VectorXd& mean) {
  Eigen::VectorXd lifted(static_cast<int>(streams.size()));
  for (int a = 0; a < lifted.size(); ++a) lifted(a) = mean(streams[a]);
  return lifted;
}

double lml_value(const ObservationBlock& block, const StationaryGPParams& params,
                 const Eigen::MatrixXd& sqdist) {
  const auto fc = factorize_covariance(block.streams, sqdist, params);
  const Eigen::VectorXd resid = block.values - lift_mean(block.streams, params.mean);
  const Eigen::VectorXd alpha = fc.llt.solve(resid);
  const double log_det = 2.0 * fc.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * resid.dot(alpha) - 0.5 * log_det - 0.5 * block.size() * kLog2Pi;
}

LmlWithGrad lml_grad(const ObservationBlock& block, const StationaryGPParams& params,
                     const Eigen::MatrixXd& sqdist) {
  const int n = block.size();
  const int D = params.stream_count();
  const auto fc = factorize_covariance(block.streams, sqdist, params);
  const Eigen::VectorXd resid = block.values - lift_mean(block.streams, params.mean);
  const Eigen::VectorXd alpha = fc.llt.solve(resid);
  const double log_det = 2.0 * fc.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();

  LmlWithGrad out;
  out.value = -0.5 * resid.dot(alpha) - 0.5 * log_det - 0.5 * n * kLog2Pi;

  const Eigen::MatrixXd kinv = fc.llt.solve(Eigen::MatrixXd::Identity(n, n));
  // d lml / dK = G; d lml / d theta_j = sum_ab G_ab dK_ab/d theta_j.
  const Eigen::MatrixXd gmat = 0.5 * (alpha * alpha.transpose() - kinv);

  const double ell = params.lengthscale;
  const Eigen::MatrixXd kernel = (-sqdist / (2.0 * ell * ell)).array().exp().matrix();
  const Eigen::MatrixXd sigma = params.cross_stream_cov();

  // dK/d(log ell) = Sigma(d_a,d_b) * kernel_ab * sqdist_ab / ell^2
  double d_log_ell = 0.0;
  // H(d,d') accumulates G_ab * kernel_ab over pairs with streams (d,d'); the
  // chain rule through Sigma = L L^T then gives dL = (H + H^T) L.
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(D, D);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const double gk = gmat(a, b) * kernel(a, b);
      d_log_ell += gk * sigma(block.streams[a], block.streams[b]) * sqdist(a, b);
      h(block.streams[a], block.streams[b]) += gk;
    }
  }
  d_log_ell /= ell * ell;

  // noise parameterized as log sigma_n: dK/du = 2 * noise_var * I.
  const double d_log_noise = 2.0 * params.noise_var * gmat.trace();

  const Eigen::MatrixXd dl = (h + h.transpose()) * params.chol_factor;

  Eigen::VectorXd d_mean = Eigen::VectorXd::Zero(D);
  for (int a = 0; a < n; ++a) d_mean(block.streams[a]) += alpha(a);

  Eigen::VectorXd grad(2 + D + D * (D - 1) / 2 + D);
  int idx = 0;
  grad(idx++) = d_log_ell;
  grad(idx++) = d_log_noise;
  for (int d = 0; d < D; ++d) grad(idx++) = dl(d, d) * params.chol_factor(d, d);
  for (int r = 1; r < D; ++r)
    for (int c = 0; c < r; ++c) grad(idx++) = dl(r, c);
  for (int d = 0; d < D; ++d) grad(idx++) = d_mean(d);
  out.grad = std::move(grad);
  return out;
}

int kernel_param_count(int D) { return 2 + D + D * (D - 1) / 2; }

// Kernel-parameter slice of the unconstrained vector (everything except the
// mean, which the fitter updates in closed form).
Eigen::VectorXd pack_kernel(const StationaryGPParams& p) {
  const int D = p.stream_count();
  Eigen::VectorXd theta(kernel_param_count(D));
  int idx = 0;
  theta(idx++) = std::log(p.lengthscale);
  theta(idx++) = 0.5 * std::log(p.noise_var);
  for (int d = 0; d < D; ++d) theta(idx++) = std::log(p.chol_factor(d, d));
  for (int r = 1; r < D; ++r)
    for (int c = 0; c < r; ++c) theta(idx++) = p.chol_factor(r, c);
  return theta;
}

StationaryGPParams unpack_kernel(const Eigen::VectorXd& theta, const Eigen::VectorXd& mean) {
  const int D = static_cast<int>(mean.size());
  StationaryGPParams p;
  p.mean = mean;
  int idx = 0;
  p.lengthscale = std::exp(theta(idx++));
  const double log_noise_std = theta(idx++);
  p.noise_var = std::exp(2.0 * log_noise_std);
  p.chol_factor = Eigen::MatrixXd::Zero(D, D);
  for (int d = 0; d < D; ++d) p.chol_factor(d, d) = std::exp(theta(idx++));
  for (int r = 1; r < D; ++r)
    for (int c = 0; c < r; ++c) p.chol_factor(r, c) = theta(idx++);
  return p;
}

bool params_finite(const StationaryGPParams& p) {
  if (!std::isfinite(p.lengthscale) || p.lengthscale <= 0.0) return false;
  if (!std::isfinite(p.noise_var) || p.noise_var <= 0.0) return false;
  if (!p.mean.allFinite() || !p.chol_factor.allFinite()) return false;
  for (int d = 0; d < p.stream_count(); ++d)
    if (p.chol_factor(d, d) <= 0.0) return false;
  return true;
}

}  // namespace

int StationaryGPParams::free_parameter_count() const {
  const int D = stream_count();
  return D * (D + 1) / 2 + D + 2;
}

void StationaryGPParams::validate() const {
  const int D = stream_count();
  if (D < 1) throw std::invalid_argument("GP params need at least one stream");
  if (chol_factor.rows() != D || chol_factor.cols() != D)
    throw std::invalid_argument("chol_factor dimensions do not match mean");
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
    throw std::invalid_argument("lengthscale must be positive");
  if (!(noise_var > 0.0) || !std::isfinite(noise_var))
    throw std::invalid_argument("noise_var must be positive");
  for (int r = 0; r < D; ++r) {
    if (!(chol_factor(r, r) > 0.0))
      throw std::invalid_argument("chol_factor diagonal must be positive");
    for (int c = r + 1; c < D; ++c)
      if (chol_factor(r, c) != 0.0)
        throw std::invalid_argument("chol_factor must be lower triangular");
  }
  if (!mean.allFinite() || !chol_factor.allFinite())
    throw std::invalid_argument("GP params must be finite");
}

void WindowedGPParams::validate() const {
  if (windows.empty()) throw std::invalid_argument("windowed params need at least one window");
  if (!(window_width_hours > 0.0))
    throw std::invalid_argument("window width must be positive");
  const int D = windows.front().stream_count();
  for (const auto& w : windows) {
    w.validate();
    if (w.stream_count() != D)
      throw std::invalid_argument("all windows must share the stream count");
  }
}

void ObservationBlock::validate(int stream_count) const {
  if (streams.empty()) throw std::invalid_argument("observation block is empty");
  if (times.size() != streams.size() || values.size() != static_cast<long>(streams.size()))
    throw std::invalid_argument("observation block arrays must align");
  for (std::size_t a = 0; a < streams.size(); ++a) {
    if (streams[a] < 0 || streams[a] >= stream_count)
      throw std::invalid_argument("stream index out of range in observation block");
    if (!std::isfinite(times[a])) throw std::invalid_argument("non-finite time in block");
  }
  if (!values.allFinite()) throw std::invalid_argument("non-finite value in block");
}

int window_of(double time, double anchor, int window_count, double width) {
  const double back = anchor - time;
  int k = static_cast<int>(std::floor(back / width));
  if (k < 0) k = 0;  // times past the anchor stay in the last window
  if (k >= window_count) k = window_count - 1;
  return window_count - 1 - k;
}

double se_kernel(double t, double t_prime, double lengthscale) {
  if (!(lengthscale > 0.0))
    throw std::invalid_argument("se_kernel: lengthscale must be positive");
  const double d = t - t_prime;
  return std::exp(-d * d / (2.0 * lengthscale * lengthscale));
}

Eigen::MatrixXd assemble_covariance(std::span<const int> streams,
                                    std::span<const double> times,
                                    const StationaryGPParams& params) {
  if (streams.empty()) throw std::invalid_argument("assemble_covariance: empty index");
  if (streams.size() != times.size())
    throw std::invalid_argument("assemble_covariance: index arrays must align");
  params.validate();
  const Eigen::MatrixXd sqdist = squared_time_dist(times);
  return factorize_covariance(streams, sqdist, params).cov;
}

Eigen::MatrixXd assemble_covariance(const ObservationBlock& block,
                                    const StationaryGPParams& params) {
  return assemble_covariance(block.streams, block.times, params);
}

Eigen::VectorXd pack_unconstrained(const StationaryGPParams& params) {
  const int D = params.stream_count();
  Eigen::VectorXd theta(kernel_param_count(D) + D);
  theta.head(kernel_param_count(D)) = pack_kernel(params);
  theta.tail(D) = params.mean;
  return theta;
}

StationaryGPParams unpack_unconstrained(const Eigen::VectorXd& theta, int stream_count) {
  const int kdim = kernel_param_count(stream_count);
  if (theta.size() != kdim + stream_count)
    throw std::invalid_argument("unconstrained parameter vector has wrong length");
  return unpack_kernel(theta.head(kdim), theta.tail(stream_count));
}

double log_marginal_likelihood(const ObservationBlock& block,
                               const StationaryGPParams& params) {
  params.validate();
  block.validate(params.stream_count());
  return lml_value(block, params, squared_time_dist(block.times));
}

LmlWithGrad log_marginal_likelihood_grad(const ObservationBlock& block,
                                         const StationaryGPParams& params) {
  params.validate();
  block.validate(params.stream_count());
  return lml_grad(block, params, squared_time_dist(block.times));
}

StationaryGPParams default_fit_init(std::span<const ObservationBlock> blocks,
                                    std::span<const double> weights,
                                    int stream_count) {
  if (blocks.size() != weights.size())
    throw std::invalid_argument("default_fit_init: weights must align with blocks");
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (weights[i] > 0.0) active.push_back(i);
  if (active.empty()) throw std::invalid_argument("default_fit_init: need a positive weight");

  const int D = stream_count;
  Eigen::VectorXd value_sum = Eigen::VectorXd::Zero(D);
  Eigen::VectorXd count_sum = Eigen::VectorXd::Zero(D);
  for (std::size_t i : active) {
    const auto& b = blocks[i];
    for (int a = 0; a < b.size(); ++a) {
      value_sum(b.streams[a]) += weights[i] * b.values(a);
      count_sum(b.streams[a]) += weights[i];
    }
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(D);
  for (int d = 0; d < D; ++d)
    if (count_sum(d) > 0.0) mean(d) = value_sum(d) / count_sum(d);

  // Cross-stream scale from the spread of per-block stream means.
  Eigen::MatrixXd block_means(active.size(), D);
  for (std::size_t r = 0; r < active.size(); ++r) {
    const auto& b = blocks[active[r]];
    Eigen::VectorXd vs = Eigen::VectorXd::Zero(D);
    Eigen::VectorXd cs = Eigen::VectorXd::Zero(D);
    for (int a = 0; a < b.size(); ++a) {
      vs(b.streams[a]) += b.values(a);
      cs(b.streams[a]) += 1.0;
    }
    for (int d = 0; d < D; ++d)
      block_means(r, d) = cs(d) > 0.0 ? vs(d) / cs(d) : mean(d);
  }
  double wtotal = 0.0;
  for (std::size_t i : active) wtotal += weights[i];
  Eigen::VectorXd grand = Eigen::VectorXd::Zero(D);
  for (std::size_t r = 0; r < active.size(); ++r)
    grand += weights[active[r]] * block_means.row(r).transpose();
  grand /= wtotal;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(D, D);
  for (std::size_t r = 0; r < active.size(); ++r) {
    const Eigen::VectorXd c = block_means.row(r).transpose() - grand;
    cov += weights[active[r]] * (c * c.transpose());
  }
  cov /= wtotal;
  cov.diagonal().array() += 0.1;
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);

  std::vector<double> gaps;
  for (std::size_t i : active) {
    std::vector<double> ts = blocks[i].times;
    std::sort(ts.begin(), ts.end());
    for (std::size_t a = 1; a < ts.size(); ++a) {
      const double g = ts[a] - ts[a - 1];
      if (g > 0.0) gaps.push_back(g);
    }
  }
  double ell = 1.0;
  if (!gaps.empty()) {
    std::sort(gaps.begin(), gaps.end());
    ell = gaps[gaps.size() / 2];
  }

  StationaryGPParams init;
  init.mean = mean;
  init.chol_factor = llt.matrixL();
  init.lengthscale = ell;
  init.noise_var = 0.1;
  return init;
}

namespace {

// Weighted-MLE mean given fixed kernel parameters: solve
//   (sum_i w_i P_i^T K_i^-1 P_i) m = sum_i w_i P_i^T K_i^-1 x_i,
// where P_i lifts stream means onto block i's observation slots. Streams
// absent from the data keep their previous mean.
Eigen::VectorXd closed_form_mean(std::span<const ObservationBlock> blocks,
                                 std::span<const double> weights,
                                 const std::vector<std::size_t>& active,
                                 const std::vector<Eigen::MatrixXd>& sqdists,
                                 const StationaryGPParams& params,
                                 const Eigen::VectorXd& prev_mean) {
  const int D = params.stream_count();
  Eigen::MatrixXd a_mat = Eigen::MatrixXd::Zero(D, D);
  Eigen::VectorXd b_vec = Eigen::VectorXd::Zero(D);
  std::vector<Eigen::MatrixXd> a_parts(active.size());
  std::vector<Eigen::VectorXd> b_parts(active.size());
  parallel_for(active.size(), [&](std::size_t j) {
    const auto& block = blocks[active[j]];
    const int n = block.size();
    const auto fc = factorize_covariance(block.streams, sqdists[j], params);
    Eigen::MatrixXd lift = Eigen::MatrixXd::Zero(n, D);
    for (int a = 0; a < n; ++a) lift(a, block.streams[a]) = 1.0;
    const Eigen::MatrixXd kinv_lift = fc.llt.solve(lift);
    a_parts[j] = lift.transpose() * kinv_lift;
    b_parts[j] = kinv_lift.transpose() * block.values;
  });
  for (std::size_t j = 0; j < active.size(); ++j) {
    a_mat += weights[active[j]] * a_parts[j];
    b_vec += weights[active[j]] * b_parts[j];
  }
  for (int d = 0; d < D; ++d) {
    if (a_mat(d, d) == 0.0) {
      a_mat(d, d) = 1.0;
      b_vec(d) = prev_mean(d);
    }
  }
  return a_mat.ldlt().solve(b_vec);
}

}  // namespace

FitResult fit_weighted_mle(std::span<const ObservationBlock> blocks,
                           std::span<const double> weights,
                           const StationaryGPParams& init,
                           const OptConfig& opt) {
  if (blocks.size() != weights.size())
    throw std::invalid_argument("fit_weighted_mle: weights must align with blocks");
  init.validate();
  const int D = init.stream_count();
  std::vector<std::size_t> active;
  double total_weight = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!(weights[i] >= 0.0))
      throw std::invalid_argument("fit_weighted_mle: weights must be non-negative");
    if (weights[i] > 0.0) {
      blocks[i].validate(D);
      active.push_back(i);
      total_weight += weights[i];
    }
  }
  if (active.empty())
    throw std::invalid_argument("fit_weighted_mle: at least one weight must be positive");

  std::vector<Eigen::MatrixXd> sqdists(active.size());
  for (std::size_t j = 0; j < active.size(); ++j)
    sqdists[j] = squared_time_dist(blocks[active[j]].times);

  // Per-unit-weight objective; scaling all weights by a constant leaves the
  // optimization trajectory unchanged.
  const auto eval_value = [&](const StationaryGPParams& p) -> double {
    if (!params_finite(p)) return -std::numeric_limits<double>::infinity();
    std::vector<double> vals(active.size());
    try {
      parallel_for(active.size(), [&](std::size_t j) {
        vals[j] = lml_value(blocks[active[j]], p, sqdists[j]);
      });
    } catch (const std::runtime_error&) {
      return -std::numeric_limits<double>::infinity();
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < active.size(); ++j) sum += weights[active[j]] * vals[j];
    return sum / total_weight;
  };
  const auto eval_grad = [&](const StationaryGPParams& p) -> LmlWithGrad {
    std::vector<LmlWithGrad> parts(active.size());
    parallel_for(active.size(), [&](std::size_t j) {
      parts[j] = lml_grad(blocks[active[j]], p, sqdists[j]);
    });
    LmlWithGrad total;
    total.grad = Eigen::VectorXd::Zero(parts.front().grad.size());
    for (std::size_t j = 0; j < active.size(); ++j) {
      total.value += weights[active[j]] * parts[j].value;
      total.grad += weights[active[j]] * parts[j].grad;
    }
    total.value /= total_weight;
    total.grad /= total_weight;
    return total;
  };

  StationaryGPParams params = init;
  const int kdim = kernel_param_count(D);
  Eigen::VectorXd theta_k = pack_kernel(params);
  Eigen::VectorXd prev_theta_k, prev_grad_k;
  bool have_prev = false;
  double step_hint = opt.initial_step;
  double value = -std::numeric_limits<double>::infinity();
  bool value_valid = false;
  bool converged = false;
  int it = 0;

  for (it = 0; it < opt.max_iter; ++it) {
    params.mean = closed_form_mean(blocks, weights, active, sqdists, params, params.mean);
    const LmlWithGrad cur = eval_grad(params);
    value = cur.value;
    value_valid = true;
    if (!std::isfinite(value))
      throw std::runtime_error("fit_weighted_mle: objective became non-finite");
    if (cur.grad.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
      converged = true;
      break;
    }
    const Eigen::VectorXd grad_k = cur.grad.head(kdim);
    const double gnorm_inf = grad_k.lpNorm<Eigen::Infinity>();
    if (gnorm_inf < opt.grad_tol) {
      // Kernel is stationary and the mean was just refreshed in closed form.
      converged = true;
      break;
    }

    double step = step_hint;
    if (have_prev) {
      const Eigen::VectorXd s = theta_k - prev_theta_k;
      const Eigen::VectorXd y = grad_k - prev_grad_k;
      const double sy = s.dot(y);
      if (sy < 0.0) step = s.squaredNorm() / -sy;  // Barzilai-Borwein
    }
    step = std::min(step, opt.max_coord_step / gnorm_inf);
    step = std::max(step, 1e-12);

    const double g2 = grad_k.squaredNorm();
    bool accepted = false;
    Eigen::VectorXd theta_try;
    StationaryGPParams params_try;
    double value_try = 0.0;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      theta_try = theta_k + step * grad_k;
      params_try = unpack_kernel(theta_try, params.mean);
      value_try = eval_value(params_try);
      if (std::isfinite(value_try) && value_try >= value + 1e-4 * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no ascent direction left at this resolution

    prev_theta_k = theta_k;
    prev_grad_k = grad_k;
    have_prev = true;
    theta_k = theta_try;
    params = params_try;
    value = value_try;
    step_hint = step * 2.0;
  }

  if (!value_valid) value = eval_value(params);
  FitResult out;
  out.params = std::move(params);
  out.objective = value * total_weight;
  out.iterations = it;
  out.converged = converged;
  return out;
}

double windowed_log_likelihood(const ObservationBlock& block,
                               const WindowedGPParams& params,
                               double anchor) {
  params.validate();
  block.validate(params.stream_count());
  const int W = params.window_count();
  const double width = params.window_width_hours;
  double total = 0.0;
  for (int w = 0; w < W; ++w) {
    ObservationBlock sub;
    std::vector<double> sub_values;
    for (int a = 0; a < block.size(); ++a) {
      if (window_of(block.times[a], anchor, W, width) != w) continue;
      sub.streams.push_back(block.streams[a]);
      sub.times.push_back(block.times[a] - anchor);
      sub_values.push_back(block.values(a));
    }
    if (sub.streams.empty()) continue;
    sub.values = Eigen::Map<Eigen::VectorXd>(sub_values.data(), sub_values.size());
    total += lml_value(sub, params.windows[w], squared_time_dist(sub.times));
  }
  return total;
}

WindowedFitResult fit_windowed_mle(std::span<const ObservationBlock> blocks,
                                   std::span<const double> anchors,
                                   std::span<const double> weights,
                                   int window_count,
                                   double width_hours,
                                   const std::optional<StationaryGPParams>& fallback,
                                   const OptConfig& opt) {
  if (blocks.size() != anchors.size() || blocks.size() != weights.size())
    throw std::invalid_argument("fit_windowed_mle: blocks, anchors and weights must align");
  if (window_count < 1) throw std::invalid_argument("fit_windowed_mle: need at least one window");
  if (!(width_hours > 0.0)) throw std::invalid_argument("fit_windowed_mle: width must be positive");

  int stream_count = fallback ? fallback->stream_count() : 0;
  if (stream_count == 0) {
    for (const auto& b : blocks)
      for (int s : b.streams) stream_count = std::max(stream_count, s + 1);
  }
  if (stream_count == 0) throw std::invalid_argument("fit_windowed_mle: no data");

  // Partition every positive-weight patient's points into windows relative to
  // that patient's own anchor.
  std::vector<std::vector<ObservationBlock>> window_blocks(window_count);
  std::vector<std::vector<double>> window_weights(window_count);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!(weights[i] > 0.0)) continue;
    const auto& block = blocks[i];
    std::vector<ObservationBlock> subs(window_count);
    std::vector<std::vector<double>> sub_values(window_count);
    for (int a = 0; a < block.size(); ++a) {
      const int w = window_of(block.times[a], anchors[i], window_count, width_hours);
      subs[w].streams.push_back(block.streams[a]);
      subs[w].times.push_back(block.times[a] - anchors[i]);
      sub_values[w].push_back(block.values(a));
    }
    for (int w = 0; w < window_count; ++w) {
      if (subs[w].streams.empty()) continue;
      subs[w].values =
          Eigen::Map<Eigen::VectorXd>(sub_values[w].data(), sub_values[w].size());
      window_blocks[w].push_back(std::move(subs[w]));
      window_weights[w].push_back(weights[i]);
    }
  }

  bool any_data = false;
  for (int w = 0; w < window_count; ++w) any_data = any_data || !window_blocks[w].empty();
  if (!any_data) throw std::invalid_argument("fit_windowed_mle: all windows are empty");

  WindowedFitResult out;
  out.params.window_width_hours = width_hours;
  out.params.windows.resize(window_count);
  out.window_trained.assign(window_count, false);
  for (int w = 0; w < window_count; ++w) {
    if (window_blocks[w].empty()) {
      if (!fallback)
        throw std::invalid_argument("fit_windowed_mle: empty window and no fallback params");
      out.params.windows[w] = *fallback;
      continue;
    }
    const auto init =
        default_fit_init(window_blocks[w], window_weights[w], stream_count);
    out.params.windows[w] =
        fit_weighted_mle(window_blocks[w], window_weights[w], init, opt).params;
    out.window_trained[w] = true;
  }
  return out;
}

}  // namespace riskmix
