#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "riskmix/mixture.hpp"
#include "riskmix/mtgp.hpp"

namespace riskmix {

// Linear map from encoded admission features (incl. intercept) to expert
// responsibilities; column m holds expert m's regression weights.
struct ResponsibilityRegressor {
  Eigen::MatrixXd weights;  // S x M
  std::vector<std::string> feature_names;
  Eigen::VectorXd residual_sum_squares;  // per expert column
  bool ridge_used = false;

  int feature_dim() const { return static_cast<int>(weights.rows()); }
  int expert_count() const { return static_cast<int>(weights.cols()); }
};

// Per-column ordinary least squares of responsibilities on admissions. A
// rank-deficient design engages ridge with lambda = 1e-6*trace(X^T X)/S.
ResponsibilityRegressor fit_responsibility_regression(
    const Eigen::MatrixXd& admissions, const Eigen::MatrixXd& responsibilities,
    std::vector<std::string> feature_names);

// W^T y clipped at zero and renormalized onto the simplex; all-nonpositive
// predictions fall back to uniform.
Eigen::VectorXd predict_responsibilities(const ResponsibilityRegressor& reg,
                                         const Eigen::VectorXd& admission);

// Independent Bernoulli(beta_hat(i,m)) draws; set m collects the patients
// whose draw for expert m came up positive. Reproducible from the seed.
std::vector<std::vector<int>> self_taught_partition(const Eigen::MatrixXd& beta_hat,
                                                    std::uint64_t seed);

struct DeterioratingExpertSet {
  std::vector<WindowedGPParams> experts;
  std::vector<bool> expert_trained;                // false: copy of the stable expert
  std::vector<std::vector<bool>> window_trained;   // per expert, per window
  std::vector<int> sample_counts;
  std::uint64_t sampling_seed = 0;

  int expert_count() const { return static_cast<int>(experts.size()); }
  void validate() const;
};

struct WindowConfig {
  int window_count = 4;
  double width_hours = 12.0;
};

// Windowed MLE per expert over its partition, anchored at each patient's
// stay end, unit weights. An empty partition yields a windowed copy of the
// matching stable expert, flagged untrained.
DeterioratingExpertSet train_deteriorating_experts(
    std::span<const ObservationBlock> det_blocks, std::span<const double> anchors,
    const std::vector<std::vector<int>>& partition, const StableMixture& stable,
    const WindowConfig& window_cfg, const OptConfig& opt = {});

}  // namespace riskmix
