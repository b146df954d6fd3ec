#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "riskmix/cohort.hpp"
#include "riskmix/mixture.hpp"
#include "riskmix/transfer.hpp"

namespace riskmix {

struct BundleMetadata {
  std::uint64_t training_seed = 0;
  std::string cohort_fingerprint;
  int selected_expert_count = 0;
  std::vector<double> log_bayes_factors;
  std::vector<double> regression_rss;
  std::vector<int> partition_counts;
  std::map<std::string, std::string> flags;  // training settings, for provenance
};

// Everything the real-time stage needs: paired stable/deteriorating experts,
// the admission-to-responsibility regressor, normalization stats and the
// class prior.
struct ModelBundle {
  StableMixture stable_mixture;
  DeterioratingExpertSet det_experts;
  ResponsibilityRegressor regressor;
  NormalizationStats normalization;
  double class_prior = 0.0832;
  WindowConfig window_cfg;
  std::vector<std::string> stream_names;
  AdmissionSchema schema;
  BundleMetadata metadata;

  int expert_count() const { return stable_mixture.expert_count(); }
  void validate() const;
};

struct RiskTrace {
  std::vector<double> times;
  Eigen::MatrixXd per_expert;  // rows align with times, one column per expert
  Eigen::VectorXd aggregate;
  Eigen::VectorXd beta_hat;
};

struct ScoreSchedule {
  enum class Mode { kEveryObservation, kFixedInterval };
  Mode mode = Mode::kEveryObservation;
  double interval_hours = 4.0;
  // Observations older than this many hours before the score time are
  // excluded from the block; infinity keeps the full history.
  double lookback_hours = std::numeric_limits<double>::infinity();
};

// Posterior P(v=1 | block) from the paired models, evaluated in log domain:
// prior*f1 / (prior*f1 + (1-prior)*f0).
double expert_risk(const ObservationBlock& block, const StationaryGPParams& stable,
                   const WindowedGPParams& det, double anchor, double prior);

// Convex combination of expert scores under beta_hat; clamped into
// [min(scores), max(scores)].
double aggregate_risk(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& expert_scores);

// Runs the real-time stage over one patient's raw record: admission features
// decide beta_hat, then each schedule point scores the normalized history up
// to that time with the anchor at the latest observation seen so far.
RiskTrace score_stream(const PatientRecord& patient, const ModelBundle& bundle,
                       const ScoreSchedule& schedule = {});

}  // namespace riskmix
