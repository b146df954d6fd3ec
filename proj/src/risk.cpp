#include "riskmix/risk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace riskmix {

void ModelBundle::validate() const {
  stable_mixture.validate();
  det_experts.validate();
  const int m = stable_mixture.expert_count();
  if (det_experts.expert_count() != m)
    throw std::invalid_argument("bundle: stable and deteriorating expert counts differ");
  if (regressor.expert_count() != m)
    throw std::invalid_argument("bundle: regressor column count differs from expert count");
  if (!(class_prior > 0.0 && class_prior < 1.0))
    throw std::invalid_argument("bundle: class prior must lie in (0,1)");
  if (static_cast<int>(stream_names.size()) != stable_mixture.stream_count())
    throw std::invalid_argument("bundle: stream names do not match expert dimension");
  if (regressor.feature_dim() != schema.encoded_dim())
    throw std::invalid_argument("bundle: regressor features do not match admission schema");
}

double expert_risk(const ObservationBlock& block, const StationaryGPParams& stable,
                   const WindowedGPParams& det, double anchor, double prior) {
  if (!(prior > 0.0 && prior < 1.0))
    throw std::invalid_argument("expert_risk: prior must lie in (0,1)");
  const double log_f1 = windowed_log_likelihood(block, det, anchor);
  const double log_f0 = log_marginal_likelihood(block, stable);
  // log-odds of deterioration; the subtraction cancels exactly when the two
  // likelihoods coincide, so the score then equals the prior.
  const double s = (log_f1 - log_f0) + (std::log(prior) - std::log1p(-prior));
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double aggregate_risk(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& expert_scores) {
  if (beta_hat.size() != expert_scores.size())
    throw std::invalid_argument("aggregate_risk: beta and score lengths differ");
  if (beta_hat.size() == 0) throw std::invalid_argument("aggregate_risk: empty inputs");
  const double result = beta_hat.dot(expert_scores);
  return std::clamp(result, expert_scores.minCoeff(), expert_scores.maxCoeff());
}

RiskTrace score_stream(const PatientRecord& patient, const ModelBundle& bundle,
                       const ScoreSchedule& schedule) {
  bundle.validate();
  if (patient.observations.empty())
    throw std::invalid_argument("score_stream: patient '" + patient.id + "' has no observations");

  const Eigen::VectorXd admission =
      normalize_admission(bundle.schema.encode(patient.admission_raw), bundle.normalization);
  const Eigen::VectorXd beta_hat = predict_responsibilities(bundle.regressor, admission);

  // Normalized copy of the observation stream, kept in record order.
  std::vector<Observation> obs = patient.observations;
  for (auto& o : obs) {
    o.value = (o.value - bundle.normalization.stream_mean(o.stream_index)) /
              bundle.normalization.stream_std(o.stream_index);
  }

  std::vector<double> score_times;
  if (schedule.mode == ScoreSchedule::Mode::kEveryObservation) {
    for (const auto& o : obs)
      if (score_times.empty() || o.time > score_times.back()) score_times.push_back(o.time);
  } else {
    if (!(schedule.interval_hours > 0.0))
      throw std::invalid_argument("score_stream: interval must be positive");
    const double last = obs.back().time;
    for (double t = schedule.interval_hours; t <= last; t += schedule.interval_hours)
      score_times.push_back(t);
    if (score_times.empty()) score_times.push_back(last);
  }

  const int m_count = bundle.expert_count();
  RiskTrace trace;
  trace.beta_hat = beta_hat;
  trace.per_expert.resize(0, m_count);
  std::vector<double> kept_times;
  std::vector<Eigen::VectorXd> expert_rows;
  std::vector<double> aggregates;
  for (double t : score_times) {
    ObservationBlock block;
    std::vector<double> values;
    double anchor = -std::numeric_limits<double>::infinity();
    for (const auto& o : obs) {
      if (o.time > t) break;  // observations are time-sorted
      if (o.time < t - schedule.lookback_hours) continue;
      block.streams.push_back(o.stream_index);
      block.times.push_back(o.time);
      values.push_back(o.value);
      anchor = std::max(anchor, o.time);
    }
    if (block.streams.empty()) continue;  // schedule point before the first observation
    block.values = Eigen::Map<Eigen::VectorXd>(values.data(), values.size());

    Eigen::VectorXd scores(m_count);
    for (int m = 0; m < m_count; ++m)
      scores(m) = expert_risk(block, bundle.stable_mixture.experts[m],
                              bundle.det_experts.experts[m], anchor, bundle.class_prior);
    kept_times.push_back(t);
    expert_rows.push_back(scores);
    aggregates.push_back(aggregate_risk(beta_hat, scores));
  }

  trace.times = std::move(kept_times);
  trace.per_expert.resize(static_cast<long>(expert_rows.size()), m_count);
  trace.aggregate.resize(static_cast<long>(aggregates.size()));
  for (std::size_t i = 0; i < expert_rows.size(); ++i) {
    trace.per_expert.row(static_cast<long>(i)) = expert_rows[i].transpose();
    trace.aggregate(static_cast<long>(i)) = aggregates[i];
  }
  return trace;
}

}  // namespace riskmix
