#include "riskmix/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace riskmix {

namespace {

constexpr double kStdFloor = 1e-6;

bool matches(OutcomeFilter filter, int outcome) {
  switch (filter) {
    case OutcomeFilter::kAll: return true;
    case OutcomeFilter::kStable: return outcome == 0;
    case OutcomeFilter::kDeteriorating: return outcome == 1;
  }
  return false;
}

}  // namespace

int AdmissionSchema::encoded_dim() const {
  int dim = 1;  // intercept
  for (const auto& f : features) {
    if (f.kind == FeatureKind::kNumeric) {
      dim += 1;
    } else {
      if (f.levels.size() < 2)
        throw std::invalid_argument("categorical feature '" + f.name +
                                    "' needs at least two levels");
      dim += static_cast<int>(f.levels.size()) - 1;
    }
  }
  return dim;
}

std::vector<std::string> AdmissionSchema::encoded_names() const {
  std::vector<std::string> names;
  for (const auto& f : features) {
    if (f.kind == FeatureKind::kNumeric) {
      names.push_back(f.name);
    } else {
      for (std::size_t l = 1; l < f.levels.size(); ++l)
        names.push_back(f.name + "=" + f.levels[l]);
    }
  }
  names.push_back("__intercept");
  return names;
}

std::vector<bool> AdmissionSchema::numeric_coordinates() const {
  std::vector<bool> mask;
  for (const auto& f : features) {
    if (f.kind == FeatureKind::kNumeric) {
      mask.push_back(true);
    } else {
      for (std::size_t l = 1; l < f.levels.size(); ++l) mask.push_back(false);
    }
  }
  mask.push_back(false);  // intercept
  return mask;
}

Eigen::VectorXd AdmissionSchema::encode(const AdmissionValues& values) const {
  Eigen::VectorXd encoded = Eigen::VectorXd::Zero(encoded_dim());
  int idx = 0;
  for (const auto& f : features) {
    const auto it = values.find(f.name);
    if (it == values.end())
      throw std::invalid_argument("admission feature '" + f.name + "' is missing");
    if (f.kind == FeatureKind::kNumeric) {
      if (!it->second.is_number)
        throw std::invalid_argument("admission feature '" + f.name + "' must be numeric");
      encoded(idx++) = it->second.number;
    } else {
      if (it->second.is_number)
        throw std::invalid_argument("admission feature '" + f.name +
                                    "' must name a categorical level");
      const auto level =
          std::find(f.levels.begin(), f.levels.end(), it->second.text);
      if (level == f.levels.end())
        throw std::invalid_argument("admission feature '" + f.name + "': unknown level '" +
                                    it->second.text + "'");
      const int pos = static_cast<int>(level - f.levels.begin());
      for (std::size_t l = 1; l < f.levels.size(); ++l)
        encoded(idx++) = (static_cast<int>(l) == pos) ? 1.0 : 0.0;
    }
  }
  encoded(idx) = 1.0;  // intercept
  return encoded;
}

const AdmissionFeature* AdmissionSchema::find(const std::string& name) const {
  for (const auto& f : features)
    if (f.name == name) return &f;
  return nullptr;
}

bool AdmissionSchema::operator==(const AdmissionSchema& other) const {
  if (features.size() != other.features.size()) return false;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name != other.features[i].name) return false;
    if (features[i].kind != other.features[i].kind) return false;
    if (features[i].levels != other.features[i].levels) return false;
  }
  return true;
}

std::vector<int> Cohort::stable_indices() const {
  std::vector<int> idx;
  for (std::size_t i = 0; i < patients.size(); ++i)
    if (patients[i].outcome == 0) idx.push_back(static_cast<int>(i));
  return idx;
}

std::vector<int> Cohort::deteriorating_indices() const {
  std::vector<int> idx;
  for (std::size_t i = 0; i < patients.size(); ++i)
    if (patients[i].outcome == 1) idx.push_back(static_cast<int>(i));
  return idx;
}

void Cohort::validate() const {
  const int D = stream_count();
  if (D < 1) throw std::invalid_argument("cohort declares no streams");
  const int S = encoded_admission_dim();
  for (const auto& p : patients) {
    if (p.observations.empty())
      throw std::invalid_argument("patient '" + p.id + "' has no observations");
    if (!(p.stay_length_hours > 0.0))
      throw std::invalid_argument("patient '" + p.id + "' has non-positive stay length");
    if (p.outcome != 0 && p.outcome != 1)
      throw std::invalid_argument("patient '" + p.id + "' has invalid outcome");
    if (p.admission_encoded.size() != S)
      throw std::invalid_argument("patient '" + p.id + "' admission dimension mismatch");
    for (std::size_t a = 0; a < p.observations.size(); ++a) {
      const auto& o = p.observations[a];
      if (o.stream_index < 0 || o.stream_index >= D)
        throw std::invalid_argument("patient '" + p.id + "' has out-of-range stream index");
      if (o.time < 0.0)
        throw std::invalid_argument("patient '" + p.id + "' has a negative observation time");
      if (o.time > p.stay_length_hours)
        throw std::invalid_argument("patient '" + p.id +
                                    "' has an observation after discharge");
      if (a > 0) {
        const auto& prev = p.observations[a - 1];
        if (prev.time > o.time ||
            (prev.time == o.time && prev.stream_index > o.stream_index))
          throw std::invalid_argument("patient '" + p.id + "' observations are not sorted");
      }
    }
  }
}

NormalizationStats fit_normalization(const Cohort& cohort, OutcomeFilter subset) {
  const int D = cohort.stream_count();
  const int S = cohort.encoded_admission_dim();
  std::vector<const PatientRecord*> selected;
  for (const auto& p : cohort.patients)
    if (matches(subset, p.outcome)) selected.push_back(&p);
  if (selected.empty()) throw std::invalid_argument("fit_normalization: empty subset");

  NormalizationStats stats;
  stats.stream_mean = Eigen::VectorXd::Zero(D);
  stats.stream_std = Eigen::VectorXd::Ones(D);

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(D);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(D);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(D);
  for (const auto* p : selected) {
    for (const auto& o : p->observations) {
      sum(o.stream_index) += o.value;
      sum_sq(o.stream_index) += o.value * o.value;
      count(o.stream_index) += 1.0;
    }
  }
  for (int d = 0; d < D; ++d) {
    if (count(d) == 0.0)
      throw std::invalid_argument("fit_normalization: stream '" + cohort.stream_names[d] +
                                  "' has no observations in the subset");
    const double mean = sum(d) / count(d);
    const double var = std::max(0.0, sum_sq(d) / count(d) - mean * mean);
    double sd = std::sqrt(var);
    if (sd < kStdFloor) {
      sd = kStdFloor;
      stats.degenerate_streams.push_back(d);
    }
    stats.stream_mean(d) = mean;
    stats.stream_std(d) = sd;
  }

  stats.admission_mean = Eigen::VectorXd::Zero(S);
  stats.admission_std = Eigen::VectorXd::Ones(S);
  const auto numeric = cohort.schema.numeric_coordinates();
  const double n = static_cast<double>(selected.size());
  for (int j = 0; j < S; ++j) {
    if (!numeric[j]) continue;
    double s = 0.0, s2 = 0.0;
    for (const auto* p : selected) {
      const double v = p->admission_encoded(j);
      s += v;
      s2 += v * v;
    }
    const double mean = s / n;
    double sd = std::sqrt(std::max(0.0, s2 / n - mean * mean));
    if (sd < kStdFloor) {
      sd = kStdFloor;
      stats.degenerate_admission.push_back(j);
    }
    stats.admission_mean(j) = mean;
    stats.admission_std(j) = sd;
  }
  return stats;
}

namespace {

Cohort transform_cohort(const Cohort& cohort, const NormalizationStats& stats, bool inverse) {
  const int D = cohort.stream_count();
  const int S = cohort.encoded_admission_dim();
  if (stats.stream_mean.size() != D || stats.stream_std.size() != D ||
      stats.admission_mean.size() != S || stats.admission_std.size() != S)
    throw std::invalid_argument("normalization stats dimensions do not match cohort");
  Cohort out = cohort;
  for (auto& p : out.patients) {
    for (auto& o : p.observations) {
      o.value = inverse
                    ? o.value * stats.stream_std(o.stream_index) + stats.stream_mean(o.stream_index)
                    : (o.value - stats.stream_mean(o.stream_index)) / stats.stream_std(o.stream_index);
    }
    for (int j = 0; j < S; ++j) {
      p.admission_encoded(j) =
          inverse ? p.admission_encoded(j) * stats.admission_std(j) + stats.admission_mean(j)
                  : (p.admission_encoded(j) - stats.admission_mean(j)) / stats.admission_std(j);
    }
  }
  return out;
}

}  // namespace

Cohort apply_normalization(const Cohort& cohort, const NormalizationStats& stats) {
  return transform_cohort(cohort, stats, /*inverse=*/false);
}

Cohort invert_normalization(const Cohort& cohort, const NormalizationStats& stats) {
  return transform_cohort(cohort, stats, /*inverse=*/true);
}

Eigen::VectorXd normalize_admission(const Eigen::VectorXd& encoded,
                                    const NormalizationStats& stats) {
  if (encoded.size() != stats.admission_mean.size())
    throw std::invalid_argument("admission vector does not match normalization stats");
  return (encoded - stats.admission_mean).cwiseQuotient(stats.admission_std);
}

ObservationBlock make_block(const PatientRecord& patient) {
  ObservationBlock block;
  const int n = static_cast<int>(patient.observations.size());
  block.streams.reserve(n);
  block.times.reserve(n);
  block.values.resize(n);
  for (int a = 0; a < n; ++a) {
    block.streams.push_back(patient.observations[a].stream_index);
    block.times.push_back(patient.observations[a].time);
    block.values(a) = patient.observations[a].value;
  }
  return block;
}

std::vector<ObservationBlock> subset_blocks(const Cohort& cohort, OutcomeFilter subset) {
  std::vector<ObservationBlock> blocks;
  for (const auto& p : cohort.patients)
    if (matches(subset, p.outcome)) blocks.push_back(make_block(p));
  return blocks;
}

}  // namespace riskmix
