#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "riskmix/mtgp.hpp"

namespace riskmix {

// One measurement: stream `stream_index` observed `time` hours after ward
// admission. Values are raw units on disk and z-units after normalization.
struct Observation {
  int stream_index = 0;
  double time = 0.0;
  double value = 0.0;
};

enum class FeatureKind { kNumeric, kCategorical };

struct AdmissionFeature {
  std::string name;
  FeatureKind kind = FeatureKind::kNumeric;
  std::vector<std::string> levels;  // categorical only, declared order
};

// Raw admission value as parsed: numeric features carry `number`, categorical
// features carry `text` naming one of the declared levels.
struct AdmissionValue {
  bool is_number = false;
  double number = 0.0;
  std::string text;

  static AdmissionValue of_number(double v) { return {true, v, {}}; }
  static AdmissionValue of_text(std::string t) { return {false, 0.0, std::move(t)}; }
};

using AdmissionValues = std::map<std::string, AdmissionValue>;

// Cohort-wide admission schema. Encoding: numeric features map to one
// coordinate each; categorical features are one-hot with the first level
// dropped; a constant-1 intercept coordinate is appended last.
struct AdmissionSchema {
  std::vector<AdmissionFeature> features;

  int encoded_dim() const;
  std::vector<std::string> encoded_names() const;
  // true where an encoded coordinate comes from a numeric raw feature
  std::vector<bool> numeric_coordinates() const;
  Eigen::VectorXd encode(const AdmissionValues& values) const;
  const AdmissionFeature* find(const std::string& name) const;
  bool operator==(const AdmissionSchema& other) const;
};

struct PatientRecord {
  std::string id;
  std::vector<Observation> observations;  // sorted by (time, stream_index)
  AdmissionValues admission_raw;
  Eigen::VectorXd admission_encoded;
  double stay_length_hours = 0.0;
  int outcome = 0;  // 0 discharged/stable, 1 ICU-admitted/deteriorating
};

struct Cohort {
  std::vector<PatientRecord> patients;
  std::vector<std::string> stream_names;
  AdmissionSchema schema;

  int stream_count() const { return static_cast<int>(stream_names.size()); }
  int encoded_admission_dim() const { return schema.encoded_dim(); }
  std::vector<int> stable_indices() const;
  std::vector<int> deteriorating_indices() const;
  void validate() const;
};

struct NormalizationStats {
  Eigen::VectorXd stream_mean;
  Eigen::VectorXd stream_std;
  Eigen::VectorXd admission_mean;  // identity (0) on one-hot and intercept coords
  Eigen::VectorXd admission_std;   // identity (1) on one-hot and intercept coords
  std::vector<int> degenerate_streams;     // std floored at 1e-6
  std::vector<int> degenerate_admission;
};

enum class OutcomeFilter { kAll, kStable, kDeteriorating };

// Population mean/std per stream over the subset's observations, and per
// numeric admission coordinate over the subset's patients. Constant streams
// get the 1e-6 std floor and a flag.
NormalizationStats fit_normalization(const Cohort& cohort, OutcomeFilter subset);

Cohort apply_normalization(const Cohort& cohort, const NormalizationStats& stats);
Cohort invert_normalization(const Cohort& cohort, const NormalizationStats& stats);
Eigen::VectorXd normalize_admission(const Eigen::VectorXd& encoded,
                                    const NormalizationStats& stats);

ObservationBlock make_block(const PatientRecord& patient);
// Blocks (and patient indices) for the given outcome subset, in cohort order.
std::vector<ObservationBlock> subset_blocks(const Cohort& cohort, OutcomeFilter subset);

}  // namespace riskmix
