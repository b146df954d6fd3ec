#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "riskmix/cohort.hpp"
#include "riskmix/common.hpp"
#include "riskmix/mtgp.hpp"

namespace riskmix {

// Per-class distribution of one admission feature: numeric features draw from
// N(mean, std), categorical features from `level_probs` over the declared
// levels.
struct FeatureDist {
  double mean = 0.0;
  double std = 1.0;
  std::vector<double> level_probs;
};

// One latent class: its stable GP, its windowed deteriorating GP, its
// deterioration probability and its admission-feature distributions (aligned
// with the schema's feature order).
struct ClassConfig {
  StationaryGPParams stable;
  WindowedGPParams deteriorating;
  double p_deteriorate = 0.1;
  std::vector<FeatureDist> admission;
};

struct StayConfig {
  double log_mean = std::log(48.0);  // of hours
  double log_std = 0.5;
  double min_hours = 12.0;
  double max_hours = 240.0;
};

struct SamplingConfig {
  double base_interval_hours = 4.0;
  double jitter_hours = 1.0;  // uniform on [-jitter, +jitter], per step
};

// Generative model: class Z ~ class_weights; admission Y | Z from the class's
// feature distributions; outcome v | Z Bernoulli; streams jointly from the
// class's stable GP (v=0) or its windowed GP anchored at the stay end (v=1).
struct GeneratorConfig {
  std::vector<std::string> stream_names;
  AdmissionSchema schema;
  Eigen::VectorXd class_weights;
  std::vector<ClassConfig> classes;
  StayConfig stay;
  SamplingConfig sampling;

  int class_count() const { return static_cast<int>(classes.size()); }
  int stream_count() const { return static_cast<int>(stream_names.size()); }
  void validate() const;
};

struct LatentRecord {
  std::string id;
  int z = 0;
  int v = 0;
};

std::pair<PatientRecord, LatentRecord> sample_patient(const GeneratorConfig& cfg,
                                                      Rng& rng, const std::string& id);

struct GeneratedCohort {
  Cohort cohort;
  std::vector<LatentRecord> latents;
};

// N independent draws on per-patient substreams of `seed`; identical
// (cfg, n, seed) produce identical cohorts.
GeneratedCohort generate_cohort(const GeneratorConfig& cfg, int n, std::uint64_t seed);

// Five vital-sign streams, seven admission features, four latent classes,
// ~8.3% deteriorating. Loosely vital-sign-scaled values.
GeneratorConfig paper_like_preset();
// Same shape with two well-separated classes, admission features strongly
// class-linked and ~15% deteriorating; the heterogeneity showcase.
GeneratorConfig two_class_preset();
GeneratorConfig preset_by_name(const std::string& name);

}  // namespace riskmix
