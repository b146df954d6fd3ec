#include "riskmix/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace riskmix {

void GeneratorConfig::validate() const {
  const int d = stream_count();
  const int m = class_count();
  if (d < 1) throw std::invalid_argument("generator: no streams declared");
  if (m < 1) throw std::invalid_argument("generator: no classes declared");
  if (class_weights.size() != m)
    throw std::invalid_argument("generator: class weights must align with classes");
  double wsum = 0.0;
  for (int c = 0; c < m; ++c) {
    if (class_weights(c) < 0.0)
      throw std::invalid_argument("generator: class weights must be non-negative");
    wsum += class_weights(c);
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("generator: class weights must sum to 1");
  for (const auto& cls : classes) {
    cls.stable.validate();
    cls.deteriorating.validate();
    if (cls.stable.stream_count() != d || cls.deteriorating.stream_count() != d)
      throw std::invalid_argument("generator: class GP dimensions must match stream count");
    if (cls.p_deteriorate < 0.0 || cls.p_deteriorate > 1.0)
      throw std::invalid_argument("generator: deterioration probability out of range");
    if (cls.admission.size() != schema.features.size())
      throw std::invalid_argument("generator: admission distributions must align with schema");
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      const auto& feat = schema.features[f];
      const auto& dist = cls.admission[f];
      if (feat.kind == FeatureKind::kNumeric) {
        if (!(dist.std > 0.0))
          throw std::invalid_argument("generator: numeric feature '" + feat.name +
                                      "' needs positive std");
      } else {
        if (dist.level_probs.size() != feat.levels.size())
          throw std::invalid_argument("generator: level probabilities of '" + feat.name +
                                      "' must align with levels");
      }
    }
  }
  if (!(sampling.base_interval_hours > 0.0))
    throw std::invalid_argument("generator: sampling interval must be positive");
  if (sampling.jitter_hours < 0.0 || sampling.jitter_hours >= sampling.base_interval_hours)
    throw std::invalid_argument("generator: jitter must lie in [0, base interval)");
  if (!(stay.min_hours >= sampling.base_interval_hours + sampling.jitter_hours))
    throw std::invalid_argument(
        "generator: minimum stay must cover at least one sampling step");
  if (!(stay.max_hours >= stay.min_hours))
    throw std::invalid_argument("generator: stay bounds are inverted");
}

namespace {

// Joint draw from a stationary GP over the given index via the Cholesky
// factor of the assembled covariance (observation noise included).
Eigen::VectorXd draw_block_values(std::span<const int> streams,
                                  std::span<const double> times,
                                  const StationaryGPParams& params, Rng& rng) {
  const int n = static_cast<int>(streams.size());
  const Eigen::MatrixXd cov = assemble_covariance(streams, times, params);
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("generator: covariance draw failed to factorize");
  Eigen::VectorXd z(n);
  for (int a = 0; a < n; ++a) z(a) = rng.normal();
  Eigen::VectorXd x = llt.matrixL() * z;
  for (int a = 0; a < n; ++a) x(a) += params.mean(streams[a]);
  return x;
}

}  // namespace

std::pair<PatientRecord, LatentRecord> sample_patient(const GeneratorConfig& cfg,
                                                      Rng& rng, const std::string& id) {
  const int d_count = cfg.stream_count();
  const int z = rng.categorical(
      std::span<const double>(cfg.class_weights.data(), cfg.class_weights.size()));
  const ClassConfig& cls = cfg.classes[z];
  const int v = rng.bernoulli(cls.p_deteriorate) ? 1 : 0;

  AdmissionValues admission;
  for (std::size_t f = 0; f < cfg.schema.features.size(); ++f) {
    const auto& feat = cfg.schema.features[f];
    const auto& dist = cls.admission[f];
    if (feat.kind == FeatureKind::kNumeric) {
      admission[feat.name] = AdmissionValue::of_number(rng.normal(dist.mean, dist.std));
    } else {
      const int level = rng.categorical(dist.level_probs);
      admission[feat.name] = AdmissionValue::of_text(feat.levels[level]);
    }
  }

  double stay = std::exp(rng.normal(cfg.stay.log_mean, cfg.stay.log_std));
  stay = std::clamp(stay, cfg.stay.min_hours, cfg.stay.max_hours);

  // Jittered ~base-interval grid per stream; grids are independent across
  // streams so simultaneous samples only occur with zero jitter.
  std::vector<std::pair<double, int>> grid;  // (time, stream)
  for (int d = 0; d < d_count; ++d) {
    double t = 0.0;
    for (;;) {
      t += cfg.sampling.base_interval_hours +
           rng.uniform(-cfg.sampling.jitter_hours, cfg.sampling.jitter_hours);
      if (t > stay) break;
      grid.emplace_back(t, d);
    }
  }
  std::sort(grid.begin(), grid.end());
  if (grid.empty())
    throw std::runtime_error("generator: produced an empty observation grid");

  const int n = static_cast<int>(grid.size());
  std::vector<int> streams(n);
  std::vector<double> times(n);
  for (int a = 0; a < n; ++a) {
    times[a] = grid[a].first;
    streams[a] = grid[a].second;
  }

  Eigen::VectorXd values(n);
  if (v == 0) {
    values = draw_block_values(streams, times, cls.stable, rng);
  } else {
    // Anchor at the stay end; windows are independent, so draw each window's
    // points jointly from its own stationary parameters.
    const auto& det = cls.deteriorating;
    const int w_count = det.window_count();
    for (int w = 0; w < w_count; ++w) {
      std::vector<int> sub_streams, sub_slots;
      std::vector<double> sub_times;
      for (int a = 0; a < n; ++a) {
        if (window_of(times[a], stay, w_count, det.window_width_hours) != w) continue;
        sub_streams.push_back(streams[a]);
        sub_times.push_back(times[a] - stay);
        sub_slots.push_back(a);
      }
      if (sub_streams.empty()) continue;
      const Eigen::VectorXd x = draw_block_values(sub_streams, sub_times, det.windows[w], rng);
      for (std::size_t s = 0; s < sub_slots.size(); ++s) values(sub_slots[s]) = x(s);
    }
  }

  PatientRecord patient;
  patient.id = id;
  patient.stay_length_hours = stay;
  patient.outcome = v;
  patient.admission_raw = std::move(admission);
  patient.admission_encoded = cfg.schema.encode(patient.admission_raw);
  patient.observations.reserve(n);
  for (int a = 0; a < n; ++a)
    patient.observations.push_back({streams[a], times[a], values(a)});

  return {std::move(patient), LatentRecord{id, z, v}};
}

GeneratedCohort generate_cohort(const GeneratorConfig& cfg, int n, std::uint64_t seed) {
  cfg.validate();
  if (n < 1) throw std::invalid_argument("generate_cohort: n must be >= 1");

  GeneratedCohort out;
  out.cohort.stream_names = cfg.stream_names;
  out.cohort.schema = cfg.schema;
  out.cohort.patients.resize(n);
  out.latents.resize(n);

  int digits = 1;
  for (int v = n; v >= 10; v /= 10) ++digits;
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    std::string id = std::to_string(i + 1);
    id = "p" + std::string(digits > static_cast<int>(id.size()) ? digits - id.size() : 0, '0') + id;
    Rng rng(mix_seed(seed, i));
    auto [patient, latent] = sample_patient(cfg, rng, id);
    out.cohort.patients[i] = std::move(patient);
    out.latents[i] = std::move(latent);
  });
  out.cohort.validate();
  return out;
}

namespace {

Eigen::MatrixXd scaled_lower_factor(const Eigen::VectorXd& stds, double coupling) {
  const int d = static_cast<int>(stds.size());
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
  for (int r = 0; r < d; ++r) {
    l(r, r) = stds(r);
    if (r > 0) l(r, r - 1) = coupling * stds(r);
  }
  return l;
}

StationaryGPParams make_stationary(std::vector<double> mean, std::vector<double> stds,
                                   double coupling, double lengthscale, double noise_var) {
  StationaryGPParams p;
  p.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), mean.size());
  p.chol_factor =
      scaled_lower_factor(Eigen::Map<Eigen::VectorXd>(stds.data(), stds.size()), coupling);
  p.lengthscale = lengthscale;
  p.noise_var = noise_var;
  return p;
}

// Windows drift linearly from the stable mean to the deteriorated mean, with
// the full shift reached in the final pre-anchor window.
WindowedGPParams make_drift(const StationaryGPParams& stable, std::vector<double> final_mean,
                            int window_count, double width, double lengthscale) {
  WindowedGPParams wp;
  wp.window_width_hours = width;
  const Eigen::VectorXd target =
      Eigen::Map<Eigen::VectorXd>(final_mean.data(), final_mean.size());
  for (int w = 0; w < window_count; ++w) {
    StationaryGPParams win = stable;
    const double frac = static_cast<double>(w + 1) / window_count;
    win.mean = stable.mean + frac * (target - stable.mean);
    win.lengthscale = lengthscale;
    wp.windows.push_back(std::move(win));
  }
  return wp;
}

AdmissionSchema ward_schema() {
  AdmissionSchema schema;
  schema.features = {
      {"transfer_status", FeatureKind::kCategorical, {"no", "yes"}},
      {"gender", FeatureKind::kCategorical, {"F", "M"}},
      {"age", FeatureKind::kNumeric, {}},
      {"race", FeatureKind::kCategorical, {"groupA", "groupB", "groupC"}},
      {"ethnicity", FeatureKind::kCategorical, {"nonhispanic", "hispanic"}},
      {"stem_cell_transplant", FeatureKind::kCategorical, {"no", "yes"}},
      {"admission_unit", FeatureKind::kCategorical, {"unitA", "unitB", "unitC"}},
  };
  return schema;
}

std::vector<FeatureDist> ward_admission(double p_transfer, double p_male, double age_mean,
                                        std::vector<double> race, std::vector<double> ethnicity,
                                        double p_stem_cell, std::vector<double> unit) {
  std::vector<FeatureDist> dists(7);
  dists[0].level_probs = {1.0 - p_transfer, p_transfer};
  dists[1].level_probs = {1.0 - p_male, p_male};
  dists[2].mean = age_mean;
  dists[2].std = 11.0;
  dists[3].level_probs = std::move(race);
  dists[4].level_probs = std::move(ethnicity);
  dists[5].level_probs = {1.0 - p_stem_cell, p_stem_cell};
  dists[6].level_probs = std::move(unit);
  return dists;
}

std::vector<std::string> vital_streams() {
  return {"O2 saturation", "heart rate", "respiratory rate", "temperature",
          "systolic blood pressure"};
}

}  // namespace

GeneratorConfig paper_like_preset() {
  GeneratorConfig cfg;
  cfg.stream_names = vital_streams();
  cfg.schema = ward_schema();
  cfg.class_weights = Eigen::Vector4d(0.4, 0.3, 0.2, 0.1);
  cfg.stay = {std::log(60.0), 0.5, 12.0, 240.0};
  cfg.sampling = {4.0, 1.0};

  const std::vector<std::vector<double>> means = {
      {97.5, 70.0, 13.0, 36.7, 115.0},
      {96.5, 82.0, 16.0, 37.0, 125.0},
      {95.0, 90.0, 19.0, 37.3, 133.0},
      {93.0, 100.0, 22.0, 37.7, 142.0},
  };
  const std::vector<std::vector<double>> det_means = {
      {93.5, 92.0, 20.0, 37.9, 101.0},
      {92.0, 104.0, 24.0, 38.3, 104.0},
      {90.0, 112.0, 26.0, 38.6, 98.0},
      {87.5, 122.0, 29.0, 39.0, 92.0},
  };
  const std::vector<double> lengthscales = {6.0, 7.0, 8.0, 9.0};
  const std::vector<double> p_det = {0.04, 0.07, 0.12, 0.22};
  for (int c = 0; c < 4; ++c) {
    ClassConfig cls;
    cls.stable = make_stationary(means[c], {1.0, 5.0, 1.5, 0.4, 6.0}, 0.25,
                                 lengthscales[c], 0.09);
    cls.deteriorating = make_drift(cls.stable, det_means[c], 4, 12.0, 4.0);
    cls.p_deteriorate = p_det[c];
    cfg.classes.push_back(std::move(cls));
  }
  cfg.classes[0].admission = ward_admission(0.10, 0.50, 40.0, {0.5, 0.3, 0.2},
                                            {0.8, 0.2}, 0.02, {0.6, 0.3, 0.1});
  cfg.classes[1].admission = ward_admission(0.20, 0.70, 55.0, {0.4, 0.35, 0.25},
                                            {0.7, 0.3}, 0.08, {0.4, 0.4, 0.2});
  cfg.classes[2].admission = ward_admission(0.35, 0.35, 63.0, {0.35, 0.3, 0.35},
                                            {0.65, 0.35}, 0.25, {0.3, 0.4, 0.3});
  cfg.classes[3].admission = ward_admission(0.50, 0.55, 58.0, {0.3, 0.3, 0.4},
                                            {0.6, 0.4}, 0.60, {0.2, 0.3, 0.5});
  cfg.validate();
  return cfg;
}

GeneratorConfig two_class_preset() {
  GeneratorConfig cfg;
  cfg.stream_names = vital_streams();
  cfg.schema = ward_schema();
  cfg.class_weights = Eigen::Vector2d(0.55, 0.45);
  cfg.stay = {std::log(48.0), 0.4, 24.0, 96.0};
  cfg.sampling = {4.0, 1.0};

  ClassConfig a;
  a.stable = make_stationary({97.5, 72.0, 14.0, 36.8, 118.0},
                             {1.0, 5.0, 1.5, 0.4, 6.0}, 0.25, 6.0, 0.09);
  a.deteriorating = make_drift(a.stable, {91.5, 95.0, 24.0, 38.2, 100.0}, 4, 12.0, 4.0);
  a.p_deteriorate = 0.15;
  a.admission = ward_admission(0.15, 0.80, 45.0, {0.5, 0.3, 0.2}, {0.8, 0.2}, 0.05,
                               {0.6, 0.3, 0.1});
  cfg.classes.push_back(std::move(a));

  ClassConfig b;
  b.stable = make_stationary({94.0, 92.0, 20.0, 37.4, 139.0},
                             {1.3, 6.0, 2.0, 0.5, 7.0}, 0.35, 9.0, 0.09);
  b.deteriorating = make_drift(b.stable, {88.0, 115.0, 28.0, 36.2, 90.0}, 4, 12.0, 4.0);
  b.p_deteriorate = 0.15;
  b.admission = ward_admission(0.55, 0.25, 67.0, {0.3, 0.3, 0.4}, {0.6, 0.4}, 0.45,
                               {0.2, 0.4, 0.4});
  cfg.classes.push_back(std::move(b));
  cfg.validate();
  return cfg;
}

GeneratorConfig preset_by_name(const std::string& name) {
  if (name == "paper-like") return paper_like_preset();
  if (name == "two-class") return two_class_preset();
  throw std::invalid_argument("unknown preset '" + name +
                              "' (available: paper-like, two-class)");
}

}  // namespace riskmix
