#pragma once

#include <string>
#include <vector>

#include "riskmix/cohort.hpp"
#include "riskmix/risk.hpp"
#include "riskmix/synth.hpp"

namespace riskmix {

struct LoadReport {
  std::vector<std::string> dropped_patients;  // declared but with no measurements
  std::vector<std::string> warnings;
};

// measurements: delimited text with header patient_id,stream,time_hours,value.
// patients: JSON document declaring stream names, the admission schema and
// one record per patient. Patients without measurements are dropped and
// recorded in the report.
Cohort load_cohort(const std::string& measurements_path, const std::string& patients_path,
                   LoadReport* report = nullptr);
void save_cohort(const Cohort& cohort, const std::string& measurements_path,
                 const std::string& patients_path);

void save_latent_table(const std::vector<LatentRecord>& latents, const std::string& path);
std::vector<LatentRecord> load_latent_table(const std::string& path);

GeneratorConfig load_generator_config(const std::string& path);
void save_generator_config(const GeneratorConfig& cfg, const std::string& path);

// Self-contained single-patient document: id, admission values and a
// measurements array. Stream names and the admission schema come from the
// caller (normally the model bundle).
PatientRecord load_single_patient(const std::string& path,
                                  const std::vector<std::string>& stream_names,
                                  const AdmissionSchema& schema);
void save_single_patient(const PatientRecord& patient,
                         const std::vector<std::string>& stream_names,
                         const std::string& path);

void write_risk_trace(const RiskTrace& trace, const std::string& path);
// Long-format series file (series,time_hours,value) for external plotting.
void write_risk_trace_plot_data(const RiskTrace& trace, const std::string& path);
void write_whatif_traces(const RiskTrace& original, const RiskTrace& overridden,
                         const std::string& path);

}  // namespace riskmix
