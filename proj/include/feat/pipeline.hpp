#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "feat/config.hpp"
#include "feat/estimators.hpp"
#include "feat/transport.hpp"

namespace feat {

// Artifact names inside the output directory.
namespace artifact {
inline constexpr const char* kSamplesA = "samples_a.txt";
inline constexpr const char* kSamplesB = "samples_b.txt";
inline constexpr const char* kVelocity = "velocity.model";
inline constexpr const char* kScore = "score.model";
inline constexpr const char* kLosses = "losses.csv";
inline constexpr const char* kWorks = "works.csv";
inline constexpr const char* kReport = "report.csv";
inline constexpr const char* kSummary = "report.txt";
inline constexpr const char* kHistogram = "histogram.csv";
}  // namespace artifact

struct StageOutcome {
  std::string summary;  // printed by the CLI
  bool ok = true;       // false maps to exit code 3 (gradcheck failures)
};

StageOutcome run_sample(const ExperimentConfig& cfg);
StageOutcome run_train(const ExperimentConfig& cfg);
StageOutcome run_work(const ExperimentConfig& cfg);
StageOutcome run_estimate(const ExperimentConfig& cfg);
StageOutcome run_reweight(const ExperimentConfig& cfg);
StageOutcome run_gradcheck(const ExperimentConfig& cfg);
/// sample, work and estimate with the analytic transport in place of training.
StageOutcome run_oracle(ExperimentConfig cfg);

/// Endpoint samples for one system following the sampler block.
SampleSet draw_endpoint_samples(const EnergySystem& sys, const SystemSpec& spec, const SamplerSpec& sampler,
                                std::uint64_t seed);

/// The transport selected by transport.model (checkpoints are read for "learned").
std::unique_ptr<TransportModel> load_transport(const ExperimentConfig& cfg, const EnergySystem& a,
                                               const EnergySystem& b);

/// Forward and backward work ensembles started from the given sample sets.
WorkLedger simulate_ledger(const TransportModel& model, const EnergySystem& a, const EnergySystem& b,
                           const SampleSet& set_a, const SampleSet& set_b, const TransportSpec& spec,
                           std::uint64_t seed);

/// Reference dF = log Z_a - log Z_b when both endpoints have closed forms.
std::optional<double> reference_delta_f(const EnergySystem& a, const EnergySystem& b);

/// Rows of a report CSV.
EstimateReport parse_report_csv(const std::string& text);

}  // namespace feat
