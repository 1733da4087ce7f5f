#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "feat/core.hpp"
#include "feat/systems.hpp"

namespace feat {

/// Equilibrium samples of one endpoint, one column per sample.
struct SampleSet {
  Matrix samples;               // d x n
  std::optional<Matrix> grads;  // d x n, energy gradients at the samples
  std::string system;           // provenance: system kind tag
  std::uint64_t seed = 0;
  long chain_length = 0;

  Eigen::Index dim() const { return samples.rows(); }
  Eigen::Index size() const { return samples.cols(); }
  void validate() const;
};

struct MalaConfig {
  long steps = 100000;
  double burn_in_fraction = 0.2;
  double step_size = 1e-2;
  double target_acceptance = 0.6;
  double adaptation_gain = 0.1;
  int adaptation_window = 100;
  int thin = 1;
  std::uint64_t seed = 0;
};

struct MalaRun {
  SampleSet set;
  double acceptance_rate = 0.0;  // over the kept (post-burn-in) window
  double step_size = 0.0;        // frozen value used after burn-in
};

/// log acceptance probability of moving x -> proposal (capped at 0).
double mala_log_acceptance(const EnergyFunction& sys, const VectorRef& x, const VectorRef& proposal,
                           double step_size);

/// Metropolis-adjusted Langevin chain. The step size adapts multiplicatively per
/// window during burn-in only and is frozen afterwards; kept samples carry gradients.
MalaRun mala_chain(const EnergyFunction& sys, const MalaConfig& cfg, const VectorRef& x0);

/// Direct draws for systems with closed-form samplers, gradients attached.
SampleSet exact_samples(const EnergySystem& sys, Eigen::Index count, std::uint64_t seed);

/// Attaches energy gradients to every sample.
void attach_gradients(const EnergyFunction& sys, SampleSet& set);

/// Cubic lattice with spacing 1.1 sigma plus small jitter, for LJ chain starts.
Vector lj_initial_configuration(const LjClusterParams& p, std::uint64_t seed);

std::string format_samples(const SampleSet& set);
SampleSet parse_samples(const std::string& text);
void write_samples(const std::filesystem::path& path, const SampleSet& set);
SampleSet read_samples(const std::filesystem::path& path);

}  // namespace feat
