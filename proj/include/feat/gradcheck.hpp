#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feat/systems.hpp"

namespace feat {

struct GradCheckRow {
  std::string name;
  int trials = 0;
  double max_rel_error = 0.0;  // worst |g_ad - g_fd| / max(|g_ad|, |g_fd|) over trials (vector norms)
  double tolerance = 0.0;
  bool pass() const { return max_rel_error <= tolerance; }
};

/// Reverse-mode gradients of every tape primitive (and a 2-layer MLP loss)
/// against central differences with step 1e-5.
std::vector<GradCheckRow> check_autodiff(int trials, std::uint64_t seed, double tolerance = 1e-5);

/// Analytic energy gradient against central differences at random points drawn
/// around `center` with the given spread; points with non-finite energy are redrawn.
GradCheckRow check_energy_gradient(const std::string& name, const EnergyFunction& sys, const VectorRef& center,
                                   double spread, int trials, std::uint64_t seed, double tolerance = 1e-6);

std::string format_gradcheck(const std::vector<GradCheckRow>& rows);

}  // namespace feat
