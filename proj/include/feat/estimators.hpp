#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "feat/core.hpp"
#include "feat/sampling.hpp"
#include "feat/systems.hpp"
#include "feat/transport.hpp"

namespace feat {

/// log of the Fermi function 1 / (1 + e^z), stable for any finite z.
double log_fermi(double z);

/// log(1/N sum exp(x)) with the max shift.
double log_mean_exp(const std::vector<double>& x);
double mean(const std::vector<double>& x);

/// -log mean exp(-(U_b - U_a)) over samples of mu_a.
double fep_estimate(const std::vector<double>& energies_a, const std::vector<double>& energies_b);

struct FixedPoint {
  double delta_f = 0.0;
  double constant = 0.0;  // C used in the final update
  int iterations = 0;
  bool converged = true;
};

/// dF <- log mean_m phi(-w_bwd + C) - log mean_n phi(w_fwd - C) + C with C the
/// previous value, from c0, until |change| < tol or max_iter updates.
FixedPoint fermi_fixed_point(const std::vector<double>& forward, const std::vector<double>& backward, double c0,
                             double tol = 1e-10, int max_iter = 1000);

/// One update of the fixed-point map at constant c.
double fermi_update(const std::vector<double>& forward, const std::vector<double>& backward, double c);

/// Equilibrium BAR. forward_du = U_b - U_a on mu_a samples, backward_du = U_b - U_a
/// on mu_b samples; starts from the FEP estimate.
FixedPoint bar_equilibrium(const std::vector<double>& forward_du, const std::vector<double>& backward_du);

struct IwaeValues {
  std::optional<double> forward;   // -log mean exp(-W_fwd), an upper bound in expectation
  std::optional<double> backward;  // log mean exp(W_bwd), a lower bound in expectation
};

IwaeValues iwae_estimates(const WorkLedger& ledger);

struct Bounds {
  std::optional<double> elbo;  // mean backward work
  std::optional<double> eubo;  // mean forward work
};

Bounds elbo_eubo(const WorkLedger& ledger);

/// Needs at least two works per direction; starts from the mean of the IWAE values.
FixedPoint min_variance_estimate(const WorkLedger& ledger);

/// Nodes and weights of n-point Gauss-Legendre quadrature on [0, 1].
std::pair<Vector, Vector> gauss_legendre_unit(int n);

struct TiKnot {
  double t = 0.0;
  double mean_du = 0.0;
  double acceptance = 0.0;
};

struct TiResult {
  double delta_f = 0.0;
  std::vector<TiKnot> knots;
};

/// Gauss-Legendre quadrature of E_t[U_b - U_a] with MALA at every knot of the
/// linear energy path. Knot k uses seed derive_seed(cfg.seed, "ti", k).
TiResult ti_quadrature(const EnergyFunction& sys_a, const EnergyFunction& sys_b, const MalaConfig& cfg,
                       int knots, const VectorRef& x0);

struct Histogram {
  Vector centers;
  Vector counts;
};

/// Counts of values in `bins` equal-width bins over [lo, hi]; values outside are dropped.
Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins);

/// P(xi) proportional to (n_a + n_b) / (N_a exp(F_a - k1/2 (xi - mu1)^2) + N_b exp(F_b - k2/2 (xi - mu2)^2)),
/// normalized to sum 1; evaluated in log space.
Vector umbrella_reweight(const Histogram& hist_a, const Histogram& hist_b, double f_a, double f_b,
                         const Umbrella& umb_a, const Umbrella& umb_b);

/// sum_xi |P(xi) - P(-xi)| / 2 over a binning symmetric about zero.
double symmetry_metric(const Vector& p);

/// Std of `estimator` over seeded resamples with replacement.
double bootstrap_std(const std::vector<double>& values, int resamples, std::uint64_t seed,
                     const std::function<double(const std::vector<double>&)>& estimator);

/// Two-sample variant: both arrays are resampled independently.
double bootstrap_std2(const std::vector<double>& a, const std::vector<double>& b, int resamples,
                      std::uint64_t seed,
                      const std::function<double(const std::vector<double>&, const std::vector<double>&)>& estimator);

struct EstimateRow {
  std::string estimator;
  double value = 0.0;
  double std = 0.0;
  int iters = 0;
  std::string flags;
};

struct EstimateReport {
  std::vector<EstimateRow> rows;
  std::size_t n_forward = 0;
  std::size_t n_backward = 0;

  const EstimateRow* find(const std::string& name) const;
};

/// Applies every estimator the ledger supports, with bootstrap errors.
EstimateReport estimate_from_ledger(const WorkLedger& ledger, int resamples, std::uint64_t seed);

/// CSV `estimator,value,std,iters,flags`.
std::string format_report_csv(const EstimateReport& report);
std::string format_report_summary(const EstimateReport& report);

}  // namespace feat
