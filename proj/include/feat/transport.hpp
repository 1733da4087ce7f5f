#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "feat/core.hpp"
#include "feat/model.hpp"
#include "feat/systems.hpp"

namespace feat {

/// Knots t_0 = 0 <= ... <= t_M = 1. Zero-length steps are tolerated and
/// contribute nothing to a path or its work.
struct TimeGrid {
  Vector knots;

  static TimeGrid uniform(int steps);
  int steps() const { return static_cast<int>(knots.size()) - 1; }
  double dt(int i) const { return knots(i + 1) - knots(i); }
  void validate() const;
};

enum class Direction { kForward, kBackward };

std::string_view direction_name(Direction d);
Direction parse_direction(std::string_view name);

/// log N(x_next; x_curr + sign v dt - sigma^2 s dt, 2 sigma^2 dt I) with v, s,
/// sigma taken at (x_curr, t). sign = +1 is the forward kernel, -1 the backward one.
double step_kernel_logpdf(const VectorRef& x_next, const VectorRef& x_curr, int drift_sign,
                          const TransportModel& model, double t, double dt);

/// Same density with the drift fields supplied directly.
double gaussian_kernel_logpdf(const VectorRef& x_next, const VectorRef& mean, double variance);

struct PathRecord {
  Direction direction = Direction::kForward;
  Matrix states;  // d x (M + 1), column i is X_{t_i}
  double work = 0.0;
  bool valid = true;
  std::uint64_t seed = 0;
};

/// Euler-Maruyama path. Forward starts at t_0, backward at t_M; with sigma = 0
/// this is the explicit Euler flow of v. Non-finite states mark the path invalid.
PathRecord simulate_path(const TransportModel& model, const TimeGrid& grid, Direction direction,
                         const VectorRef& x_init, std::uint64_t seed);

/// U_b(X_1) - U_a(X_0) + sum_i [log N+(X_i | X_{i-1}) - log N-(X_{i-1} | X_i)].
double work_fbrnd(const PathRecord& path, const EnergyFunction& sys_a, const EnergyFunction& sys_b,
                  const TransportModel& model, const TimeGrid& grid);

struct DivergenceOptions {
  int exact_max_dim = 32;  // exact trace up to this dimension, Hutchinson above
  int probes = 1;          // Rademacher probes per evaluation
};

/// Trace of the velocity Jacobian at each column of x.
Vector velocity_divergence(const TransportModel& model, const Matrix& x, double t,
                           const DivergenceOptions& opt, std::mt19937_64* gen = nullptr);

/// U_b(X_1) - U_a(X_0) - sum_i div v(X_i, t_i) dt_i along an Euler flow path
/// (left-endpoint quadrature; backward paths use the right endpoint t_i).
double work_ode(const PathRecord& path, const EnergyFunction& sys_a, const EnergyFunction& sys_b,
                const TransportModel& model, const TimeGrid& grid, const DivergenceOptions& opt = {});

/// Integrals accumulated along an RK4 solve of dX = v dt.
struct FlowIntegrals {
  Vector x1;
  double divergence = 0.0;  // int div v dt
  double escort = 0.0;      // int (grad U_t . v + d_t U_t) dt, U_t linear in t
};

/// RK4 on the augmented system (X, int div v, int dU_t/dt). Divergence is exact.
FlowIntegrals integrate_flow_rk4(const TransportModel& model, const EnergyFunction& sys_a,
                                 const EnergyFunction& sys_b, const VectorRef& x0, const TimeGrid& grid);

struct EnsembleOptions {
  int block = 256;  // paths evaluated together
  int threads = 1;
  DivergenceOptions divergence;
};

struct EnsembleResult {
  std::vector<double> works;
  std::vector<char> valid;
};

/// Works for many paths started at the columns of `starts`. Path n draws its
/// noise from derive_seed(master_seed, "pathing", n) (the backward direction uses
/// an offset index), so results do not depend on block size or thread count.
EnsembleResult simulate_works(const TransportModel& model, const TimeGrid& grid, Direction direction,
                              const Matrix& starts, const EnergyFunction& sys_a, const EnergyFunction& sys_b,
                              std::uint64_t master_seed, const EnsembleOptions& opt = {});

std::uint64_t path_seed(std::uint64_t master_seed, Direction direction, std::uint64_t index);

/// One diagonal Gaussian mixture endpoint: uniform or explicit weights.
struct MixtureSpec {
  Matrix means;      // d x K
  Matrix variances;  // d x K
  Vector weights;    // K, sums to 1
};

MixtureSpec mixture_from_system(const EnergySystem& sys);

/// Exact velocity and score of the interpolant between two diagonal Gaussian
/// mixtures under the independent coupling.
class AnalyticMixtureTransport final : public TransportModel {
 public:
  AnalyticMixtureTransport(MixtureSpec a, MixtureSpec b, Schedule schedule = {});

  Eigen::Index dim() const override { return dim_; }
  void velocity(const Matrix& x, double t, Matrix& out) const override;
  void score(const Matrix& x, double t, Matrix& out) const override;
  Matrix velocity_jvp(const Matrix& x, double t, const Matrix& tangents) const override;

  /// Marginal mean and diagonal variance of I_t (single-component case only).
  std::pair<Vector, Vector> gaussian_marginal(double t) const;

 private:
  struct Component {
    Vector mean_a, mean_b, var_a, var_b;
    double log_weight;
  };
  void evaluate(const VectorRef& x, double t, Vector* vel, Vector* score, const Vector* tangent,
                Vector* jvp) const;

  std::vector<Component> comps_;
  Schedule schedule_;
  Eigen::Index dim_;
};

/// Oracle for two diagonal Gaussians; throws ConfigError("unsupported") otherwise.
AnalyticMixtureTransport analytic_gaussian_transport(const EnergySystem& a, const EnergySystem& b,
                                                     Schedule schedule = {});

/// Per-direction works plus provenance. Invalid paths are counted, not stored.
struct WorkLedger {
  std::vector<double> forward;
  std::vector<double> backward;
  long dropped_forward = 0;
  long dropped_backward = 0;
  std::map<std::string, std::string> provenance;

  double drop_rate() const;
  bool drop_flag() const { return drop_rate() > 1e-3; }
  void add(Direction d, const EnsembleResult& r);
};

std::string format_works(const WorkLedger& ledger);
/// Throws ParseError naming the line on malformed rows.
WorkLedger parse_works(const std::string& text);
void write_works(const std::filesystem::path& path, const WorkLedger& ledger);
/// Also loads the provenance sidecar `<path>.meta` when present.
WorkLedger read_works(const std::filesystem::path& path);

}  // namespace feat
