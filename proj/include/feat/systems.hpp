#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <variant>

#include "feat/core.hpp"

namespace feat {

/// Energy U(x) on R^d with analytic gradient (k_B T = 1).
class EnergyFunction {
 public:
  virtual ~EnergyFunction() = default;
  virtual Eigen::Index dim() const = 0;
  virtual double energy(const VectorRef& x) const = 0;
  virtual void energy_grad(const VectorRef& x, Eigen::Ref<Vector> grad) const = 0;

  Vector gradient(const VectorRef& x) const {
    Vector g(dim());
    energy_grad(x, g);
    return g;
  }
};

/// Diagonal Gaussian, U = sum (x_i - mu_i)^2 / (2 var_i); the constant is dropped.
struct GaussianParams {
  Vector mean;
  Vector variance;
};

/// Uniform-weight isotropic mixture; U = -log(mixture density), so F = 0.
struct GmmParams {
  Matrix means;  // d x K
  Vector stds;   // K
  std::uint64_t seed = 0;
};

/// U = barrier (x_0^2 - 1)^2 + tilt x_0 + 1/2 sum_{i>0} x_i^2.
struct DoubleWellParams {
  int dim = 1;
  double barrier = 1.0;
  double tilt = 0.0;
};

/// U = sum_{i != j} 4 eps [(s/r)^12 - (s/r)^6] + trap/2 sum_n |X_n - mean(X)|^2
/// with X_n in R^3, d = 3 N_p. Ordered pairs are summed, so each pair counts twice.
struct LjClusterParams {
  int particles = 2;
  double epsilon = 1.0;
  double sigma = 1.0;
  double trap = 1.0;
  bool pair_terms = true;
};

/// L x L periodic lattice, U = sum_x (-2 sum_{mu in +e1,+e2} phi_x phi_{x+mu}
///   + (4 + m^2) phi_x^2 + lambda phi_x^4); each bond appears once.
struct Phi4Params {
  int side = 4;
  double mass2 = -1.0;
  double coupling = 0.8;
};

/// Harmonic restraint on the mean coordinate: (k/2)(mean(x) - center)^2.
struct Umbrella {
  double strength = 0.0;
  double center = 0.0;
};

class EnergySystem final : public EnergyFunction {
 public:
  using Params = std::variant<GaussianParams, GmmParams, DoubleWellParams, LjClusterParams, Phi4Params>;

  EnergySystem(Params params, std::optional<Umbrella> umbrella = std::nullopt);

  static EnergySystem gaussian(Vector mean, Vector variance);
  static EnergySystem standard_gaussian(int dim, double std = 1.0);
  /// Means uniform on [-2, 2]^d drawn from `seed`, shared std for every component.
  static EnergySystem gmm(int dim, int components, double std, std::uint64_t seed);
  static EnergySystem double_well(DoubleWellParams p, std::optional<Umbrella> umbrella = std::nullopt);
  static EnergySystem lj_cluster(LjClusterParams p);
  static EnergySystem phi4(Phi4Params p, std::optional<Umbrella> umbrella = std::nullopt);

  Eigen::Index dim() const override { return dim_; }
  double energy(const VectorRef& x) const override;
  void energy_grad(const VectorRef& x, Eigen::Ref<Vector> grad) const override;

  std::string kind() const;
  const Params& params() const { return params_; }
  const std::optional<Umbrella>& umbrella() const { return umbrella_; }

  /// log Z for kinds with a closed form (diagonal Gaussian, normalized GMM),
  /// nullopt otherwise (including any umbrella-biased system).
  std::optional<double> log_partition_analytic() const;

  /// Exact draws for kinds that admit them (gaussian, gmm); nullopt otherwise.
  std::optional<Matrix> sample_exact(Eigen::Index count, std::uint64_t seed) const;

 private:
  double base_energy(const VectorRef& x) const;
  void base_grad(const VectorRef& x, Eigen::Ref<Vector> grad) const;

  Params params_;
  std::optional<Umbrella> umbrella_;
  Eigen::Index dim_ = 0;
};

/// U(x / scale): rescales inputs and the score, shifts log Z by d log(scale).
class ScaledEnergy final : public EnergyFunction {
 public:
  ScaledEnergy(std::shared_ptr<const EnergyFunction> inner, double scale);
  Eigen::Index dim() const override { return inner_->dim(); }
  double energy(const VectorRef& x) const override;
  void energy_grad(const VectorRef& x, Eigen::Ref<Vector> grad) const override;

 private:
  std::shared_ptr<const EnergyFunction> inner_;
  double scale_;
};

struct InterpolatedValue {
  double energy = 0.0;
  double time_derivative = 0.0;
  Vector gradient;
};

/// Linear energy path U_t = (1 - t) U_a + t U_b. Both endpoints must outlive it.
class InterpolatedEnergy final : public EnergyFunction {
 public:
  InterpolatedEnergy(const EnergyFunction& a, const EnergyFunction& b, double t);
  Eigen::Index dim() const override { return a_.dim(); }
  double energy(const VectorRef& x) const override;
  void energy_grad(const VectorRef& x, Eigen::Ref<Vector> grad) const override;
  double time() const { return t_; }

 private:
  const EnergyFunction& a_;
  const EnergyFunction& b_;
  double t_;
};

InterpolatedValue interpolated_energy(const EnergyFunction& a, const EnergyFunction& b, double t,
                                      const VectorRef& x);

/// Stable softplus, used for the mixture std defaults.
double softplus(double x);

}  // namespace feat
