#pragma once

#include <functional>
#include <memory>

#include "feat/core.hpp"
#include "feat/mlp.hpp"

namespace feat {

/// Interpolant coefficients: alpha_t = 1 - t, beta_t = t, gamma_t = sqrt(a t (1 - t)).
struct Schedule {
  double noise = 0.05;  // a

  double alpha(double t) const { return 1.0 - t; }
  double alpha_dot(double) const { return -1.0; }
  double beta(double t) const { return t; }
  double beta_dot(double) const { return 1.0; }
  double gamma(double t) const;
  /// Infinite at t in {0, 1} when a > 0.
  double gamma_dot(double t) const;
  /// gamma * gamma_dot = a (1 - 2t) / 2, finite everywhere.
  double gamma_gamma_dot(double t) const { return 0.5 * noise * (1.0 - 2.0 * t); }
};

/// Learned (or analytic) pair of fields driving the controlled dynamics:
/// velocity v_t(x) and score s_t(x) ~ grad U_t(x), plus the diffusion level.
/// Batched calls take one state per column.
class TransportModel {
 public:
  virtual ~TransportModel() = default;

  virtual Eigen::Index dim() const = 0;
  virtual void velocity(const Matrix& x, double t, Matrix& out) const = 0;
  virtual void score(const Matrix& x, double t, Matrix& out) const = 0;
  /// Column j: Jacobian of v_t at x_j applied to tangents_j.
  virtual Matrix velocity_jvp(const Matrix& x, double t, const Matrix& tangents) const = 0;

  /// Per-column times; the default loops over columns.
  virtual void velocity_at(const Matrix& x, const Vector& times, Matrix& out) const;
  virtual void score_at(const Matrix& x, const Vector& times, Matrix& out) const;

  double sigma(double t) const { return sigma_fn_ ? sigma_fn_(t) : sigma_; }
  bool constant_sigma() const { return !sigma_fn_; }
  void set_sigma(double sigma);
  void set_sigma(std::function<double(double)> sigma_fn);

 private:
  double sigma_ = 0.0;
  std::function<double(double)> sigma_fn_;
};

/// Two time-conditioned MLPs.
class NeuralTransport final : public TransportModel {
 public:
  NeuralTransport(Mlp velocity_net, Mlp score_net, Schedule schedule = {});

  /// Fresh networks; `hidden` lists the hidden widths. With zero_output both
  /// networks start identically zero.
  static NeuralTransport initialize(int dim, const std::vector<int>& hidden, ad::Activation act,
                                    std::uint64_t seed, Schedule schedule = {}, bool zero_output = false);

  Eigen::Index dim() const override { return dim_; }
  void velocity(const Matrix& x, double t, Matrix& out) const override;
  void score(const Matrix& x, double t, Matrix& out) const override;
  Matrix velocity_jvp(const Matrix& x, double t, const Matrix& tangents) const override;
  void velocity_at(const Matrix& x, const Vector& times, Matrix& out) const override;
  void score_at(const Matrix& x, const Vector& times, Matrix& out) const override;

  Mlp& velocity_net() { return velocity_net_; }
  Mlp& score_net() { return score_net_; }
  const Mlp& velocity_net() const { return velocity_net_; }
  const Mlp& score_net() const { return score_net_; }
  const Schedule& schedule() const { return schedule_; }

 private:
  Mlp velocity_net_;
  Mlp score_net_;
  Schedule schedule_;
  Eigen::Index dim_;
};

/// Fields given as callables on a single state; used for closed-form flows.
class FunctionTransport final : public TransportModel {
 public:
  using Field = std::function<Vector(const Vector& x, double t)>;
  using Jvp = std::function<Vector(const Vector& x, double t, const Vector& tangent)>;

  FunctionTransport(Eigen::Index dim, Field velocity, Field score, Jvp velocity_jvp = {});

  Eigen::Index dim() const override { return dim_; }
  void velocity(const Matrix& x, double t, Matrix& out) const override;
  void score(const Matrix& x, double t, Matrix& out) const override;
  /// Falls back to central differences (step 1e-6) without an explicit Jvp.
  Matrix velocity_jvp(const Matrix& x, double t, const Matrix& tangents) const override;

 private:
  Eigen::Index dim_;
  Field velocity_;
  Field score_;
  Jvp jvp_;
};

/// v = 0 and s = 0 everywhere.
std::unique_ptr<FunctionTransport> make_zero_transport(Eigen::Index dim);

}  // namespace feat
