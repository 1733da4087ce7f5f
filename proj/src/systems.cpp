#include "feat/systems.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace feat {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Eigen::Index dimension_of(const EnergySystem::Params& p) {
  return std::visit(Overloaded{
                        [](const GaussianParams& g) { return g.mean.size(); },
                        [](const GmmParams& g) { return g.means.rows(); },
                        [](const DoubleWellParams& g) { return static_cast<Eigen::Index>(g.dim); },
                        [](const LjClusterParams& g) { return static_cast<Eigen::Index>(3 * g.particles); },
                        [](const Phi4Params& g) { return static_cast<Eigen::Index>(g.side) * g.side; },
                    },
                    p);
}

// Log of each mixture component's weighted density at x.
Vector gmm_component_logs(const GmmParams& g, const VectorRef& x) {
  const Eigen::Index k = g.means.cols();
  const double d = static_cast<double>(g.means.rows());
  const double log_w = -std::log(static_cast<double>(k));
  Vector out(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const double s2 = g.stds(c) * g.stds(c);
    out(c) = log_w - 0.5 * d * std::log(2.0 * std::numbers::pi * s2) -
             (x - g.means.col(c)).squaredNorm() / (2.0 * s2);
  }
  return out;
}

}  // namespace

EnergySystem::EnergySystem(Params params, std::optional<Umbrella> umbrella)
    : params_(std::move(params)), umbrella_(umbrella), dim_(dimension_of(params_)) {
  if (dim_ <= 0) throw ConfigError("energy system dimension must be positive");
  std::visit(Overloaded{
                 [](const GaussianParams& g) {
                   require_dim(g.variance.size(), g.mean.size(), "gaussian variance");
                   if (!(g.variance.array() > 0).all()) throw ConfigError("gaussian variances must be > 0");
                 },
                 [](const GmmParams& g) {
                   require_dim(g.stds.size(), g.means.cols(), "gmm stds");
                   if (g.means.cols() == 0) throw ConfigError("gmm needs at least one component");
                   if (!(g.stds.array() > 0).all()) throw ConfigError("gmm stds must be > 0");
                 },
                 [](const DoubleWellParams& g) {
                   if (g.barrier <= 0) throw ConfigError("double-well barrier must be > 0");
                 },
                 [](const LjClusterParams& g) {
                   if (g.particles < 1 || g.epsilon < 0 || g.sigma <= 0 || g.trap < 0) {
                     throw ConfigError("invalid lj-cluster parameters");
                   }
                 },
                 [](const Phi4Params& g) {
                   if (g.side < 2) throw ConfigError("phi4 lattice side must be >= 2");
                 },
             },
             params_);
}

EnergySystem EnergySystem::gaussian(Vector mean, Vector variance) {
  return EnergySystem(GaussianParams{std::move(mean), std::move(variance)});
}

EnergySystem EnergySystem::standard_gaussian(int dim, double std) {
  return gaussian(Vector::Zero(dim), Vector::Constant(dim, std * std));
}

EnergySystem EnergySystem::gmm(int dim, int components, double std, std::uint64_t seed) {
  if (dim <= 0 || components <= 0) throw ConfigError("gmm needs positive dim and component count");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  GmmParams g;
  g.means.resize(dim, components);
  for (int c = 0; c < components; ++c) {
    for (int i = 0; i < dim; ++i) g.means(i, c) = uni(gen);
  }
  g.stds = Vector::Constant(components, std);
  g.seed = seed;
  return EnergySystem(std::move(g));
}

EnergySystem EnergySystem::double_well(DoubleWellParams p, std::optional<Umbrella> umbrella) {
  return EnergySystem(p, umbrella);
}

EnergySystem EnergySystem::lj_cluster(LjClusterParams p) { return EnergySystem(p); }

EnergySystem EnergySystem::phi4(Phi4Params p, std::optional<Umbrella> umbrella) {
  return EnergySystem(p, umbrella);
}

std::string EnergySystem::kind() const {
  return std::visit(Overloaded{
                        [](const GaussianParams&) { return std::string("gaussian"); },
                        [](const GmmParams&) { return std::string("gmm"); },
                        [](const DoubleWellParams&) { return std::string("doublewell"); },
                        [](const LjClusterParams&) { return std::string("lj-cluster"); },
                        [](const Phi4Params&) { return std::string("phi4"); },
                    },
                    params_);
}

double EnergySystem::energy(const VectorRef& x) const {
  require_dim(x.size(), dim_, "energy");
  double u = base_energy(x);
  if (umbrella_) {
    const double dev = x.mean() - umbrella_->center;
    u += 0.5 * umbrella_->strength * dev * dev;
  }
  return u;
}

void EnergySystem::energy_grad(const VectorRef& x, Eigen::Ref<Vector> grad) const {
  require_dim(x.size(), dim_, "energy_grad");
  require_dim(grad.size(), dim_, "energy_grad output");
  base_grad(x, grad);
  if (umbrella_) {
    const double dev = x.mean() - umbrella_->center;
    grad.array() += umbrella_->strength * dev / static_cast<double>(dim_);
  }
}

double EnergySystem::base_energy(const VectorRef& x) const {
  return std::visit(
      Overloaded{
          [&](const GaussianParams& g) {
            return 0.5 * ((x - g.mean).array().square() / g.variance.array()).sum();
          },
          [&](const GmmParams& g) {
            const Vector logs = gmm_component_logs(g, x);
            const double top = logs.maxCoeff();
            return -(top + std::log((logs.array() - top).exp().sum()));
          },
          [&](const DoubleWellParams& g) {
            const double q = x(0) * x(0) - 1.0;
            return g.barrier * q * q + g.tilt * x(0) + 0.5 * x.tail(x.size() - 1).squaredNorm();
          },
          [&](const LjClusterParams& g) {
            const int n = g.particles;
            double u = 0.0;
            if (g.pair_terms) {
              for (int i = 0; i < n; ++i) {
                for (int j = i + 1; j < n; ++j) {
                  const double r2 = (x.segment<3>(3 * i) - x.segment<3>(3 * j)).squaredNorm();
                  const double s6 = std::pow(g.sigma * g.sigma / r2, 3);
                  u += 2.0 * 4.0 * g.epsilon * (s6 * s6 - s6);
                }
              }
            }
            Eigen::Vector3d center = Eigen::Vector3d::Zero();
            for (int i = 0; i < n; ++i) center += x.segment<3>(3 * i);
            center /= n;
            double trap = 0.0;
            for (int i = 0; i < n; ++i) trap += (x.segment<3>(3 * i) - center).squaredNorm();
            return u + 0.5 * g.trap * trap;
          },
          [&](const Phi4Params& g) {
            const int l = g.side;
            double u = 0.0;
            for (int i = 0; i < l; ++i) {
              for (int j = 0; j < l; ++j) {
                const double p = x(i * l + j);
                const double hop = x(((i + 1) % l) * l + j) + x(i * l + (j + 1) % l);
                const double p2 = p * p;
                u += -2.0 * p * hop + (4.0 + g.mass2) * p2 + g.coupling * p2 * p2;
              }
            }
            return u;
          },
      },
      params_);
}

void EnergySystem::base_grad(const VectorRef& x, Eigen::Ref<Vector> grad) const {
  std::visit(
      Overloaded{
          [&](const GaussianParams& g) {
            grad = ((x - g.mean).array() / g.variance.array()).matrix();
          },
          [&](const GmmParams& g) {
            const Vector logs = gmm_component_logs(g, x);
            const double top = logs.maxCoeff();
            Vector resp = (logs.array() - top).exp().matrix();
            resp /= resp.sum();
            grad.setZero();
            for (Eigen::Index c = 0; c < g.means.cols(); ++c) {
              grad += resp(c) * (x - g.means.col(c)) / (g.stds(c) * g.stds(c));
            }
          },
          [&](const DoubleWellParams& g) {
            grad = x;
            grad(0) = 4.0 * g.barrier * x(0) * (x(0) * x(0) - 1.0) + g.tilt;
          },
          [&](const LjClusterParams& g) {
            const int n = g.particles;
            grad.setZero();
            if (g.pair_terms) {
              for (int i = 0; i < n; ++i) {
                for (int j = i + 1; j < n; ++j) {
                  const Eigen::Vector3d diff = x.segment<3>(3 * i) - x.segment<3>(3 * j);
                  const double r2 = diff.squaredNorm();
                  const double s6 = std::pow(g.sigma * g.sigma / r2, 3);
                  // d/dr2 of 8 eps (s^12/r^12 - s^6/r^6)
                  const double dudr2 = 8.0 * g.epsilon * (-6.0 * s6 * s6 + 3.0 * s6) / r2;
                  const Eigen::Vector3d f = 2.0 * dudr2 * diff;
                  grad.segment<3>(3 * i) += f;
                  grad.segment<3>(3 * j) -= f;
                }
              }
            }
            Eigen::Vector3d center = Eigen::Vector3d::Zero();
            for (int i = 0; i < n; ++i) center += x.segment<3>(3 * i);
            center /= n;
            // Centered residuals sum to zero, so the mean's dependence drops out.
            for (int i = 0; i < n; ++i) grad.segment<3>(3 * i) += g.trap * (x.segment<3>(3 * i) - center);
          },
          [&](const Phi4Params& g) {
            const int l = g.side;
            for (int i = 0; i < l; ++i) {
              for (int j = 0; j < l; ++j) {
                const double p = x(i * l + j);
                const double nb = x(((i + 1) % l) * l + j) + x(((i + l - 1) % l) * l + j) +
                                  x(i * l + (j + 1) % l) + x(i * l + (j + l - 1) % l);
                grad(i * l + j) = -2.0 * nb + 2.0 * (4.0 + g.mass2) * p + 4.0 * g.coupling * p * p * p;
              }
            }
          },
      },
      params_);
}

std::optional<double> EnergySystem::log_partition_analytic() const {
  if (umbrella_) return std::nullopt;
  if (const auto* g = std::get_if<GaussianParams>(&params_)) {
    double lz = 0.0;
    for (Eigen::Index i = 0; i < g->variance.size(); ++i) {
      lz += 0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * std::log(g->variance(i));
    }
    return lz;
  }
  if (std::holds_alternative<GmmParams>(params_)) return 0.0;
  return std::nullopt;
}

std::optional<Matrix> EnergySystem::sample_exact(Eigen::Index count, std::uint64_t seed) const {
  if (umbrella_) return std::nullopt;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(dim_, count);
  if (const auto* g = std::get_if<GaussianParams>(&params_)) {
    const Vector sd = g->variance.cwiseSqrt();
    for (Eigen::Index n = 0; n < count; ++n) {
      for (Eigen::Index i = 0; i < dim_; ++i) out(i, n) = g->mean(i) + sd(i) * normal(gen);
    }
    return out;
  }
  if (const auto* g = std::get_if<GmmParams>(&params_)) {
    std::uniform_int_distribution<Eigen::Index> pick(0, g->means.cols() - 1);
    for (Eigen::Index n = 0; n < count; ++n) {
      const Eigen::Index c = pick(gen);
      for (Eigen::Index i = 0; i < dim_; ++i) out(i, n) = g->means(i, c) + g->stds(c) * normal(gen);
    }
    return out;
  }
  return std::nullopt;
}

ScaledEnergy::ScaledEnergy(std::shared_ptr<const EnergyFunction> inner, double scale)
    : inner_(std::move(inner)), scale_(scale) {
  if (!inner_ || !(scale_ > 0)) throw ConfigError("scaled energy needs a system and a positive scale");
}

double ScaledEnergy::energy(const VectorRef& x) const { return inner_->energy(x / scale_); }

void ScaledEnergy::energy_grad(const VectorRef& x, Eigen::Ref<Vector> grad) const {
  inner_->energy_grad(x / scale_, grad);
  grad /= scale_;
}

InterpolatedEnergy::InterpolatedEnergy(const EnergyFunction& a, const EnergyFunction& b, double t)
    : a_(a), b_(b), t_(t) {
  require_dim(b.dim(), a.dim(), "interpolated energy");
  if (!(t >= 0.0 && t <= 1.0)) throw RangeError("interpolation time must lie in [0, 1]");
}

double InterpolatedEnergy::energy(const VectorRef& x) const {
  return (1.0 - t_) * a_.energy(x) + t_ * b_.energy(x);
}

void InterpolatedEnergy::energy_grad(const VectorRef& x, Eigen::Ref<Vector> grad) const {
  Vector gb(dim());
  a_.energy_grad(x, grad);
  b_.energy_grad(x, gb);
  grad = (1.0 - t_) * grad + t_ * gb;
}

InterpolatedValue interpolated_energy(const EnergyFunction& a, const EnergyFunction& b, double t,
                                      const VectorRef& x) {
  InterpolatedEnergy path(a, b, t);
  require_dim(x.size(), a.dim(), "interpolated_energy");
  const double ua = a.energy(x);
  const double ub = b.energy(x);
  InterpolatedValue out;
  out.energy = (1.0 - t) * ua + t * ub;
  out.time_derivative = ub - ua;
  out.gradient = path.gradient(x);
  return out;
}

}  // namespace feat
