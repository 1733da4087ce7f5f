#include "feat/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include "feat/io.hpp"

namespace feat {

TimeGrid TimeGrid::uniform(int steps) {
  if (steps < 1) throw ConfigError("time grid needs at least one step");
  TimeGrid g;
  g.knots.resize(steps + 1);
  for (int i = 0; i <= steps; ++i) g.knots(i) = static_cast<double>(i) / steps;
  g.knots(steps) = 1.0;
  return g;
}

void TimeGrid::validate() const {
  if (knots.size() < 2) throw ConfigError("time grid needs at least two knots");
  if (knots(0) != 0.0 || knots(knots.size() - 1) != 1.0) throw ConfigError("time grid must run from 0 to 1");
  for (Eigen::Index i = 1; i < knots.size(); ++i) {
    if (!(knots(i) >= knots(i - 1))) throw ConfigError("time grid knots must be non-decreasing");
  }
}

std::string_view direction_name(Direction d) { return d == Direction::kForward ? "forward" : "backward"; }

Direction parse_direction(std::string_view name) {
  if (name == "forward") return Direction::kForward;
  if (name == "backward") return Direction::kBackward;
  throw ConfigError("unknown direction '" + std::string(name) + "'");
}

double gaussian_kernel_logpdf(const VectorRef& x_next, const VectorRef& mean, double variance) {
  const auto d = static_cast<double>(x_next.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * variance) - (x_next - mean).squaredNorm() / (2.0 * variance);
}

namespace {

void require_sde(double sigma) {
  if (!(sigma > 0.0)) {
    throw ConfigError("transition kernel undefined for sigma = 0; use the ODE work instead", "sigma-zero");
  }
}

Vector column_drift(const TransportModel& model, const VectorRef& x, double t, int sign) {
  Matrix col = x;
  Matrix v, s;
  model.velocity(col, t, v);
  model.score(col, t, s);
  const double sig = model.sigma(t);
  return sign * v.col(0) - sig * sig * s.col(0);
}

}  // namespace

double step_kernel_logpdf(const VectorRef& x_next, const VectorRef& x_curr, int drift_sign,
                          const TransportModel& model, double t, double dt) {
  require_dim(x_next.size(), x_curr.size(), "kernel states");
  const double sig = model.sigma(t);
  require_sde(sig);
  if (!(dt > 0.0)) throw RangeError("kernel step must have dt > 0");
  const Vector mean = x_curr + dt * column_drift(model, x_curr, t, drift_sign);
  return gaussian_kernel_logpdf(x_next, mean, 2.0 * sig * sig * dt);
}

PathRecord simulate_path(const TransportModel& model, const TimeGrid& grid, Direction direction,
                         const VectorRef& x_init, std::uint64_t seed) {
  grid.validate();
  require_dim(x_init.size(), model.dim(), "path start");
  const int m = grid.steps();
  PathRecord rec;
  rec.direction = direction;
  rec.seed = seed;
  rec.states.resize(x_init.size(), m + 1);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector eta(x_init.size());

  const bool forward = direction == Direction::kForward;
  int i = forward ? 0 : m;
  rec.states.col(i) = x_init;
  for (int step = 0; step < m; ++step) {
    const int next = forward ? i + 1 : i - 1;
    const double t = grid.knots(i);
    const double dt = forward ? grid.dt(i) : grid.dt(next);
    const double sig = model.sigma(t);
    if (dt == 0.0) {
      rec.states.col(next) = rec.states.col(i);
    } else {
      const Vector drift = column_drift(model, rec.states.col(i), t, forward ? 1 : -1);
      for (Eigen::Index k = 0; k < eta.size(); ++k) eta(k) = normal(gen);
      rec.states.col(next) = rec.states.col(i) + dt * drift;
      if (sig > 0.0) rec.states.col(next) += std::sqrt(2.0 * dt) * sig * eta;
    }
    if (!rec.states.col(next).allFinite()) {
      rec.valid = false;
      rec.work = std::numeric_limits<double>::quiet_NaN();
      return rec;
    }
    i = next;
  }
  return rec;
}

double work_fbrnd(const PathRecord& path, const EnergyFunction& sys_a, const EnergyFunction& sys_b,
                  const TransportModel& model, const TimeGrid& grid) {
  grid.validate();
  const int m = grid.steps();
  if (path.states.cols() != m + 1) throw ShapeError("path length does not match the grid");
  double w = sys_b.energy(path.states.col(m)) - sys_a.energy(path.states.col(0));
  for (int i = 1; i <= m; ++i) {
    const double dt = grid.dt(i - 1);
    if (dt == 0.0) continue;
    w += step_kernel_logpdf(path.states.col(i), path.states.col(i - 1), +1, model, grid.knots(i - 1), dt);
    w -= step_kernel_logpdf(path.states.col(i - 1), path.states.col(i), -1, model, grid.knots(i), dt);
  }
  return w;
}

namespace {

Vector hutchinson(const TransportModel& model, const Matrix& x, double t, const std::vector<Matrix>& probes) {
  Vector acc = Vector::Zero(x.cols());
  for (const Matrix& u : probes) {
    const Matrix ju = model.velocity_jvp(x, t, u);
    acc += (u.array() * ju.array()).colwise().sum().matrix().transpose();
  }
  return acc / static_cast<double>(probes.size());
}

Vector exact_divergence(const TransportModel& model, const Matrix& x, double t) {
  const Eigen::Index d = x.rows();
  const Eigen::Index n = x.cols();
  Matrix rep(d, n * d);
  Matrix tangents = Matrix::Zero(d, n * d);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < d; ++k) {
      rep.col(j * d + k) = x.col(j);
      tangents(k, j * d + k) = 1.0;
    }
  }
  const Matrix ju = model.velocity_jvp(rep, t, tangents);
  Vector div(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) s += ju(k, j * d + k);
    div(j) = s;
  }
  return div;
}

Matrix rademacher(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
  Matrix u(rows, cols);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = (gen() >> 63) ? 1.0 : -1.0;
  return u;
}

}  // namespace

Vector velocity_divergence(const TransportModel& model, const Matrix& x, double t, const DivergenceOptions& opt,
                           std::mt19937_64* gen) {
  require_dim(x.rows(), model.dim(), "divergence states");
  if (x.rows() <= opt.exact_max_dim) return exact_divergence(model, x, t);
  if (!gen) throw ConfigError("Hutchinson divergence needs a random stream", "divergence-unavailable");
  if (opt.probes < 1) throw ConfigError("Hutchinson divergence needs at least one probe");
  std::vector<Matrix> probes;
  for (int p = 0; p < opt.probes; ++p) probes.push_back(rademacher(x.rows(), x.cols(), *gen));
  return hutchinson(model, x, t, probes);
}

double work_ode(const PathRecord& path, const EnergyFunction& sys_a, const EnergyFunction& sys_b,
                const TransportModel& model, const TimeGrid& grid, const DivergenceOptions& opt) {
  grid.validate();
  const int m = grid.steps();
  if (path.states.cols() != m + 1) throw ShapeError("path length does not match the grid");
  std::mt19937_64 gen(derive_seed(path.seed, "divergence"));
  const bool forward = path.direction == Direction::kForward;
  double div = 0.0;
  for (int i = 0; i < m; ++i) {
    const double dt = grid.dt(i);
    if (dt == 0.0) continue;
    const int at = forward ? i : i + 1;
    const Matrix col = path.states.col(at);
    div += velocity_divergence(model, col, grid.knots(at), opt, &gen)(0) * dt;
  }
  return sys_b.energy(path.states.col(m)) - sys_a.energy(path.states.col(0)) - div;
}

FlowIntegrals integrate_flow_rk4(const TransportModel& model, const EnergyFunction& sys_a,
                                 const EnergyFunction& sys_b, const VectorRef& x0, const TimeGrid& grid) {
  grid.validate();
  require_dim(x0.size(), model.dim(), "flow start");
  // State derivative: (v, div v, grad U_t . v + d_t U_t).
  auto rhs = [&](const Vector& x, double t, Vector& dx, double& ddiv, double& desc) {
    Matrix col = x;
    Matrix v;
    model.velocity(col, t, v);
    dx = v.col(0);
    ddiv = exact_divergence(model, col, t)(0);
    const InterpolatedValue u = interpolated_energy(sys_a, sys_b, t, x);
    desc = u.gradient.dot(dx) + u.time_derivative;
  };
  FlowIntegrals out;
  Vector x = x0;
  Vector k1, k2, k3, k4;
  double d1, d2, d3, d4, e1, e2, e3, e4;
  for (int i = 0; i < grid.steps(); ++i) {
    const double t = grid.knots(i);
    const double h = grid.dt(i);
    if (h == 0.0) continue;
    rhs(x, t, k1, d1, e1);
    rhs(x + 0.5 * h * k1, t + 0.5 * h, k2, d2, e2);
    rhs(x + 0.5 * h * k2, t + 0.5 * h, k3, d3, e3);
    rhs(x + h * k3, t + h, k4, d4, e4);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.divergence += h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
    out.escort += h / 6.0 * (e1 + 2.0 * e2 + 2.0 * e3 + e4);
  }
  out.x1 = x;
  return out;
}

std::uint64_t path_seed(std::uint64_t master_seed, Direction direction, std::uint64_t index) {
  const std::uint64_t offset = direction == Direction::kForward ? 0 : (std::uint64_t{1} << 62);
  return derive_seed(master_seed, seed_label::kPathing, offset + index);
}

namespace {

struct BlockFields {
  Matrix v, s;
};

BlockFields fields_at(const TransportModel& model, const Matrix& x, double t) {
  BlockFields f;
  model.velocity(x, t, f.v);
  model.score(x, t, f.s);
  return f;
}

Vector kernel_block(const Matrix& next, const Matrix& mean, double variance) {
  const auto d = static_cast<double>(next.rows());
  const double norm = -0.5 * d * std::log(2.0 * std::numbers::pi * variance);
  return (norm - (next - mean).colwise().squaredNorm().array() / (2.0 * variance)).matrix().transpose();
}

Vector energies(const EnergyFunction& sys, const Matrix& x) {
  Vector e(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) e(j) = sys.energy(x.col(j));
  return e;
}

// Fused simulation and work accumulation for one block of paths.
void run_block(const TransportModel& model, const TimeGrid& grid, Direction direction, const Matrix& starts,
               const EnergyFunction& sys_a, const EnergyFunction& sys_b, std::vector<std::mt19937_64>& gens,
               bool ode, const DivergenceOptions& dopt, double* works, char* valid) {
  const Eigen::Index d = starts.rows();
  const Eigen::Index n = starts.cols();
  const int m = grid.steps();
  const bool forward = direction == Direction::kForward;
  // One distribution per path: libstdc++ caches the second Box-Muller draw.
  std::vector<std::normal_distribution<double>> normal(n);
  Vector w = Vector::Zero(n);
  std::vector<char> ok(n, 1);

  Matrix x = starts;
  const Vector e_start = forward ? energies(sys_a, x) : energies(sys_b, x);
  int i = forward ? 0 : m;
  BlockFields f;
  if (!ode) f = fields_at(model, x, grid.knots(i));
  Matrix noise(d, n);
  for (int step = 0; step < m; ++step) {
    const int next = forward ? i + 1 : i - 1;
    const double dt = forward ? grid.dt(i) : grid.dt(next);
    const double t = grid.knots(i);
    const double t_next = grid.knots(next);
    if (dt == 0.0) {
      i = next;
      continue;
    }
    if (ode) {
      Matrix v;
      model.velocity(x, t, v);
      Vector div;
      if (d <= dopt.exact_max_dim) {
        div = exact_divergence(model, x, t);
      } else {
        std::vector<Matrix> probes;
        for (int p = 0; p < dopt.probes; ++p) {
          Matrix u(d, n);
          for (Eigen::Index j = 0; j < n; ++j) u.col(j) = rademacher(d, 1, gens[j]);
          probes.push_back(std::move(u));
        }
        div = hutchinson(model, x, t, probes);
      }
      w -= div * dt;
      x += (forward ? dt : -dt) * v;
    } else {
      const double sig = model.sigma(t);
      const double sig_next = model.sigma(t_next);
      const int sign = forward ? 1 : -1;
      const Matrix mean = x + dt * (sign * f.v - sig * sig * f.s);
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = 0; k < d; ++k) noise(k, j) = normal[j](gens[j]);
      }
      const Matrix x_next = mean + std::sqrt(2.0 * dt) * sig * noise;
      const Vector log_here = kernel_block(x_next, mean, 2.0 * sig * sig * dt);
      BlockFields fn = fields_at(model, x_next, t_next);
      const Matrix mean_rev = x_next + dt * (-sign * fn.v - sig_next * sig_next * fn.s);
      const Vector log_back = kernel_block(x, mean_rev, 2.0 * sig_next * sig_next * dt);
      // log N+ - log N-: the forward kernel is the one generated going forward.
      w += forward ? (log_here - log_back).eval() : (log_back - log_here).eval();
      x = x_next;
      f = std::move(fn);
    }
    i = next;
  }
  const Vector e_end = forward ? energies(sys_b, x) : energies(sys_a, x);
  w += forward ? (e_end - e_start).eval() : (e_start - e_end).eval();
  for (Eigen::Index j = 0; j < n; ++j) {
    const bool fin = std::isfinite(w(j)) && x.col(j).allFinite();
    works[j] = fin ? w(j) : std::numeric_limits<double>::quiet_NaN();
    valid[j] = fin ? 1 : 0;
  }
}

}  // namespace

EnsembleResult simulate_works(const TransportModel& model, const TimeGrid& grid, Direction direction,
                              const Matrix& starts, const EnergyFunction& sys_a, const EnergyFunction& sys_b,
                              std::uint64_t master_seed, const EnsembleOptions& opt) {
  grid.validate();
  require_dim(starts.rows(), model.dim(), "path starts");
  require_dim(sys_a.dim(), model.dim(), "system a");
  require_dim(sys_b.dim(), model.dim(), "system b");
  int zero_sigma = 0;
  for (Eigen::Index i = 0; i < grid.knots.size(); ++i) {
    const double s = model.sigma(grid.knots(i));
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("diffusion level must be finite and >= 0");
    zero_sigma += s == 0.0;
  }
  if (zero_sigma != 0 && zero_sigma != grid.knots.size()) {
    throw ConfigError("diffusion level must be either zero everywhere or positive everywhere on the grid");
  }
  const bool ode = zero_sigma != 0;

  const Eigen::Index n = starts.cols();
  EnsembleResult res;
  res.works.assign(n, 0.0);
  res.valid.assign(n, 0);
  const Eigen::Index block = std::max(1, opt.block);
  const Eigen::Index blocks = (n + block - 1) / block;

  auto work_on = [&](Eigen::Index b) {
    const Eigen::Index lo = b * block;
    const Eigen::Index len = std::min(block, n - lo);
    std::vector<std::mt19937_64> gens;
    gens.reserve(len);
    for (Eigen::Index j = 0; j < len; ++j) {
      gens.emplace_back(path_seed(master_seed, direction, static_cast<std::uint64_t>(lo + j)));
    }
    run_block(model, grid, direction, starts.middleCols(lo, len), sys_a, sys_b, gens, ode, opt.divergence,
              res.works.data() + lo, res.valid.data() + lo);
  };

  const int threads = std::max(1, opt.threads);
  if (threads == 1 || blocks <= 1) {
    for (Eigen::Index b = 0; b < blocks; ++b) work_on(b);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int th = 0; th < threads; ++th) {
      pool.emplace_back([&, th] {
        try {
          for (Eigen::Index b = th; b < blocks; b += threads) work_on(b);
        } catch (...) {
          errors[th] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return res;
}

MixtureSpec mixture_from_system(const EnergySystem& sys) {
  if (sys.umbrella()) throw ConfigError("analytic transport needs unbiased endpoints", "unsupported");
  MixtureSpec spec;
  if (const auto* g = std::get_if<GaussianParams>(&sys.params())) {
    spec.means = g->mean;
    spec.variances = g->variance;
    spec.weights = Vector::Ones(1);
    return spec;
  }
  if (const auto* g = std::get_if<GmmParams>(&sys.params())) {
    const Eigen::Index k = g->means.cols();
    spec.means = g->means;
    spec.variances.resize(g->means.rows(), k);
    for (Eigen::Index c = 0; c < k; ++c) spec.variances.col(c).setConstant(g->stds(c) * g->stds(c));
    spec.weights = Vector::Constant(k, 1.0 / static_cast<double>(k));
    return spec;
  }
  throw ConfigError("analytic transport needs gaussian or gmm endpoints, got " + sys.kind(), "unsupported");
}

AnalyticMixtureTransport::AnalyticMixtureTransport(MixtureSpec a, MixtureSpec b, Schedule schedule)
    : schedule_(schedule), dim_(a.means.rows()) {
  require_dim(b.means.rows(), dim_, "mixture endpoints");
  for (const MixtureSpec* s : {&a, &b}) {
    if (s->variances.rows() != s->means.rows() || s->variances.cols() != s->means.cols() ||
        s->weights.size() != s->means.cols()) {
      throw ShapeError("mixture spec shapes disagree");
    }
    if (!(s->variances.array() > 0.0).all() || !(s->weights.array() > 0.0).all()) {
      throw ConfigError("mixture variances and weights must be positive");
    }
  }
  for (Eigen::Index i = 0; i < a.means.cols(); ++i) {
    for (Eigen::Index j = 0; j < b.means.cols(); ++j) {
      comps_.push_back({a.means.col(i), b.means.col(j), a.variances.col(i), b.variances.col(j),
                        std::log(a.weights(i)) + std::log(b.weights(j))});
    }
  }
}

void AnalyticMixtureTransport::evaluate(const VectorRef& x, double t, Vector* vel, Vector* score,
                                        const Vector* tangent, Vector* jvp) const {
  const Schedule& s = schedule_;
  const double al = s.alpha(t), be = s.beta(t);
  const double g2 = s.noise * t * (1.0 - t);
  const double g2dot = s.noise * (1.0 - 2.0 * t);
  const std::size_t k = comps_.size();
  std::vector<Vector> diff(k), var(k), rate(k), vc(k);
  Vector logp(static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < k; ++c) {
    const Component& comp = comps_[c];
    const Vector m = al * comp.mean_a + be * comp.mean_b;
    var[c] = (al * al * comp.var_a + be * be * comp.var_b).array() + g2;
    const Vector vdot = (2.0 * (s.alpha_dot(t) * al * comp.var_a + s.beta_dot(t) * be * comp.var_b)).array() + g2dot;
    diff[c] = x - m;
    rate[c] = (0.5 * vdot.array() / var[c].array()).matrix();
    vc[c] = s.alpha_dot(t) * comp.mean_a + s.beta_dot(t) * comp.mean_b + rate[c].cwiseProduct(diff[c]);
    logp(c) = comp.log_weight - 0.5 * (var[c].array().log().sum() + (diff[c].array().square() / var[c].array()).sum());
  }
  const double mx = logp.maxCoeff();
  Vector p = (logp.array() - mx).exp().matrix();
  p /= p.sum();

  Vector sbar = Vector::Zero(dim_);
  for (std::size_t c = 0; c < k; ++c) sbar += p(c) * diff[c].cwiseQuotient(var[c]);
  if (score) *score = sbar;
  if (vel) {
    vel->setZero(dim_);
    for (std::size_t c = 0; c < k; ++c) *vel += p(c) * vc[c];
  }
  if (jvp) {
    const Vector& u = *tangent;
    jvp->setZero(dim_);
    for (std::size_t c = 0; c < k; ++c) {
      const double dlogp = (sbar - diff[c].cwiseQuotient(var[c])).dot(u);
      *jvp += p(c) * (rate[c].cwiseProduct(u) + vc[c] * dlogp);
    }
  }
}

void AnalyticMixtureTransport::velocity(const Matrix& x, double t, Matrix& out) const {
  require_dim(x.rows(), dim_, "velocity");
  out.resize(dim_, x.cols());
  Vector v;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    evaluate(x.col(j), t, &v, nullptr, nullptr, nullptr);
    out.col(j) = v;
  }
}

void AnalyticMixtureTransport::score(const Matrix& x, double t, Matrix& out) const {
  require_dim(x.rows(), dim_, "score");
  out.resize(dim_, x.cols());
  Vector s;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    evaluate(x.col(j), t, nullptr, &s, nullptr, nullptr);
    out.col(j) = s;
  }
}

Matrix AnalyticMixtureTransport::velocity_jvp(const Matrix& x, double t, const Matrix& tangents) const {
  require_dim(x.rows(), dim_, "velocity_jvp");
  if (tangents.rows() != x.rows() || tangents.cols() != x.cols()) throw ShapeError("jvp tangent shape");
  Matrix out(dim_, x.cols());
  Vector u, j;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    u = tangents.col(c);
    evaluate(x.col(c), t, nullptr, nullptr, &u, &j);
    out.col(c) = j;
  }
  return out;
}

std::pair<Vector, Vector> AnalyticMixtureTransport::gaussian_marginal(double t) const {
  if (comps_.size() != 1) throw ConfigError("marginal law is Gaussian only for single components");
  const Component& c = comps_[0];
  const double al = schedule_.alpha(t), be = schedule_.beta(t);
  return {al * c.mean_a + be * c.mean_b,
          ((al * al * c.var_a + be * be * c.var_b).array() + schedule_.noise * t * (1.0 - t)).matrix()};
}

AnalyticMixtureTransport analytic_gaussian_transport(const EnergySystem& a, const EnergySystem& b,
                                                     Schedule schedule) {
  if (a.kind() != "gaussian" || b.kind() != "gaussian") {
    throw ConfigError("analytic Gaussian transport needs two gaussian endpoints", "unsupported");
  }
  return AnalyticMixtureTransport(mixture_from_system(a), mixture_from_system(b), schedule);
}

double WorkLedger::drop_rate() const {
  const double dropped = static_cast<double>(dropped_forward + dropped_backward);
  const double total = dropped + static_cast<double>(forward.size() + backward.size());
  return total > 0.0 ? dropped / total : 0.0;
}

void WorkLedger::add(Direction d, const EnsembleResult& r) {
  auto& dst = d == Direction::kForward ? forward : backward;
  long& dropped = d == Direction::kForward ? dropped_forward : dropped_backward;
  for (std::size_t i = 0; i < r.works.size(); ++i) {
    if (r.valid[i]) {
      dst.push_back(r.works[i]);
    } else {
      ++dropped;
    }
  }
}

std::string format_works(const WorkLedger& ledger) {
  std::ostringstream out;
  out << "direction,work,valid\n";
  for (double w : ledger.forward) out << "forward," << io::format_real(w) << ",1\n";
  for (long i = 0; i < ledger.dropped_forward; ++i) out << "forward,nan,0\n";
  for (double w : ledger.backward) out << "backward," << io::format_real(w) << ",1\n";
  for (long i = 0; i < ledger.dropped_backward; ++i) out << "backward,nan,0\n";
  return out.str();
}

WorkLedger parse_works(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  WorkLedger ledger;
  if (!std::getline(in, line)) return ledger;
  ++line_no;
  if (line != "direction,work,valid") throw ParseError("work file header must be 'direction,work,valid'", 1);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = io::split(line, ',');
    if (fields.size() != 3) throw ParseError("expected 3 fields", line_no);
    Direction d;
    try {
      d = parse_direction(fields[0]);
    } catch (const ConfigError&) {
      throw ParseError("unknown direction '" + std::string(fields[0]) + "'", line_no);
    }
    if (fields[2] == "0") {
      (d == Direction::kForward ? ledger.dropped_forward : ledger.dropped_backward) += 1;
      continue;
    }
    if (fields[2] != "1") throw ParseError("valid flag must be 0 or 1", line_no);
    const auto w = io::parse_real(fields[1]);
    if (!w || !std::isfinite(*w)) throw ParseError("non-finite work marked valid", line_no);
    (d == Direction::kForward ? ledger.forward : ledger.backward).push_back(*w);
  }
  return ledger;
}

void write_works(const std::filesystem::path& path, const WorkLedger& ledger) {
  io::write_file_atomic(path, format_works(ledger));
  if (!ledger.provenance.empty()) {
    std::ostringstream meta;
    for (const auto& [k, v] : ledger.provenance) meta << k << '=' << v << '\n';
    io::write_file_atomic(path.string() + ".meta", meta.str());
  }
}

WorkLedger read_works(const std::filesystem::path& path) {
  WorkLedger ledger = parse_works(io::read_file(path));
  const std::filesystem::path meta = path.string() + ".meta";
  if (std::filesystem::exists(meta)) {
    std::istringstream in(io::read_file(meta));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) ledger.provenance[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  return ledger;
}

}  // namespace feat
