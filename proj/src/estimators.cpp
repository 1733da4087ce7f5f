#include "feat/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "feat/io.hpp"

namespace feat {

double log_fermi(double z) {
  if (z > 0.0) return -z - std::log1p(std::exp(-z));
  return -std::log1p(std::exp(z));
}

namespace {

double log_sum_exp(const std::vector<double>& x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

std::vector<double> negated(const std::vector<double>& x) {
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return -v; });
  return out;
}

void require_nonempty(const std::vector<double>& x, const char* what) {
  if (x.empty()) throw ConfigError(std::string(what) + " is empty", "empty-ledger");
}

}  // namespace

double log_mean_exp(const std::vector<double>& x) {
  return log_sum_exp(x) - std::log(static_cast<double>(x.size()));
}

double mean(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double fep_estimate(const std::vector<double>& energies_a, const std::vector<double>& energies_b) {
  require_nonempty(energies_a, "FEP input");
  if (energies_a.size() != energies_b.size()) throw ShapeError("FEP energy arrays differ in length");
  std::vector<double> expo(energies_a.size());
  for (std::size_t i = 0; i < expo.size(); ++i) expo[i] = -(energies_b[i] - energies_a[i]);
  return -log_mean_exp(expo);
}

double fermi_update(const std::vector<double>& forward, const std::vector<double>& backward, double c) {
  std::vector<double> num(backward.size()), den(forward.size());
  for (std::size_t m = 0; m < backward.size(); ++m) num[m] = log_fermi(-backward[m] + c);
  for (std::size_t n = 0; n < forward.size(); ++n) den[n] = log_fermi(forward[n] - c);
  // Means rather than sums, so unequal direction counts do not shift the result.
  return log_mean_exp(num) - log_mean_exp(den) + c;
}

FixedPoint fermi_fixed_point(const std::vector<double>& forward, const std::vector<double>& backward, double c0,
                             double tol, int max_iter) {
  require_nonempty(forward, "forward works");
  require_nonempty(backward, "backward works");
  FixedPoint fp;
  double c = c0;
  fp.converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    const double next = fermi_update(forward, backward, c);
    fp.iterations = it;
    if (!std::isfinite(next)) throw NumericalError("fixed-point update became non-finite", "non-finite-estimate");
    if (std::abs(next - c) < tol) {
      fp.converged = true;
      c = next;
      break;
    }
    c = next;
  }
  if (fp.converged) {
    // The rounded map can have several exact fixed points near the root, so the
    // iterate depends on c0 in the last bits. g(c) = update(c) - c is strictly
    // decreasing with g >= 0 at the smallest work and g <= 0 at the largest;
    // bisecting on that data-fixed bracket gives a start-independent value.
    const auto g = [&](double x) { return fermi_update(forward, backward, x) - x; };
    const auto [fmin, fmax] = std::minmax_element(forward.begin(), forward.end());
    const auto [bmin, bmax] = std::minmax_element(backward.begin(), backward.end());
    double lo = std::min(*fmin, *bmin), hi = std::max(*fmax, *bmax);
    double glo = g(lo), ghi = g(hi);
    while (glo > 0.0 && ghi < 0.0) {
      const double mid = lo + 0.5 * (hi - lo);
      if (mid <= lo || mid >= hi) break;
      const double gm = g(mid);
      if (gm > 0.0) {
        lo = mid;
        glo = gm;
      } else {
        hi = mid;
        ghi = gm;
      }
    }
    c = std::abs(ghi) < std::abs(glo) ? hi : lo;
  }
  fp.constant = c;
  fp.delta_f = fp.converged ? c : fermi_update(forward, backward, c);
  return fp;
}

FixedPoint bar_equilibrium(const std::vector<double>& forward_du, const std::vector<double>& backward_du) {
  require_nonempty(forward_du, "forward energy differences");
  require_nonempty(backward_du, "backward energy differences");
  return fermi_fixed_point(forward_du, backward_du, -log_mean_exp(negated(forward_du)));
}

IwaeValues iwae_estimates(const WorkLedger& ledger) {
  IwaeValues v;
  if (!ledger.forward.empty()) v.forward = -log_mean_exp(negated(ledger.forward));
  if (!ledger.backward.empty()) v.backward = log_mean_exp(ledger.backward);
  return v;
}

Bounds elbo_eubo(const WorkLedger& ledger) {
  Bounds b;
  if (!ledger.backward.empty()) b.elbo = mean(ledger.backward);
  if (!ledger.forward.empty()) b.eubo = mean(ledger.forward);
  return b;
}

FixedPoint min_variance_estimate(const WorkLedger& ledger) {
  if (ledger.forward.empty() && ledger.backward.empty()) throw ConfigError("no valid works", "empty-ledger");
  if (ledger.forward.size() < 2 || ledger.backward.size() < 2) {
    throw ConfigError("minimum-variance estimate needs at least two works per direction", "insufficient-works");
  }
  const IwaeValues iw = iwae_estimates(ledger);
  return fermi_fixed_point(ledger.forward, ledger.backward, 0.5 * (*iw.forward + *iw.backward));
}

std::pair<Vector, Vector> gauss_legendre_unit(int n) {
  if (n < 1) throw ConfigError("quadrature needs at least one node");
  // Golub-Welsch: eigen-decomposition of the Legendre Jacobi matrix.
  Matrix jac = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jac(k, k - 1) = b;
    jac(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(jac);
  Vector nodes = (eig.eigenvalues().array() + 1.0) / 2.0;
  Vector weights = eig.eigenvectors().row(0).transpose().array().square();
  return {nodes, weights};
}

TiResult ti_quadrature(const EnergyFunction& sys_a, const EnergyFunction& sys_b, const MalaConfig& cfg, int knots,
                       const VectorRef& x0) {
  require_dim(sys_b.dim(), sys_a.dim(), "TI endpoints");
  const auto [nodes, weights] = gauss_legendre_unit(knots);
  TiResult res;
  for (int k = 0; k < knots; ++k) {
    const double t = nodes(k);
    TiKnot knot{t, 0.0, 0.0};
    try {
      InterpolatedEnergy ut(sys_a, sys_b, t);
      MalaConfig c = cfg;
      c.seed = derive_seed(cfg.seed, "ti", static_cast<std::uint64_t>(k));
      const MalaRun run = mala_chain(ut, c, x0);
      if (run.set.size() == 0) throw NumericalError("no samples kept");
      double acc = 0.0;
      for (Eigen::Index j = 0; j < run.set.size(); ++j) {
        acc += sys_b.energy(run.set.samples.col(j)) - sys_a.energy(run.set.samples.col(j));
      }
      knot.mean_du = acc / static_cast<double>(run.set.size());
      knot.acceptance = run.acceptance_rate;
    } catch (const Error& e) {
      throw NumericalError("TI sampler failed at t = " + io::format_real(t) + ": " + e.what(), "sampler-failure");
    }
    res.delta_f += weights(k) * knot.mean_du;
    res.knots.push_back(knot);
  }
  return res;
}

Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins) {
  if (bins < 1 || !(hi > lo)) throw ConfigError("histogram needs bins >= 1 and hi > lo");
  Histogram h;
  h.centers.resize(bins);
  h.counts = Vector::Zero(bins);
  const double width = (hi - lo) / bins;
  for (int i = 0; i < bins; ++i) h.centers(i) = lo + (i + 0.5) * width;
  for (double v : values) {
    if (!(v >= lo && v <= hi)) continue;
    const int i = std::min(bins - 1, static_cast<int>((v - lo) / width));
    h.counts(i) += 1.0;
  }
  return h;
}

Vector umbrella_reweight(const Histogram& hist_a, const Histogram& hist_b, double f_a, double f_b,
                         const Umbrella& umb_a, const Umbrella& umb_b) {
  require_dim(hist_b.centers.size(), hist_a.centers.size(), "umbrella histograms");
  if (hist_a.centers.size() == 0) throw ConfigError("empty histogram binning", "empty-histogram");
  const double na = hist_a.counts.sum();
  const double nb = hist_b.counts.sum();
  if (!(na > 0.0) || !(nb > 0.0)) throw ConfigError("umbrella histograms must be non-empty", "empty-histogram");
  const Eigen::Index bins = hist_a.centers.size();
  Vector logp(bins);
  for (Eigen::Index i = 0; i < bins; ++i) {
    const double xi = hist_a.centers(i);
    const double n = hist_a.counts(i) + hist_b.counts(i);
    if (n <= 0.0) {
      logp(i) = -std::numeric_limits<double>::infinity();
      continue;
    }
    const double la = std::log(na) + f_a - 0.5 * umb_a.strength * (xi - umb_a.center) * (xi - umb_a.center);
    const double lb = std::log(nb) + f_b - 0.5 * umb_b.strength * (xi - umb_b.center) * (xi - umb_b.center);
    const double mx = std::max(la, lb);
    logp(i) = std::log(n) - (mx + std::log(std::exp(la - mx) + std::exp(lb - mx)));
  }
  const double mx = logp.maxCoeff();
  Vector p = (logp.array() - mx).exp().matrix();
  return p / p.sum();
}

double symmetry_metric(const Vector& p) {
  double s = 0.0;
  const Eigen::Index n = p.size();
  for (Eigen::Index i = 0; i < n; ++i) s += std::abs(p(i) - p(n - 1 - i));
  return 0.5 * s;
}

double bootstrap_std(const std::vector<double>& values, int resamples, std::uint64_t seed,
                     const std::function<double(const std::vector<double>&)>& estimator) {
  if (values.size() < 2) throw ConfigError("bootstrap needs at least two values");
  if (resamples < 2) throw ConfigError("bootstrap needs at least two resamples");
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> draw(values.size());
  std::vector<double> stats(resamples);
  for (int r = 0; r < resamples; ++r) {
    for (auto& v : draw) v = values[pick(gen)];
    stats[r] = estimator(draw);
  }
  const double m = mean(stats);
  double ss = 0.0;
  for (double s : stats) ss += (s - m) * (s - m);
  return std::sqrt(ss / (resamples - 1));
}

double bootstrap_std2(const std::vector<double>& a, const std::vector<double>& b, int resamples, std::uint64_t seed,
                      const std::function<double(const std::vector<double>&, const std::vector<double>&)>& estimator) {
  if (a.size() < 2 || b.size() < 2) throw ConfigError("bootstrap needs at least two values per array");
  if (resamples < 2) throw ConfigError("bootstrap needs at least two resamples");
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::size_t> pick_a(0, a.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_b(0, b.size() - 1);
  std::vector<double> da(a.size()), db(b.size());
  std::vector<double> stats(resamples);
  for (int r = 0; r < resamples; ++r) {
    for (auto& v : da) v = a[pick_a(gen)];
    for (auto& v : db) v = b[pick_b(gen)];
    stats[r] = estimator(da, db);
  }
  const double m = mean(stats);
  double ss = 0.0;
  for (double s : stats) ss += (s - m) * (s - m);
  return std::sqrt(ss / (resamples - 1));
}

const EstimateRow* EstimateReport::find(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.estimator == name) return &r;
  }
  return nullptr;
}

EstimateReport estimate_from_ledger(const WorkLedger& ledger, int resamples, std::uint64_t seed) {
  if (ledger.forward.empty() && ledger.backward.empty()) throw ConfigError("no valid works", "empty-ledger");
  EstimateReport rep;
  rep.n_forward = ledger.forward.size();
  rep.n_backward = ledger.backward.size();
  const std::string base_flag = ledger.drop_flag() ? "drop-rate" : "";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::uint64_t bseed = derive_seed(seed, seed_label::kBootstrap);
  auto boot = [&](const std::vector<double>& v, std::uint64_t k,
                  const std::function<double(const std::vector<double>&)>& f) {
    return v.size() >= 2 && resamples >= 2 ? bootstrap_std(v, resamples, derive_seed(bseed, "row", k), f) : nan;
  };

  const IwaeValues iw = iwae_estimates(ledger);
  const Bounds bd = elbo_eubo(ledger);
  auto fwd_iwae = [](const std::vector<double>& w) { return -log_mean_exp(negated(w)); };
  auto bwd_iwae = [](const std::vector<double>& w) { return log_mean_exp(w); };
  auto plain = [](const std::vector<double>& w) { return mean(w); };
  if (iw.forward) rep.rows.push_back({"iwae_forward", *iw.forward, boot(ledger.forward, 0, fwd_iwae), 0, base_flag});
  if (iw.backward) {
    rep.rows.push_back({"iwae_backward", *iw.backward, boot(ledger.backward, 1, bwd_iwae), 0, base_flag});
  }
  if (bd.elbo) rep.rows.push_back({"elbo", *bd.elbo, boot(ledger.backward, 2, plain), 0, base_flag});
  if (bd.eubo) rep.rows.push_back({"eubo", *bd.eubo, boot(ledger.forward, 3, plain), 0, base_flag});
  if (ledger.forward.size() >= 2 && ledger.backward.size() >= 2) {
    const FixedPoint fp = min_variance_estimate(ledger);
    std::string flags = base_flag;
    if (!fp.converged) flags += flags.empty() ? "not-converged" : ";not-converged";
    double sd = nan;
    if (resamples >= 2) {
      sd = bootstrap_std2(ledger.forward, ledger.backward, resamples, derive_seed(bseed, "row", 4),
                          [](const std::vector<double>& f, const std::vector<double>& b) {
                            WorkLedger l;
                            l.forward = f;
                            l.backward = b;
                            return min_variance_estimate(l).delta_f;
                          });
    }
    rep.rows.push_back({"min_variance", fp.delta_f, sd, fp.iterations, flags});
  }
  return rep;
}

std::string format_report_csv(const EstimateReport& report) {
  std::ostringstream out;
  out << "estimator,value,std,iters,flags\n";
  for (const auto& r : report.rows) {
    out << r.estimator << ',' << io::format_real(r.value) << ',' << io::format_real(r.std) << ',' << r.iters << ','
        << r.flags << '\n';
  }
  return out.str();
}

std::string format_report_summary(const EstimateReport& report) {
  std::ostringstream out;
  out << "free energy estimates (forward paths " << report.n_forward << ", backward paths " << report.n_backward
      << ")\n";
  for (const auto& r : report.rows) {
    out << "  " << r.estimator;
    for (std::size_t k = r.estimator.size(); k < 16; ++k) out << ' ';
    out << io::format_real(r.value);
    if (std::isfinite(r.std)) out << " +- " << io::format_real(r.std);
    if (r.iters) out << "  (" << r.iters << " iterations)";
    if (!r.flags.empty()) out << "  [" << r.flags << "]";
    out << '\n';
  }
  return out.str();
}

}  // namespace feat
