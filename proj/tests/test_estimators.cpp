#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "feat/estimators.hpp"

using namespace feat;

namespace {

const double kLog2 = std::log(2.0);

std::vector<double> energies(const EnergyFunction& sys, const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) out[static_cast<std::size_t>(j)] = sys.energy(x.col(j));
  return out;
}

std::vector<double> differences(const EnergyFunction& a, const EnergyFunction& b, const Matrix& x) {
  auto ua = energies(a, x);
  const auto ub = energies(b, x);
  for (std::size_t i = 0; i < ua.size(); ++i) ua[i] = ub[i] - ua[i];
  return ua;
}

WorkLedger ledger_of(std::vector<double> fwd, std::vector<double> bwd) {
  WorkLedger l;
  l.forward = std::move(fwd);
  l.backward = std::move(bwd);
  return l;
}

std::vector<double> shifted(std::vector<double> v, double c) {
  for (double& x : v) x += c;
  return v;
}

std::vector<double> normal_works(int n, double mean, double std, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(mean, std);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = normal(gen);
  return v;
}

double fep_from_du(const std::vector<double>& du) { return fep_estimate(std::vector<double>(du.size(), 0.0), du); }

}  // namespace

TEST_CASE("fermi identities in log space") {
  for (int i = 0; i <= 600; ++i) {
    const double z = -30.0 + 0.1 * i;
    CHECK(std::abs(std::exp(log_fermi(z)) + std::exp(log_fermi(-z)) - 1.0) <= 1e-12);
    CHECK(std::abs(log_fermi(z) - log_fermi(-z) + z) <= 1e-12);
  }
  CHECK(log_fermi(0.0) == doctest::Approx(-kLog2).epsilon(1e-15));
  CHECK(std::isfinite(log_fermi(800.0)));
  CHECK(log_fermi(800.0) == doctest::Approx(-800.0));
}

TEST_CASE("fep examples") {
  CHECK(fep_estimate({1.0, 2.0, -3.0}, {1.0, 2.0, -3.0}) == 0.0);
  CHECK(fep_estimate({0.0, 0.0}, {0.0, kLog2}) == doctest::Approx(-std::log(0.75)).epsilon(1e-14));
  CHECK(fep_estimate({0.0, 0.0}, {0.0, kLog2}) == doctest::Approx(0.287682).epsilon(1e-6));
  CHECK_THROWS_AS(fep_estimate({}, {}), ConfigError);
  // Magnitudes where a naive exponential would overflow.
  CHECK(fep_estimate({0.0, 0.0}, {-900.0, -900.0}) == doctest::Approx(-900.0));
}

TEST_CASE("fep on a gaussian pair with mala samples") {
  const auto sa = EnergySystem::standard_gaussian(1);
  const auto sb = EnergySystem::standard_gaussian(1, 2.0);
  MalaConfig cfg;
  cfg.steps = 125000;

  // Sampling the wide system, the weights exp(-3 x^2 / 8) are bounded.
  cfg.seed = 11;
  const MalaRun wide = mala_chain(sb, cfg, Vector::Zero(1));
  REQUIRE(wide.set.samples.cols() == 100000);
  const double reverse = fep_estimate(energies(sb, wide.set.samples), energies(sa, wide.set.samples));
  INFO("reverse fep " << reverse);
  CHECK(std::abs(reverse - kLog2) <= 0.02);

  // From the narrow side the weights exp(3 x^2 / 8) have infinite variance (tail
  // index 4/3): runs scatter by several hundredths and lean above the truth.
  std::vector<double> runs;
  for (std::uint64_t s = 0; s < 9; ++s) {
    cfg.seed = 100 + s;
    const MalaRun narrow = mala_chain(sa, cfg, Vector::Zero(1));
    runs.push_back(fep_estimate(energies(sa, narrow.set.samples), energies(sb, narrow.set.samples)));
  }
  std::nth_element(runs.begin(), runs.begin() + 4, runs.end());
  INFO("median forward fep " << runs[4]);
  CHECK(std::abs(runs[4] + kLog2) <= 0.06);
}

TEST_CASE("bar examples") {
  const FixedPoint zero = bar_equilibrium({0.0, 0.0, 0.0}, {0.0, 0.0});
  CHECK(zero.delta_f == 0.0);
  CHECK(zero.converged);
  for (double c0 : {-5.0, 0.3, 12.0}) CHECK(std::abs(fermi_update({0.0, 0.0}, {0.0}, c0)) <= 1e-15);

  const double c = 1.7;
  const FixedPoint constant = bar_equilibrium({c, c, c}, {c, c});
  CHECK(constant.delta_f == doctest::Approx(c).epsilon(1e-14));
  CHECK(constant.converged);
  CHECK_THROWS_AS(bar_equilibrium({}, {1.0}), ConfigError);
}

TEST_CASE("bar on a gaussian pair beats fep") {
  const auto sa = EnergySystem::standard_gaussian(1);
  const auto sb = EnergySystem::standard_gaussian(1, 2.0);
  const Matrix xa = *sa.sample_exact(10000, 21);
  const Matrix xb = *sb.sample_exact(10000, 22);
  const auto fwd = differences(sa, sb, xa);
  const auto bwd = differences(sa, sb, xb);
  const FixedPoint bar = bar_equilibrium(fwd, bwd);
  INFO("bar " << bar.delta_f << " iters " << bar.iterations);
  CHECK(bar.converged);
  CHECK(std::abs(bar.delta_f + kLog2) <= 0.02);

  const double sd_bar = bootstrap_std2(fwd, bwd, 200, 5, [](const auto& f, const auto& b) {
    return bar_equilibrium(f, b).delta_f;
  });
  const double sd_fep = bootstrap_std(fwd, 200, 5, fep_from_du);
  INFO("bar std " << sd_bar << " fep std " << sd_fep);
  CHECK(sd_bar <= sd_fep);
}

TEST_CASE("iwae and bound examples") {
  const WorkLedger constant = ledger_of({0.4, 0.4, 0.4}, {0.4, 0.4});
  const IwaeValues iw = iwae_estimates(constant);
  REQUIRE(iw.forward);
  REQUIRE(iw.backward);
  CHECK(*iw.forward == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(*iw.backward == doctest::Approx(0.4).epsilon(1e-15));
  const Bounds cb = elbo_eubo(constant);
  CHECK(*cb.elbo == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(*cb.eubo == doctest::Approx(0.4).epsilon(1e-15));

  const WorkLedger two = ledger_of({0.0, kLog2}, {});
  const IwaeValues iw2 = iwae_estimates(two);
  CHECK(*iw2.forward == doctest::Approx(0.287682).epsilon(1e-6));
  CHECK_FALSE(iw2.backward);
  const Bounds b2 = elbo_eubo(two);
  CHECK(*b2.eubo == doctest::Approx(0.346574).epsilon(1e-6));
  CHECK(*b2.eubo > *iw2.forward);
  CHECK_FALSE(b2.elbo);

  // A single path reduces to the plain work.
  CHECK(*iwae_estimates(ledger_of({3.25}, {})).forward == doctest::Approx(3.25).epsilon(1e-15));
}

TEST_CASE("jensen orderings hold on every ledger") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto fwd = normal_works(37, 0.5, 1.0 + 0.1 * seed, seed);
    const auto bwd = normal_works(23, -0.5, 0.5 + 0.1 * seed, seed + 100);
    const WorkLedger l = ledger_of(fwd, bwd);
    const IwaeValues iw = iwae_estimates(l);
    const Bounds b = elbo_eubo(l);
    CHECK(*b.elbo <= *iw.backward);
    CHECK(*iw.forward <= *b.eubo);
  }
}

TEST_CASE("min variance examples") {
  const double c = -2.5;
  const FixedPoint fp = min_variance_estimate(ledger_of({c, c, c}, {c, c}));
  CHECK(fp.delta_f == c);
  CHECK(fp.iterations == 1);
  CHECK(fp.converged);

  const FixedPoint mid = min_variance_estimate(ledger_of({0.0, 0.0}, {0.2, 0.2}));
  CHECK(mid.delta_f == doctest::Approx(0.1).epsilon(1e-12));

  CHECK_THROWS_WITH_AS(min_variance_estimate(WorkLedger{}), doctest::Contains("no valid works"), ConfigError);
  try {
    min_variance_estimate(WorkLedger{});
  } catch (const ConfigError& e) {
    CHECK(e.code() == "empty-ledger");
  }
  try {
    min_variance_estimate(ledger_of({1.0}, {1.0, 2.0}));
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(e.code() == "insufficient-works");
  }
  CHECK_THROWS_AS(min_variance_estimate(ledger_of({1.0, 2.0}, {})), ConfigError);
}

TEST_CASE("min variance invariances") {
  const auto fwd = normal_works(40, 1.0, 1.2, 7);
  const auto bwd = normal_works(30, -0.3, 0.9, 8);
  const WorkLedger base = ledger_of(fwd, bwd);
  const FixedPoint fp = min_variance_estimate(base);
  REQUIRE(fp.converged);

  SUBCASE("self consistency") {
    CHECK(std::abs(fermi_update(fwd, bwd, fp.delta_f) - fp.delta_f) <= 1e-9);
  }
  SUBCASE("reordering") {
    auto f = fwd;
    auto b = bwd;
    std::mt19937_64 gen(3);
    std::shuffle(f.begin(), f.end(), gen);
    std::reverse(b.begin(), b.end());
    CHECK(min_variance_estimate(ledger_of(f, b)).delta_f == doctest::Approx(fp.delta_f).epsilon(1e-12));
  }
  SUBCASE("k-fold duplication") {
    for (int k : {2, 5}) {
      std::vector<double> f, b;
      for (int r = 0; r < k; ++r) {
        f.insert(f.end(), fwd.begin(), fwd.end());
        b.insert(b.end(), bwd.begin(), bwd.end());
      }
      CHECK(min_variance_estimate(ledger_of(f, b)).delta_f == doctest::Approx(fp.delta_f).epsilon(1e-12));
    }
  }
  SUBCASE("shift covariance") {
    for (double c : {-250.0, 0.75, 595.0}) {
      const WorkLedger moved = ledger_of(shifted(fwd, c), shifted(bwd, c));
      const IwaeValues a = iwae_estimates(base), m = iwae_estimates(moved);
      const Bounds ba = elbo_eubo(base), bm = elbo_eubo(moved);
      const double tol = 1e-12 * (1.0 + std::abs(c));
      CHECK(std::abs(*m.forward - *a.forward - c) <= tol);
      CHECK(std::abs(*m.backward - *a.backward - c) <= tol);
      CHECK(std::abs(*bm.elbo - *ba.elbo - c) <= tol);
      CHECK(std::abs(*bm.eubo - *ba.eubo - c) <= tol);
      CHECK(std::abs(min_variance_estimate(moved).delta_f - fp.delta_f - c) <= 1e-9 * (1.0 + std::abs(c)));
    }
  }
  SUBCASE("start independence") {
    for (double c0 : {-10.0, 0.0, 3.0}) {
      const FixedPoint other = fermi_fixed_point(fwd, bwd, c0);
      CHECK(other.delta_f == fp.delta_f);
    }
  }
}

TEST_CASE("non-converged fixed point is flagged") {
  const FixedPoint fp = fermi_fixed_point({0.0, 5.0, 9.0}, {-4.0, 1.0}, 100.0, 1e-10, 2);
  CHECK_FALSE(fp.converged);
  CHECK(fp.iterations == 2);
}

TEST_CASE("bar equals the min variance estimate on degenerate transport works") {
  const auto sa = EnergySystem::standard_gaussian(2);
  const auto sb = EnergySystem::gaussian(Vector::Constant(2, 0.5), Vector::Constant(2, 2.0));
  const Matrix xa = *sa.sample_exact(500, 1);
  const Matrix xb = *sb.sample_exact(300, 2);
  auto still = make_zero_transport(2);
  still->set_sigma(0.0);
  const TimeGrid grid = TimeGrid::uniform(10);
  WorkLedger l;
  l.add(Direction::kForward, simulate_works(*still, grid, Direction::kForward, xa, sa, sb, 3));
  l.add(Direction::kBackward, simulate_works(*still, grid, Direction::kBackward, xb, sa, sb, 4));
  const auto fwd_du = differences(sa, sb, xa);
  const auto bwd_du = differences(sa, sb, xb);
  REQUIRE(l.forward == fwd_du);
  REQUIRE(l.backward == bwd_du);
  CHECK(min_variance_estimate(l).delta_f == bar_equilibrium(fwd_du, bwd_du).delta_f);
  CHECK(*iwae_estimates(l).forward == fep_estimate(energies(sa, xa), energies(sb, xa)));
}

TEST_CASE("min variance beats one-sided estimates on the gaussian oracle") {
  const auto sa = EnergySystem::standard_gaussian(1);
  const auto sb = EnergySystem::standard_gaussian(1, 2.0);
  auto tr = analytic_gaussian_transport(sa, sb);
  tr.set_sigma(0.2);
  const TimeGrid grid = TimeGrid::uniform(100);
  double sum_mv = 0.0, sum_f = 0.0, sum_b = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = derive_seed(99, "oracle", static_cast<std::uint64_t>(s));
    WorkLedger l;
    l.add(Direction::kForward, simulate_works(tr, grid, Direction::kForward,
                                              *sa.sample_exact(2000, derive_seed(seed, "a", 0)), sa, sb, seed));
    l.add(Direction::kBackward, simulate_works(tr, grid, Direction::kBackward,
                                               *sb.sample_exact(2000, derive_seed(seed, "b", 0)), sa, sb, seed));
    const EstimateReport rep = estimate_from_ledger(l, 200, seed);
    const auto* mv = rep.find("min_variance");
    const auto* fw = rep.find("iwae_forward");
    const auto* bw = rep.find("iwae_backward");
    REQUIRE(mv);
    REQUIRE(fw);
    REQUIRE(bw);
    INFO("seed " << s << " mv " << mv->value << " fwd " << fw->value << " bwd " << bw->value);
    CHECK(std::abs(mv->value + kLog2) <= 0.02);
    CHECK(std::abs(fw->value + kLog2) <= 0.02);
    CHECK(std::abs(bw->value + kLog2) <= 0.02);
    sum_mv += mv->std;
    sum_f += fw->std;
    sum_b += bw->std;
  }
  INFO("mean bootstrap std: mv " << sum_mv / seeds << " fwd " << sum_f / seeds << " bwd " << sum_b / seeds);
  CHECK(sum_mv <= sum_f);
  CHECK(sum_mv <= sum_b);
}

TEST_CASE("gauss-legendre nodes") {
  for (int n : {1, 2, 5, 21}) {
    const auto [x, w] = gauss_legendre_unit(n);
    REQUIRE(x.size() == n);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-13));
    for (int p = 0; p <= 2 * n - 1; ++p) {
      const double q = (w.array() * x.array().pow(p)).sum();
      CHECK(q == doctest::Approx(1.0 / (p + 1)).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(gauss_legendre_unit(0), ConfigError);
}

TEST_CASE("ti on identical systems is zero") {
  const auto sa = EnergySystem::double_well({1, 1.0, 0.0});
  MalaConfig cfg;
  cfg.steps = 2000;
  cfg.seed = 2;
  const TiResult r = ti_quadrature(sa, sa, cfg, 5, Vector::Zero(1));
  CHECK(r.delta_f == 0.0);
  REQUIRE(r.knots.size() == 5);
  for (const auto& k : r.knots) CHECK(k.mean_du == 0.0);
}

TEST_CASE("ti on a gaussian pair") {
  const auto sa = EnergySystem::standard_gaussian(1);
  const auto sb = EnergySystem::standard_gaussian(1, 2.0);
  const auto integrand = [](double t) { return -3.0 / (8.0 * ((1.0 - t) + t / 4.0)); };

  // The closed-form integrand under the same quadrature.
  const auto [x, w] = gauss_legendre_unit(21);
  double exact = 0.0;
  for (int k = 0; k < 21; ++k) exact += w(k) * integrand(x(k));
  CHECK(exact == doctest::Approx(-kLog2).epsilon(1e-10));

  MalaConfig cfg;
  cfg.steps = 25000;
  cfg.seed = 31;
  const TiResult r = ti_quadrature(sa, sb, cfg, 21, Vector::Zero(1));
  INFO("ti " << r.delta_f);
  CHECK(std::abs(r.delta_f + kLog2) <= 0.01);
  REQUIRE(r.knots.size() == 21);
  for (const auto& k : r.knots) {
    INFO("t " << k.t << " mean " << k.mean_du << " exact " << integrand(k.t));
    CHECK(k.mean_du == doctest::Approx(integrand(k.t)).epsilon(0.1));
    CHECK(k.acceptance > 0.3);
  }
}

TEST_CASE("histogram binning") {
  const Histogram h = histogram({-1.0, -0.99, 0.0, 0.5, 1.0, 1.5}, -1.0, 1.0, 4);
  REQUIRE(h.centers.size() == 4);
  CHECK(h.centers(0) == doctest::Approx(-0.75));
  CHECK(h.counts(0) == 2);
  CHECK(h.counts(2) == 1);
  CHECK(h.counts(3) == 2);
  CHECK(h.counts.sum() == 5);
  CHECK_THROWS_AS(histogram({}, 1.0, 0.0, 4), ConfigError);
}

TEST_CASE("umbrella reweighting reduces to pooled counts") {
  Histogram a, b;
  a.centers = Vector::LinSpaced(5, -1.0, 1.0);
  b.centers = a.centers;
  a.counts.resize(5);
  b.counts.resize(5);
  a.counts << 1, 4, 9, 3, 0;
  b.counts << 0, 2, 6, 5, 3;
  const Umbrella u{10.0, 0.25};
  const Vector p = umbrella_reweight(a, b, 0.7, 0.7, u, u);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-14));
  // Each bin's density is the pooled count divided by the common bias factor.
  for (int i = 0; i < 5; ++i) {
    const double bias = std::exp(-0.5 * u.strength * std::pow(a.centers(i) - u.center, 2));
    const double ratio = p(i) * bias / (a.counts(i) + b.counts(i) + 1e-300);
    if (a.counts(i) + b.counts(i) > 0) {
      const double ref = p(2) * std::exp(-0.5 * u.strength * std::pow(a.centers(2) - u.center, 2)) / 15.0;
      CHECK(ratio == doctest::Approx(ref).epsilon(1e-12));
    }
  }
  // Without a bias the result is the pooled histogram.
  const Vector flat = umbrella_reweight(a, b, 0.0, 0.0, Umbrella{}, Umbrella{});
  CHECK((flat - (a.counts + b.counts) / 33.0).norm() <= 1e-14);

  Histogram empty = a;
  empty.counts.setZero();
  CHECK_THROWS_AS(umbrella_reweight(empty, empty, 0.0, 0.0, u, u), ConfigError);
}

namespace {

// Quadrature-normalized densities for the 1D double well with optional bias.
struct Quad {
  double lo, hi;
  int n;
  template <class F>
  double integrate(F f) const {
    const double h = (hi - lo) / n;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += f(lo + (i + 0.5) * h);
    return s * h;
  }
};

double well(double x) { return std::pow(x * x - 1.0, 2); }

MalaRun umbrella_chain(const Umbrella& u, std::uint64_t seed) {
  const auto sys = EnergySystem::double_well({1, 1.0, 0.0}, u);
  MalaConfig cfg;
  cfg.steps = 150000;
  cfg.seed = seed;
  return mala_chain(sys, cfg, Vector::Constant(1, u.center));
}

std::vector<double> first_row(const Matrix& m) { return {m.row(0).data(), m.row(0).data() + m.cols()}; }

}  // namespace

TEST_CASE("symmetric umbrellas give a symmetric reweighted histogram") {
  // Centered on the wells so both chains cover the walls that reweighting amplifies.
  const Umbrella ua{10.0, -0.9}, ub{10.0, 0.9};
  const auto ha = histogram(first_row(umbrella_chain(ua, 41).set.samples), -2.0, 2.0, 40);
  const auto hb = histogram(first_row(umbrella_chain(ub, 42).set.samples), -2.0, 2.0, 40);
  const Vector p = umbrella_reweight(ha, hb, 0.0, 0.0, ua, ub);
  const double sym = symmetry_metric(p);
  INFO("symmetry " << sym);
  CHECK(sym <= 0.05);
}

TEST_CASE("double-well umbrella reweighting matches quadrature") {
  const Umbrella ua{10.0, -0.3}, ub{10.0, 0.6};
  const Quad q{-4.0, 4.0, 200000};
  const auto biased_f = [&](const Umbrella& u) {
    return -std::log(q.integrate([&](double x) { return std::exp(-well(x) - 0.5 * u.strength * std::pow(x - u.center, 2)); }));
  };
  const double fa = biased_f(ua), fb = biased_f(ub);

  const double lo = -2.0, hi = 2.0;
  const int bins = 40;
  const auto ha = histogram(first_row(umbrella_chain(ua, 51).set.samples), lo, hi, bins);
  const auto hb = histogram(first_row(umbrella_chain(ub, 52).set.samples), lo, hi, bins);
  const Vector p = umbrella_reweight(ha, hb, fa, fb, ua, ub);

  Vector ref(bins);
  const double width = (hi - lo) / bins;
  for (int i = 0; i < bins; ++i) {
    const Quad cell{lo + i * width, lo + (i + 1) * width, 2000};
    ref(i) = cell.integrate([](double x) { return std::exp(-well(x)); });
  }
  ref /= ref.sum();
  const double tv = 0.5 * (p - ref).cwiseAbs().sum();
  INFO("tv " << tv);
  CHECK(tv <= 0.05);

  // Only the difference of the free energies matters.
  CHECK((umbrella_reweight(ha, hb, fa + 3.0, fb + 3.0, ua, ub) - p).norm() <= 1e-12);
}

TEST_CASE("symmetry metric") {
  Vector p(4);
  p << 0.1, 0.4, 0.4, 0.1;
  CHECK(symmetry_metric(p) == 0.0);
  p << 0.2, 0.4, 0.3, 0.1;
  CHECK(symmetry_metric(p) == doctest::Approx(0.2));
}

TEST_CASE("bootstrap") {
  const auto mean_fn = [](const std::vector<double>& v) { return mean(v); };
  CHECK(bootstrap_std({2.0, 2.0, 2.0}, 100, 1, mean_fn) == 0.0);
  // The mean of two draws from {0, 1} is binomial(2, 1/2) / 2 with std sqrt(1/8).
  const double sd = bootstrap_std({0.0, 1.0}, 20000, 3, mean_fn);
  CHECK(sd == doctest::Approx(std::sqrt(0.125)).epsilon(0.02));
  CHECK(bootstrap_std({0.0, 1.0, 5.0}, 200, 9, mean_fn) == bootstrap_std({0.0, 1.0, 5.0}, 200, 9, mean_fn));
  CHECK(bootstrap_std({0.0, 1.0, 5.0}, 200, 9, mean_fn) != bootstrap_std({0.0, 1.0, 5.0}, 200, 10, mean_fn));
}

TEST_CASE("report rows and csv") {
  WorkLedger l = ledger_of(normal_works(50, 0.2, 0.5, 1), normal_works(40, -0.2, 0.5, 2));
  const EstimateReport rep = estimate_from_ledger(l, 50, 4);
  CHECK(rep.n_forward == 50);
  CHECK(rep.n_backward == 40);
  for (const char* name : {"iwae_forward", "iwae_backward", "elbo", "eubo", "min_variance"}) {
    const auto* row = rep.find(name);
    REQUIRE(row);
    CHECK(std::isfinite(row->value));
    CHECK(row->std > 0.0);
    CHECK(row->flags.empty());
  }
  CHECK(rep.find("nonexistent") == nullptr);
  CHECK(rep.find("min_variance")->iters >= 1);

  const std::string csv = format_report_csv(rep);
  CHECK(csv.rfind("estimator,value,std,iters,flags\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(format_report_csv(estimate_from_ledger(l, 50, 4)) == csv);

  l.dropped_forward = 1;
  const EstimateReport flagged = estimate_from_ledger(l, 50, 4);
  CHECK(flagged.find("eubo")->flags == "drop-rate");

  // One direction only: the two-sided row is absent.
  const EstimateReport one = estimate_from_ledger(ledger_of({0.1, 0.2, 0.3}, {}), 20, 1);
  CHECK(one.find("min_variance") == nullptr);
  CHECK(one.find("elbo") == nullptr);
  CHECK(one.find("iwae_forward") != nullptr);

  CHECK_THROWS_AS(estimate_from_ledger(WorkLedger{}, 10, 1), ConfigError);
}
