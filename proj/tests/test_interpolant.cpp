#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "feat/interpolant.hpp"
#include "feat/transport.hpp"

using namespace feat;

namespace {

Matrix normal_matrix(std::mt19937_64& gen, Eigen::Index r, Eigen::Index c, double s = 1.0) {
  std::normal_distribution<double> normal(0.0, s);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(gen);
  return m;
}

InterpolantBatch gaussian_batch(std::mt19937_64& gen, Eigen::Index n, double sd_b = 2.0) {
  InterpolantBatch b;
  b.xa = normal_matrix(gen, 1, n);
  b.xb = normal_matrix(gen, 1, n, sd_b);
  b.eps = normal_matrix(gen, 1, n);
  b.t.resize(n);
  std::uniform_real_distribution<double> u(1e-3, 1.0 - 1e-3);
  for (Eigen::Index i = 0; i < n; ++i) b.t(i) = u(gen);
  b.grad_a = b.xa;
  b.grad_b = b.xb / (sd_b * sd_b);
  return b;
}

InterpolantBatch permuted(const InterpolantBatch& b, const std::vector<int>& perm) {
  InterpolantBatch out = b;
  for (std::size_t j = 0; j < perm.size(); ++j) {
    out.xa.col(j) = b.xa.col(perm[j]);
    out.xb.col(j) = b.xb.col(perm[j]);
    out.eps.col(j) = b.eps.col(perm[j]);
    out.t(j) = b.t(perm[j]);
    out.grad_a->col(j) = b.grad_a->col(perm[j]);
    out.grad_b->col(j) = b.grad_b->col(perm[j]);
  }
  return out;
}

double pairing_cost(const Matrix& xa, const Matrix& xb, const std::vector<int>& perm) {
  double c = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) c += (xa.col(i) - xb.col(perm[i])).squaredNorm();
  return c;
}

Eigen::Matrix3d rotation_about(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

SampleSet sample_set(const Matrix& x) {
  SampleSet s;
  s.samples = x;
  return s;
}

}  // namespace

TEST_CASE("schedule boundary identities hold exactly") {
  const Schedule s;
  CHECK(s.alpha(0.0) == 1.0);
  CHECK(s.alpha(1.0) == 0.0);
  CHECK(s.beta(0.0) == 0.0);
  CHECK(s.beta(1.0) == 1.0);
  CHECK(s.gamma(0.0) == 0.0);
  CHECK(s.gamma(1.0) == 0.0);
  CHECK(s.gamma(0.5) == doctest::Approx(0.111803).epsilon(1e-6));
  CHECK(s.gamma(0.5) == doctest::Approx(std::sqrt(0.0125)).epsilon(1e-15));
  for (double t : {1e-6, 0.1, 0.3, 0.9, 1.0 - 1e-6}) CHECK(s.gamma(t) > 0.0);
  CHECK(std::isinf(s.gamma_dot(0.0)));
  for (double t : {0.1, 0.37, 0.8}) CHECK(s.gamma(t) * s.gamma_dot(t) == doctest::Approx(s.gamma_gamma_dot(t)));
}

TEST_CASE("interpolant endpoints and fixed points") {
  const Schedule s;
  std::mt19937_64 gen(1);
  const Vector xa = normal_matrix(gen, 3, 1), xb = normal_matrix(gen, 3, 1), eps = normal_matrix(gen, 3, 1);
  CHECK(draw_interpolant(s, xa, xb, eps, 0.0, 0.0).value == xa);
  CHECK(draw_interpolant(s, xa, xb, eps, 1.0, 0.0).value == xb);
  for (double t : {0.01, 0.25, 0.5, 0.99}) {
    const auto d = draw_interpolant(s, xa, xa, Vector::Zero(3), t);
    CHECK((d.value - xa).norm() <= 1e-15 * xa.norm());
    CHECK(d.derivative.isZero(0.0));
  }
}

TEST_CASE("interpolant derivative matches central differences in t") {
  const Schedule s;
  std::mt19937_64 gen(2);
  const Vector xa = normal_matrix(gen, 4, 1), xb = normal_matrix(gen, 4, 1), eps = normal_matrix(gen, 4, 1);
  for (double t : {0.05, 0.2, 0.5, 0.73, 0.95}) {
    const auto d = draw_interpolant(s, xa, xb, eps, t);
    double prev = 0.0;
    for (double h : {2e-4, 1e-4}) {
      const Vector fd = (draw_interpolant(s, xa, xb, eps, t + h).value -
                         draw_interpolant(s, xa, xb, eps, t - h).value) / (2 * h);
      const double err = (fd - d.derivative).norm();
      if (prev > 1e-8) CHECK(err < 0.3 * prev);  // second-order: halving h quarters the error
      prev = err;
    }
    CHECK(prev < 1e-6);
  }
}

TEST_CASE("interpolant rejects times outside the clipped range") {
  const Schedule s;
  const Vector x = Vector::Zero(2);
  CHECK_THROWS_AS(draw_interpolant(s, x, x, x, 0.0005), RangeError);
  CHECK_THROWS_AS(draw_interpolant(s, x, x, x, 0.9999), RangeError);
  CHECK_THROWS_AS(draw_interpolant(s, x, x, x, -0.1, 0.0), RangeError);
  CHECK_THROWS_AS(draw_interpolant(s, x, Vector::Zero(3), x, 0.5), ShapeError);
}

TEST_CASE("zero velocity network loss is the mean squared interpolant derivative") {
  const Schedule s;
  InterpolantBatch b;
  b.xa.resize(1, 2);
  b.xb.resize(1, 2);
  b.eps.resize(1, 2);
  b.t.resize(2);
  b.xa << 0.0, 1.0;
  b.xb << 2.0, -1.0;
  b.eps << 0.3, 0.7;
  b.t << 0.5, 0.25;
  // First element: gamma_dot(0.5) = 0, so dI = 2. Second: gamma(0.25) = sqrt(0.009375),
  // gamma_dot = 0.025 / gamma, dI = -2 + 0.7 gamma_dot.
  const double g = std::sqrt(0.05 * 0.25 * 0.75);
  const double d2 = -2.0 + 0.7 * (0.05 * 0.5 / (2.0 * g));
  const auto zero = make_zero_transport(1);
  CHECK(loss_velocity(*zero, s, b) == doctest::Approx((4.0 + d2 * d2) / 2.0).epsilon(1e-14));
  CHECK(loss_velocity(*zero, s, b) == doctest::Approx(3.823344).epsilon(1e-6));
}

TEST_CASE("zero velocity loss vanishes on a static batch") {
  const Schedule s;
  std::mt19937_64 gen(3);
  InterpolantBatch b = gaussian_batch(gen, 16);
  b.xb = b.xa;
  b.eps.setZero();
  CHECK(loss_velocity(*make_zero_transport(1), s, b) == 0.0);
}

TEST_CASE("dsm loss examples") {
  const Schedule s;
  std::mt19937_64 gen(4);
  InterpolantBatch b = gaussian_batch(gen, 64);
  const auto zero = make_zero_transport(1);
  InterpolantBatch quiet = b;
  quiet.eps.setZero();
  CHECK(loss_score_dsm(*zero, s, quiet) == 0.0);
  InterpolantBatch flipped = b;
  flipped.eps = -b.eps;
  CHECK(loss_score_dsm(*zero, s, flipped) == loss_score_dsm(*zero, s, b));

  // Oracle score reaches the irreducible minimum, below the zero network on average.
  const auto oracle = analytic_gaussian_transport(EnergySystem::standard_gaussian(1),
                                                  EnergySystem::standard_gaussian(1, 2.0), s);
  double oracle_mean = 0.0, zero_mean = 0.0, plus = 0.0, minus = 0.0;
  for (int k = 0; k < 200; ++k) {
    InterpolantBatch bk = gaussian_batch(gen, 256);
    const double lo = loss_score_dsm(oracle, s, bk);
    CHECK(lo >= 0.0);
    oracle_mean += lo;
    zero_mean += loss_score_dsm(*zero, s, bk);
    plus += lo;
    bk.eps = -bk.eps;
    minus += loss_score_dsm(oracle, s, bk);
  }
  CHECK(oracle_mean < zero_mean);
  CHECK(std::abs(plus - minus) / plus < 0.05);
}

TEST_CASE("velocity loss is minimized by the analytic oracle") {
  const Schedule s;
  std::mt19937_64 gen(5);
  const auto oracle = analytic_gaussian_transport(EnergySystem::standard_gaussian(1),
                                                  EnergySystem::standard_gaussian(1, 2.0), s);
  // Perturbing the exact conditional expectation can only raise the expected loss.
  FunctionTransport shifted(
      1, [&](const Vector& x, double t) { Matrix o; oracle.velocity(x, t, o); return Vector(o.col(0).array() + 0.2); },
      [](const Vector& x, double) { return Vector(Vector::Zero(x.size())); });
  double lo = 0.0, hi = 0.0;
  for (int k = 0; k < 100; ++k) {
    const InterpolantBatch bk = gaussian_batch(gen, 512);
    lo += loss_velocity(oracle, s, bk);
    hi += loss_velocity(shifted, s, bk);
  }
  CHECK(lo < hi);
  CHECK((hi - lo) / 100 == doctest::Approx(0.04).epsilon(0.25));
}

TEST_CASE("tsm loss examples") {
  const Schedule s;
  std::mt19937_64 gen(6);
  InterpolantBatch b = gaussian_batch(gen, 32);

  const double below_half = std::nextafter(0.5, 0.0);
  b.t.setConstant(below_half);
  const LossTarget lower = tsm_target(s, b, false);
  REQUIRE(lower.target.cols() == 32);
  CHECK((lower.target - 2.0 * *b.grad_a).norm() <= 1e-14 * b.grad_a->norm());
  CHECK(tsm_target(s, b, true).target.cols() == 0);

  // Uniform energies store zero gradients; the zero network is then exact.
  InterpolantBatch flat = gaussian_batch(gen, 32);
  flat.grad_a->setZero();
  flat.grad_b->setZero();
  CHECK(loss_score_tsm(*make_zero_transport(1), s, flat) == 0.0);

  // A network equal to grad U_a is exact in the small-t limit.
  InterpolantBatch early = gaussian_batch(gen, 32);
  early.t.setConstant(0.0);
  early.xb.setZero();
  early.eps.setZero();
  FunctionTransport identity_score(
      1, [](const Vector& x, double) { return Vector(Vector::Zero(x.size())); },
      [](const Vector& x, double) { return x; });
  CHECK(loss_score_tsm(identity_score, s, early) <= 1e-24);

  InterpolantBatch bare = b;
  bare.grad_a.reset();
  try {
    tsm_target(s, bare, false);
    FAIL("missing gradients accepted");
  } catch (const ConfigError& e) {
    CHECK(e.code() == "missing-gradients");
  }
}

TEST_CASE("tsm halves are unweighted means summed") {
  const Schedule s;
  std::mt19937_64 gen(7);
  InterpolantBatch b = gaussian_batch(gen, 40);
  for (Eigen::Index j = 0; j < 40; ++j) b.t(j) = j < 10 ? 0.2 : 0.7;
  const auto zero = make_zero_transport(1);
  double lower = 0.0, upper = 0.0;
  for (Eigen::Index j = 0; j < 40; ++j) {
    if (j < 10) lower += std::pow((*b.grad_a)(0, j) / 0.8, 2) / 10.0;
    else upper += std::pow((*b.grad_b)(0, j) / 0.7, 2) / 30.0;
  }
  CHECK(loss_score_tsm(*zero, s, b) == doctest::Approx(lower + upper).epsilon(1e-13));
}

TEST_CASE("all three losses are invariant under batch reordering") {
  const Schedule s;
  std::mt19937_64 gen(8);
  const InterpolantBatch b = gaussian_batch(gen, 50);
  std::vector<int> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  const InterpolantBatch p = permuted(b, perm);
  const auto model = NeuralTransport::initialize(1, {16, 16}, ad::Activation::kGelu, 4, s);
  CHECK(loss_velocity(model, s, p) == doctest::Approx(loss_velocity(model, s, b)).epsilon(1e-13));
  CHECK(loss_score_dsm(model, s, p) == doctest::Approx(loss_score_dsm(model, s, b)).epsilon(1e-13));
  CHECK(loss_score_tsm(model, s, p) == doctest::Approx(loss_score_tsm(model, s, b)).epsilon(1e-13));
}

TEST_CASE("ot pairing on trivial and clustered batches") {
  Matrix one(2, 1);
  one << 0.3, 0.4;
  CHECK(minibatch_ot_pairs(one, one * 5.0) == std::vector<int>{0});

  Matrix xa(2, 2), xb(2, 2);
  xa << 0.0, 10.0, 0.0, 10.0;
  xb << 10.2, 0.1, 9.9, -0.2;
  CHECK(minibatch_ot_pairs(xa, xb) == std::vector<int>{1, 0});
  CHECK_THROWS_AS(minibatch_ot_pairs(xa, Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("ot pairing matches brute force over all permutations of six points") {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix xa = normal_matrix(gen, 3, 6), xb = normal_matrix(gen, 3, 6);
    const std::vector<int> got = minibatch_ot_pairs(xa, xb);
    std::vector<int> sorted = got;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    CHECK(sorted == perm);
    double best = std::numeric_limits<double>::infinity();
    int count = 0;
    do {
      best = std::min(best, pairing_cost(xa, xb, perm));
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(count == 720);
    CHECK(pairing_cost(xa, xb, got) == doctest::Approx(best).epsilon(1e-12));
    std::iota(perm.begin(), perm.end(), 0);
    CHECK(pairing_cost(xa, xb, got) <= pairing_cost(xa, xb, perm) + 1e-12);
  }
}

TEST_CASE("ot pairing on larger batches is a bijection no worse than identity") {
  std::mt19937_64 gen(10);
  const Matrix xa = normal_matrix(gen, 5, 200), xb = normal_matrix(gen, 5, 200, 2.0);
  const auto got = minibatch_ot_pairs(xa, xb);
  std::vector<char> seen(200, 0);
  for (int j : got) {
    REQUIRE(j >= 0);
    REQUIRE(j < 200);
    CHECK_FALSE(seen[j]);
    seen[j] = 1;
  }
  std::vector<int> id(200);
  std::iota(id.begin(), id.end(), 0);
  CHECK(pairing_cost(xa, xb, got) <= pairing_cost(xa, xb, id));
}

TEST_CASE("kabsch recovers identity and known rotations") {
  std::mt19937_64 gen(11);
  Eigen::Matrix3Xd p = normal_matrix(gen, 3, 6);
  p.colwise() -= p.rowwise().mean();
  const auto same = kabsch_rotation(p, p);
  REQUIRE(same);
  CHECK((*same - Eigen::Matrix3d::Identity()).norm() <= 1e-12);
  CHECK(cloud_rmsd(*same * p, p) <= 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Matrix3d r = rotation_about(normal_matrix(gen, 3, 1), 0.3 + 0.25 * trial);
    const Eigen::Matrix3Xd q = r * p;
    const auto rot = kabsch_rotation(p, q);
    REQUIRE(rot);
    CHECK((*rot * rot->transpose() - Eigen::Matrix3d::Identity()).norm() <= 1e-12);
    CHECK(rot->determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cloud_rmsd(*rot * p, q) <= 1e-10);
    // Aligning q back onto p inverts the applied rotation.
    const auto back = kabsch_rotation(q, p);
    CHECK((*back * r - Eigen::Matrix3d::Identity()).norm() <= 1e-10);
  }
}

TEST_CASE("kabsch never returns a reflection") {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Matrix3Xd p = normal_matrix(gen, 3, 5);
    Eigen::Matrix3Xd q = p;
    q.row(0) *= -1.0;  // mirror image: best orthogonal map is improper
    const auto rot = kabsch_rotation(p, q);
    REQUIRE(rot);
    CHECK(rot->determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((*rot * rot->transpose() - Eigen::Matrix3d::Identity()).norm() <= 1e-12);
  }
}

TEST_CASE("collinear clouds fall back to the identity rotation") {
  Eigen::Matrix3Xd line(3, 4);
  for (int i = 0; i < 4; ++i) line.col(i) = Eigen::Vector3d(1.0, 2.0, -1.0) * (i - 1.5);
  CHECK_FALSE(kabsch_rotation(line, line).has_value());
  const SampleSet set = sample_set(Eigen::Map<const Matrix>(line.data(), 12, 1));
  CanonicalizeReport rep;
  const SampleSet out = canonicalize(set, set.samples.col(0), false, &rep);
  CHECK(rep.degenerate == 1);
  CHECK(out.samples.col(0) == set.samples.col(0));
}

TEST_CASE("canonicalization matches brute-force particle assignment and lowers rmsd") {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Matrix3Xd ref_cloud = normal_matrix(gen, 3, 4);
    const Eigen::Matrix3Xd raw = normal_matrix(gen, 3, 4) + Eigen::Vector3d(2.0, -1.0, 0.5) * Eigen::RowVector4d::Ones();
    const Vector ref = Eigen::Map<const Vector>(ref_cloud.data(), 12);
    SampleSet set = sample_set(Eigen::Map<const Matrix>(raw.data(), 12, 1));
    set.grads = Matrix(normal_matrix(gen, 12, 1));

    const SampleSet out = canonicalize(set, ref, true);
    const Eigen::Matrix3Xd y = Eigen::Map<const Eigen::Matrix3Xd>(out.samples.data(), 3, 4);
    Eigen::Matrix3Xd rc = ref_cloud;
    rc.colwise() -= rc.rowwise().mean();
    Eigen::Matrix3Xd xc = raw;
    xc.colwise() -= xc.rowwise().mean();

    CHECK(cloud_rmsd(y, rc) <= cloud_rmsd(raw, ref_cloud) + 1e-12);
    CHECK(y.rowwise().mean().norm() <= 1e-12);

    // Identify which permutation the output used, then compare its cost to the best.
    std::vector<int> perm = {0, 1, 2, 3};
    double best = std::numeric_limits<double>::infinity();
    double used = -1.0;
    int matches = 0;
    do {
      Eigen::Matrix3Xd pc(3, 4);
      for (int i = 0; i < 4; ++i) pc.col(i) = xc.col(perm[i]);
      const double cost = (pc - rc).squaredNorm();
      best = std::min(best, cost);
      const auto r = kabsch_rotation(pc, y);
      if (r && cloud_rmsd(*r * pc, y) <= 1e-9) {
        used = cost;
        ++matches;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(matches == 1);
    CHECK(used == doctest::Approx(best).epsilon(1e-12));

    // Gradients follow the same rigid map as the coordinates.
    const Eigen::Matrix3Xd g_in = Eigen::Map<const Eigen::Matrix3Xd>(set.grads->data(), 3, 4);
    const Eigen::Matrix3Xd g_out = Eigen::Map<const Eigen::Matrix3Xd>(out.grads->data(), 3, 4);
    CHECK(g_out.colwise().norm().sum() == doctest::Approx(g_in.colwise().norm().sum()).epsilon(1e-12));
  }
}

TEST_CASE("training batches are drawn reproducibly and stay inside the clip") {
  std::mt19937_64 g(14);
  const SampleSet a = sample_set(normal_matrix(g, 2, 300));
  const SampleSet b = sample_set(normal_matrix(g, 2, 300, 3.0));
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.t_clip = 0.1;
  std::mt19937_64 g1(5), g2(5);
  const auto b1 = draw_training_batch(a, b, cfg, g1);
  const auto b2 = draw_training_batch(a, b, cfg, g2);
  CHECK(b1.xa == b2.xa);
  CHECK(b1.t == b2.t);
  CHECK(b1.t.minCoeff() >= 0.1);
  CHECK(b1.t.maxCoeff() <= 0.9);

  cfg.ot_pairing = true;
  cfg.ot_batch_size = 64;
  std::mt19937_64 g3(5);
  const auto paired = draw_training_batch(a, b, cfg, g3);
  std::vector<int> id(64);
  std::iota(id.begin(), id.end(), 0);
  const auto best = minibatch_ot_pairs(paired.xa, paired.xb);
  CHECK(pairing_cost(paired.xa, paired.xb, id) == doctest::Approx(pairing_cost(paired.xa, paired.xb, best)).epsilon(1e-12));
}

TEST_CASE("zero training iterations return the initialized model unchanged") {
  std::mt19937_64 g(15);
  const SampleSet a = sample_set(normal_matrix(g, 1, 100));
  const SampleSet b = sample_set(normal_matrix(g, 1, 100, 2.0));
  TrainConfig cfg;
  cfg.iterations = 0;
  cfg.hidden = {8};
  cfg.seed = 3;
  const auto init = NeuralTransport::initialize(1, cfg.hidden, cfg.activation, 77, cfg.schedule);
  const auto res = train_transport(cfg, a, b, init);
  CHECK(res.trace.empty());
  CHECK(res.model.velocity_net().flat_parameters() == init.velocity_net().flat_parameters());
  CHECK(res.model.score_net().flat_parameters() == init.score_net().flat_parameters());
}

TEST_CASE("training on a gaussian pair lowers the velocity loss") {
  const auto sa = EnergySystem::standard_gaussian(1);
  const auto sb = EnergySystem::standard_gaussian(1, 2.0);
  const SampleSet a = exact_samples(sa, 4000, 1);
  const SampleSet b = exact_samples(sb, 4000, 2);
  TrainConfig cfg;
  cfg.iterations = 2000;
  cfg.warmup_iterations = 100;
  cfg.batch_size = 64;
  cfg.learning_rate = 3e-3;
  cfg.hidden = {32, 32};
  cfg.seed = 21;
  const auto res = train_transport(cfg, a, b);
  REQUIRE(res.trace.size() == 2100);
  CHECK(std::isnan(res.trace[0].dsm));
  CHECK(std::isfinite(res.trace[100].dsm));
  auto window = [&](std::size_t from, std::size_t n, double LossRecord::*field) {
    double m = 0.0;
    for (std::size_t i = from; i < from + n; ++i) m += res.trace[i].*field;
    return m / static_cast<double>(n);
  };
  CHECK(window(2000, 100, &LossRecord::velocity) < window(0, 100, &LossRecord::velocity));

  // The trained velocity approaches the oracle's irreducible loss.
  const auto oracle = analytic_gaussian_transport(sa, sb, cfg.schedule);
  std::mt19937_64 gen(22);
  const auto zero = make_zero_transport(1);
  double trained = 0.0, best = 0.0, dsm_trained = 0.0, dsm_zero = 0.0;
  for (int k = 0; k < 50; ++k) {
    const InterpolantBatch bk = gaussian_batch(gen, 512);
    trained += loss_velocity(res.model, cfg.schedule, bk);
    best += loss_velocity(oracle, cfg.schedule, bk);
    dsm_trained += loss_score_dsm(res.model, cfg.schedule, bk);
    dsm_zero += loss_score_dsm(*zero, cfg.schedule, bk);
  }
  CHECK(dsm_trained < dsm_zero);
  CHECK(best <= trained * 1.001);
  CHECK(trained < 1.25 * best);

  // Continuing from a converged model does not raise the losses materially.
  TrainConfig more = cfg;
  more.iterations = 500;
  more.warmup_iterations = 0;
  more.seed = 23;
  const auto cont = train_transport(more, a, b, res.model);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    first += cont.trace[i].velocity;
    last += cont.trace[400 + i].velocity;
  }
  CHECK(last <= 1.1 * first);

  const std::string csv = format_loss_trace(res.trace);
  CHECK(csv.rfind("iter,loss_v,loss_dsm,loss_tsm0,loss_tsm1\n", 0) == 0);
}

TEST_CASE("training is deterministic for a fixed seed") {
  std::mt19937_64 g(16);
  const SampleSet a = exact_samples(EnergySystem::standard_gaussian(2), 200, 1);
  const SampleSet b = exact_samples(EnergySystem::standard_gaussian(2, 1.5), 200, 2);
  TrainConfig cfg;
  cfg.iterations = 30;
  cfg.warmup_iterations = 5;
  cfg.batch_size = 16;
  cfg.hidden = {8};
  cfg.seed = 4;
  cfg.ot_pairing = true;
  cfg.ot_batch_size = 16;
  const auto r1 = train_transport(cfg, a, b);
  const auto r2 = train_transport(cfg, a, b);
  CHECK(r1.model.velocity_net().flat_parameters() == r2.model.velocity_net().flat_parameters());
  CHECK(r1.model.score_net().flat_parameters() == r2.model.score_net().flat_parameters());
}

TEST_CASE("training aborts with the iteration index on non-finite losses") {
  SampleSet a = sample_set(Matrix::Constant(1, 10, 1e300));
  SampleSet b = sample_set(Matrix::Constant(1, 10, -1e300));
  TrainConfig cfg;
  cfg.iterations = 3;
  cfg.batch_size = 4;
  cfg.hidden = {4};
  try {
    train_transport(cfg, a, b);
    FAIL("non-finite training accepted");
  } catch (const NumericalError& e) {
    CHECK(e.code() == "non-finite-loss");
    CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
  }
}
