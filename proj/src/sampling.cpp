#include "feat/sampling.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "feat/io.hpp"

namespace feat {

void SampleSet::validate() const {
  if (grads) {
    if (grads->rows() != samples.rows() || grads->cols() != samples.cols()) {
      throw ShapeError("sample gradients do not match sample shape");
    }
    if (!grads->allFinite()) throw NumericalError("non-finite sample gradient");
  }
  if (!samples.allFinite()) throw NumericalError("non-finite sample");
}

double mala_log_acceptance(const EnergyFunction& sys, const VectorRef& x, const VectorRef& proposal,
                           double step_size) {
  const double ux = sys.energy(x);
  const double up = sys.energy(proposal);
  if (!std::isfinite(up)) return -std::numeric_limits<double>::infinity();
  const Vector gx = sys.gradient(x);
  const Vector gp = sys.gradient(proposal);
  if (!gp.allFinite()) return -std::numeric_limits<double>::infinity();
  const double fwd = (proposal - x + step_size * gx).squaredNorm();
  const double bwd = (x - proposal + step_size * gp).squaredNorm();
  const double log_ratio = -(up - ux) - (bwd - fwd) / (4.0 * step_size);
  return std::min(0.0, log_ratio);
}

MalaRun mala_chain(const EnergyFunction& sys, const MalaConfig& cfg, const VectorRef& x0) {
  require_dim(x0.size(), sys.dim(), "mala initial state");
  if (!(cfg.burn_in_fraction >= 0.0 && cfg.burn_in_fraction < 1.0)) {
    throw ConfigError("burn-in fraction must lie in [0, 1)");
  }
  if (!(cfg.step_size > 0.0)) throw ConfigError("mala step size must be > 0");
  if (cfg.steps <= 0 || cfg.thin <= 0 || cfg.adaptation_window <= 0) {
    throw ConfigError("mala steps, thinning and window must be positive");
  }

  Vector x = x0;
  double ux = sys.energy(x);
  Vector gx = sys.gradient(x);
  if (!std::isfinite(ux) || !gx.allFinite()) {
    throw NumericalError("mala initial state has non-finite energy", "mala-init");
  }

  const long burn_in = static_cast<long>(std::floor(cfg.burn_in_fraction * cfg.steps));
  const long kept = (cfg.steps - burn_in + cfg.thin - 1) / cfg.thin;

  std::mt19937_64 gen(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  MalaRun run;
  run.set.samples.resize(sys.dim(), kept);
  run.set.grads = Matrix(sys.dim(), kept);
  run.set.seed = cfg.seed;
  run.set.chain_length = cfg.steps;

  double h = cfg.step_size;
  long window_accepts = 0;
  long window_steps = 0;
  long post_accepts = 0;
  Eigen::Index stored = 0;
  Vector prop(sys.dim());
  Vector gp(sys.dim());

  for (long step = 0; step < cfg.steps; ++step) {
    for (Eigen::Index i = 0; i < prop.size(); ++i) prop(i) = normal(gen);
    prop = x - h * gx + std::sqrt(2.0 * h) * prop;
    const double up = sys.energy(prop);
    bool accept = false;
    if (std::isfinite(up)) {
      sys.energy_grad(prop, gp);
      if (gp.allFinite()) {
        const double fwd = (prop - x + h * gx).squaredNorm();
        const double bwd = (x - prop + h * gp).squaredNorm();
        const double log_ratio = -(up - ux) - (bwd - fwd) / (4.0 * h);
        accept = log_ratio >= 0.0 || std::log(uniform(gen)) < log_ratio;
      }
    }
    if (accept) {
      x.swap(prop);
      gx.swap(gp);
      ux = up;
    }

    if (step < burn_in) {
      window_accepts += accept;
      if (++window_steps == cfg.adaptation_window) {
        const double rate = static_cast<double>(window_accepts) / window_steps;
        h *= std::exp(cfg.adaptation_gain * (rate - cfg.target_acceptance));
        window_accepts = 0;
        window_steps = 0;
      }
      continue;
    }
    post_accepts += accept;
    if ((step - burn_in) % cfg.thin == 0) {
      run.set.samples.col(stored) = x;
      run.set.grads->col(stored) = gx;
      ++stored;
    }
  }
  run.acceptance_rate = static_cast<double>(post_accepts) / static_cast<double>(cfg.steps - burn_in);
  run.step_size = h;
  return run;
}

void attach_gradients(const EnergyFunction& sys, SampleSet& set) {
  require_dim(set.dim(), sys.dim(), "attach_gradients");
  Matrix g(set.dim(), set.size());
  for (Eigen::Index n = 0; n < set.size(); ++n) sys.energy_grad(set.samples.col(n), g.col(n));
  set.grads = std::move(g);
}

SampleSet exact_samples(const EnergySystem& sys, Eigen::Index count, std::uint64_t seed) {
  auto draws = sys.sample_exact(count, seed);
  if (!draws) throw ConfigError("system kind '" + sys.kind() + "' has no exact sampler");
  SampleSet set;
  set.samples = std::move(*draws);
  set.system = sys.kind();
  set.seed = seed;
  set.chain_length = count;
  attach_gradients(sys, set);
  return set;
}

Vector lj_initial_configuration(const LjClusterParams& p, std::uint64_t seed) {
  int side = 1;
  while (side * side * side < p.particles) ++side;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  const double spacing = 1.1 * p.sigma;
  Vector x(3 * p.particles);
  for (int n = 0; n < p.particles; ++n) {
    const int i = n % side, j = (n / side) % side, k = n / (side * side);
    x(3 * n) = spacing * i + jitter(gen) * p.sigma;
    x(3 * n + 1) = spacing * j + jitter(gen) * p.sigma;
    x(3 * n + 2) = spacing * k + jitter(gen) * p.sigma;
  }
  return x;
}

std::string format_samples(const SampleSet& set) {
  set.validate();
  std::ostringstream out;
  out << "feat-samples v1 dim=" << set.dim() << " n=" << set.size() << " grads=" << (set.grads ? 1 : 0);
  if (!set.system.empty()) {
    out << " system=" << set.system << " seed=" << set.seed << " steps=" << set.chain_length;
  }
  out << '\n';
  for (Eigen::Index n = 0; n < set.size(); ++n) {
    for (Eigen::Index i = 0; i < set.dim(); ++i) out << (i ? " " : "") << io::format_real(set.samples(i, n));
    if (set.grads) {
      for (Eigen::Index i = 0; i < set.dim(); ++i) out << ' ' << io::format_real((*set.grads)(i, n));
    }
    out << '\n';
  }
  return out.str();
}

SampleSet parse_samples(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty sample file", 1);
  auto tokens = io::split_whitespace(line);
  if (tokens.size() < 2 || tokens[0] != "feat-samples" || tokens[1] != "v1") {
    throw ParseError("sample header must start with 'feat-samples v1'", 1);
  }
  auto keys = io::parse_header_keys(line, 2, 1);
  for (const char* k : {"dim", "n", "grads"}) {
    if (!keys.count(k)) throw ParseError(std::string("sample header missing '") + k + "'", 1);
  }
  auto dim = io::parse_integer(keys["dim"]);
  auto count = io::parse_integer(keys["n"]);
  auto grads = io::parse_integer(keys["grads"]);
  if (!dim || *dim <= 0 || !count || *count < 0 || !grads || (*grads != 0 && *grads != 1)) {
    throw ParseError("malformed sample header values", 1);
  }
  SampleSet set;
  if (keys.count("system")) set.system = keys["system"];
  if (keys.count("seed")) {
    auto s = io::parse_unsigned(keys["seed"]);
    if (!s) throw ParseError("malformed seed", 1);
    set.seed = *s;
  }
  if (keys.count("steps")) {
    auto s = io::parse_integer(keys["steps"]);
    if (!s) throw ParseError("malformed steps", 1);
    set.chain_length = static_cast<long>(*s);
  }
  const Eigen::Index d = *dim;
  const Eigen::Index n = *count;
  const Eigen::Index width = *grads ? 2 * d : d;
  set.samples.resize(d, n);
  if (*grads) set.grads = Matrix(d, n);

  long line_no = 1;
  Eigen::Index row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = io::split_whitespace(line);
    if (fields.empty()) continue;
    if (row >= n) throw ParseError("more data lines than n=" + std::to_string(n), line_no);
    if (static_cast<Eigen::Index>(fields.size()) != width) {
      throw ParseError("expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    for (Eigen::Index i = 0; i < width; ++i) {
      auto v = io::parse_real(fields[i]);
      if (!v) throw ParseError("non-numeric field '" + std::string(fields[i]) + "'", line_no);
      if (!std::isfinite(*v)) throw ParseError("non-finite value", line_no);
      if (i < d) {
        set.samples(i, row) = *v;
      } else {
        (*set.grads)(i - d, row) = *v;
      }
    }
    ++row;
  }
  if (row != n) {
    throw ParseError("expected " + std::to_string(n) + " data lines, found " + std::to_string(row), line_no);
  }
  return set;
}

void write_samples(const std::filesystem::path& path, const SampleSet& set) {
  io::write_file_atomic(path, format_samples(set));
}

SampleSet read_samples(const std::filesystem::path& path) { return parse_samples(io::read_file(path)); }

}  // namespace feat
