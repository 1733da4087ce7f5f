#include "feat/model.hpp"

#include <cmath>
#include <limits>

namespace feat {

double Schedule::gamma(double t) const {
  const double v = noise * t * (1.0 - t);
  return v > 0.0 ? std::sqrt(v) : 0.0;
}

double Schedule::gamma_dot(double t) const {
  if (noise == 0.0) return 0.0;
  const double g = gamma(t);
  if (g == 0.0) return (t <= 0.5 ? 1.0 : -1.0) * std::numeric_limits<double>::infinity();
  return gamma_gamma_dot(t) / g;
}

void TransportModel::velocity_at(const Matrix& x, const Vector& times, Matrix& out) const {
  require_dim(times.size(), x.cols(), "velocity_at times");
  out.resize(x.rows(), x.cols());
  Matrix col, res;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    col = x.col(j);
    velocity(col, times(j), res);
    out.col(j) = res.col(0);
  }
}

void TransportModel::score_at(const Matrix& x, const Vector& times, Matrix& out) const {
  require_dim(times.size(), x.cols(), "score_at times");
  out.resize(x.rows(), x.cols());
  Matrix col, res;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    col = x.col(j);
    score(col, times(j), res);
    out.col(j) = res.col(0);
  }
}

void TransportModel::set_sigma(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("diffusion level must be finite and >= 0");
  sigma_ = sigma;
  sigma_fn_ = nullptr;
}

void TransportModel::set_sigma(std::function<double(double)> sigma_fn) { sigma_fn_ = std::move(sigma_fn); }

NeuralTransport::NeuralTransport(Mlp velocity_net, Mlp score_net, Schedule schedule)
    : velocity_net_(std::move(velocity_net)),
      score_net_(std::move(score_net)),
      schedule_(schedule),
      dim_(velocity_net_.output_width()) {
  for (const Mlp* net : {&velocity_net_, &score_net_}) {
    if (net->output_width() != dim_ || net->input_width() != dim_ + kTimeEmbeddingWidth) {
      throw ShapeError("transport networks must map R^d x [0,1] to R^d");
    }
  }
}

NeuralTransport NeuralTransport::initialize(int dim, const std::vector<int>& hidden, ad::Activation act,
                                            std::uint64_t seed, Schedule schedule, bool zero_output) {
  std::vector<int> widths;
  widths.push_back(dim + kTimeEmbeddingWidth);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(dim);
  return NeuralTransport(Mlp::random(widths, act, derive_seed(seed, "velocity-init"), zero_output),
                         Mlp::random(widths, act, derive_seed(seed, "score-init"), zero_output), schedule);
}

void NeuralTransport::velocity(const Matrix& x, double t, Matrix& out) const {
  out = velocity_net_.forward(embed_inputs(x, t));
}

void NeuralTransport::score(const Matrix& x, double t, Matrix& out) const {
  out = score_net_.forward(embed_inputs(x, t));
}

Matrix NeuralTransport::velocity_jvp(const Matrix& x, double t, const Matrix& tangents) const {
  require_dim(tangents.rows(), dim_, "velocity_jvp tangents");
  Matrix full = Matrix::Zero(dim_ + kTimeEmbeddingWidth, tangents.cols());
  full.topRows(dim_) = tangents;
  return velocity_net_.jvp(embed_inputs(x, t), full);
}

void NeuralTransport::velocity_at(const Matrix& x, const Vector& times, Matrix& out) const {
  out = velocity_net_.forward(embed_inputs(x, times));
}

void NeuralTransport::score_at(const Matrix& x, const Vector& times, Matrix& out) const {
  out = score_net_.forward(embed_inputs(x, times));
}

FunctionTransport::FunctionTransport(Eigen::Index dim, Field velocity, Field score, Jvp velocity_jvp)
    : dim_(dim), velocity_(std::move(velocity)), score_(std::move(score)), jvp_(std::move(velocity_jvp)) {
  if (!velocity_ || !score_) throw ConfigError("function transport needs both fields");
}

void FunctionTransport::velocity(const Matrix& x, double t, Matrix& out) const {
  require_dim(x.rows(), dim_, "velocity");
  out.resize(dim_, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = velocity_(x.col(j), t);
}

void FunctionTransport::score(const Matrix& x, double t, Matrix& out) const {
  require_dim(x.rows(), dim_, "score");
  out.resize(dim_, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = score_(x.col(j), t);
}

Matrix FunctionTransport::velocity_jvp(const Matrix& x, double t, const Matrix& tangents) const {
  Matrix out(dim_, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Vector xj = x.col(j);
    const Vector uj = tangents.col(j);
    if (jvp_) {
      out.col(j) = jvp_(xj, t, uj);
    } else {
      constexpr double h = 1e-6;
      out.col(j) = (velocity_(xj + h * uj, t) - velocity_(xj - h * uj, t)) / (2.0 * h);
    }
  }
  return out;
}

std::unique_ptr<FunctionTransport> make_zero_transport(Eigen::Index dim) {
  auto zero = [dim](const Vector&, double) { return Vector::Zero(dim).eval(); };
  auto zero_jvp = [dim](const Vector&, double, const Vector&) { return Vector::Zero(dim).eval(); };
  return std::make_unique<FunctionTransport>(dim, zero, zero, zero_jvp);
}

}  // namespace feat
