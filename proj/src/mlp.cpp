#include "feat/mlp.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "feat/io.hpp"

namespace feat {

void time_embedding(double t, Eigen::Ref<Eigen::VectorXd> out) {
  double freq = std::numbers::pi;
  for (int k = 0; k < kTimeEmbeddingWidth / 2; ++k) {
    out(2 * k) = std::sin(freq * t);
    out(2 * k + 1) = std::cos(freq * t);
    freq *= 2.0;
  }
}

Matrix embed_inputs(const Matrix& x, const Vector& times) {
  require_dim(times.size(), x.cols(), "embed_inputs times");
  Matrix out(x.rows() + kTimeEmbeddingWidth, x.cols());
  out.topRows(x.rows()) = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    time_embedding(times(j), out.col(j).tail(kTimeEmbeddingWidth));
  }
  return out;
}

Matrix embed_inputs(const Matrix& x, double t) {
  Matrix out(x.rows() + kTimeEmbeddingWidth, x.cols());
  out.topRows(x.rows()) = x;
  Vector emb(kTimeEmbeddingWidth);
  time_embedding(t, emb);
  out.bottomRows(kTimeEmbeddingWidth).colwise() = emb;
  return out;
}

Mlp::Mlp(std::vector<int> widths, ad::Activation activation)
    : widths_(std::move(widths)), activation_(activation) {
  if (widths_.size() < 2) throw ConfigError("mlp needs at least input and output widths");
  for (int w : widths_) {
    if (w <= 0) throw ConfigError("mlp widths must be positive");
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    layers_.push_back({Matrix::Zero(widths_[l + 1], widths_[l]), Vector::Zero(widths_[l + 1])});
  }
}

Mlp Mlp::random(std::vector<int> widths, ad::Activation activation, std::uint64_t seed,
                bool zero_output) {
  Mlp net(std::move(widths), activation);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    DenseLayer& layer = net.layers_[l];
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = scale * normal(gen);
    if (zero_output && l + 1 == net.layers_.size()) layer.weight.setZero();
  }
  return net;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

// Flat order: per layer, weight row-major then bias.
Vector Mlp::flat_parameters() const {
  Vector flat(parameter_count());
  Eigen::Index k = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat(k++) = l.weight(r, c);
    }
    flat.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  return flat;
}

void Mlp::set_flat_parameters(const Vector& flat) {
  require_dim(flat.size(), static_cast<Eigen::Index>(parameter_count()), "mlp parameters");
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat(k++);
    }
    l.bias = flat.segment(k, l.bias.size());
    k += l.bias.size();
  }
}

Matrix Mlp::forward(const Matrix& inputs) const {
  require_dim(inputs.rows(), input_width(), "mlp input");
  Matrix h = inputs;
  Matrix z;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    z.noalias() = layers_[l].weight * h;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) {
      activate(activation_, z, h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Matrix Mlp::jvp(const Matrix& inputs, const Matrix& tangents) const {
  require_dim(inputs.rows(), input_width(), "mlp input");
  if (tangents.rows() != inputs.rows() || tangents.cols() != inputs.cols()) {
    throw ShapeError("mlp jvp: tangent shape mismatch");
  }
  Matrix h = inputs;
  Matrix dh = tangents;
  Matrix z, dz, slope;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    z.noalias() = layers_[l].weight * h;
    z.colwise() += layers_[l].bias;
    dz.noalias() = layers_[l].weight * dh;
    if (l + 1 < layers_.size()) {
      activate(activation_, z, h);
      activate_derivative(activation_, z, slope);
      dh = dz.cwiseProduct(slope);
    } else {
      dh = std::move(dz);
    }
  }
  return dh;
}

std::vector<ad::NodeId> Mlp::add_parameters(ad::Tape& tape) const {
  std::vector<ad::NodeId> params;
  for (const auto& layer : layers_) {
    params.push_back(tape.parameter(layer.weight));
    params.push_back(tape.parameter(layer.bias));
  }
  return params;
}

ad::NodeId Mlp::record(ad::Tape& tape, ad::NodeId input, const std::vector<ad::NodeId>& params) const {
  if (params.size() != 2 * layers_.size()) throw ShapeError("mlp record: leaf count mismatch");
  ad::NodeId h = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = tape.affine(params[2 * l], params[2 * l + 1], h);
    if (l + 1 < layers_.size()) h = tape.activation(h, activation_);
  }
  return h;
}

Vector Mlp::gather_gradient(const ad::Tape& tape, const std::vector<ad::NodeId>& params) const {
  if (params.size() != 2 * layers_.size()) throw ShapeError("gather_gradient: leaf count mismatch");
  Vector flat = Vector::Zero(parameter_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Matrix& gw = tape.gradient(params[2 * l]);
    const Matrix& gb = tape.gradient(params[2 * l + 1]);
    const auto& w = layers_[l].weight;
    if (gw.size() != 0) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) flat(k + r * w.cols() + c) = gw(r, c);
      }
    }
    k += w.size();
    if (gb.size() != 0) flat.segment(k, gb.rows()) = gb.col(0);
    k += layers_[l].bias.size();
  }
  return flat;
}

Vector mlp_forward(const Mlp& net, const Vector& x, double t) {
  require_dim(x.size() + kTimeEmbeddingWidth, net.input_width(), "mlp_forward input");
  Matrix col = x;
  return net.forward(embed_inputs(col, t)).col(0);
}

Matrix mlp_forward_batch(const Mlp& net, const Matrix& x, double t) {
  require_dim(x.rows() + kTimeEmbeddingWidth, net.input_width(), "mlp_forward input");
  return net.forward(embed_inputs(x, t));
}

namespace {

std::string_view kind_name(ModelKind k) { return k == ModelKind::kVelocity ? "velocity" : "score"; }

}  // namespace

std::string format_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream out;
  out << "feat-model v1 kind=" << kind_name(ckpt.kind) << " dim=" << ckpt.dim << " layers=";
  const auto& w = ckpt.net.widths();
  for (std::size_t i = 0; i < w.size(); ++i) out << (i ? "," : "") << w[i];
  if (ckpt.net.activation() != ad::Activation::kGelu) {
    out << " act=" << ad::activation_name(ckpt.net.activation());
  }
  out << '\n';
  const Vector flat = ckpt.net.flat_parameters();
  for (Eigen::Index i = 0; i < flat.size(); ++i) out << io::format_real(flat(i)) << '\n';
  return out.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty checkpoint", 1);
  auto tokens = io::split_whitespace(line);
  if (tokens.size() < 2 || tokens[0] != "feat-model" || tokens[1] != "v1") {
    throw ParseError("checkpoint header must start with 'feat-model v1'", 1);
  }
  auto keys = io::parse_header_keys(line, 2, 1);
  for (const char* k : {"kind", "dim", "layers"}) {
    if (!keys.count(k)) throw ParseError(std::string("checkpoint header missing '") + k + "'", 1);
  }
  Checkpoint ckpt;
  if (keys["kind"] == "velocity") {
    ckpt.kind = ModelKind::kVelocity;
  } else if (keys["kind"] == "score") {
    ckpt.kind = ModelKind::kScore;
  } else {
    throw ParseError("unknown model kind '" + keys["kind"] + "'", 1);
  }
  auto dim = io::parse_integer(keys["dim"]);
  if (!dim || *dim <= 0) throw ParseError("bad dim", 1);
  ckpt.dim = static_cast<int>(*dim);
  std::vector<int> widths;
  for (auto tok : io::split(keys["layers"], ',')) {
    auto w = io::parse_integer(tok);
    if (!w || *w <= 0) throw ParseError("bad layer width '" + std::string(tok) + "'", 1);
    widths.push_back(static_cast<int>(*w));
  }
  ad::Activation act = ad::Activation::kGelu;
  if (keys.count("act")) act = ad::parse_activation(keys["act"]);
  if (widths.size() < 2 || widths.front() != ckpt.dim + kTimeEmbeddingWidth ||
      widths.back() != ckpt.dim) {
    throw ParseError("layer widths inconsistent with dim", 1);
  }
  ckpt.net = Mlp(widths, act);
  Vector flat(ckpt.net.parameter_count());
  long line_no = 1;
  Eigen::Index k = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (k >= flat.size()) throw ParseError("too many parameters", line_no);
    auto v = io::parse_real(line);
    if (!v || !std::isfinite(*v)) throw ParseError("non-numeric or non-finite parameter", line_no);
    flat(k++) = *v;
  }
  if (k != flat.size()) {
    throw ParseError("expected " + std::to_string(flat.size()) + " parameters, found " +
                         std::to_string(k),
                     line_no);
  }
  ckpt.net.set_flat_parameters(flat);
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file_atomic(path, format_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path));
}

}  // namespace feat
