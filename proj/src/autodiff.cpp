#include "feat/autodiff.hpp"

#include <cmath>
#include <numbers>

namespace feat::ad {

std::string_view activation_name(Activation act) {
  switch (act) {
    case Activation::kGelu: return "gelu";
    case Activation::kSoftplus: return "softplus";
    case Activation::kTanh: return "tanh";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "gelu") return Activation::kGelu;
  if (name == "softplus") return Activation::kSoftplus;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

namespace {

double gelu(double x) { return 0.5 * x * std::erfc(-x / std::numbers::sqrt2); }

double gelu_prime(double x) {
  const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void activate(Activation act, const Matrix& z, Matrix& out) {
  switch (act) {
    case Activation::kGelu: out = z.unaryExpr(&gelu); break;
    case Activation::kSoftplus: out = z.unaryExpr(&softplus); break;
    case Activation::kTanh: out = z.array().tanh().matrix(); break;
  }
}

void activate_derivative(Activation act, const Matrix& z, Matrix& out) {
  switch (act) {
    case Activation::kGelu: out = z.unaryExpr(&gelu_prime); break;
    case Activation::kSoftplus: out = z.unaryExpr(&sigmoid); break;
    case Activation::kTanh: out = (1.0 - z.array().tanh().square()).matrix(); break;
  }
}

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return NodeId{nodes_.size() - 1};
}

NodeId Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::parameter(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.tracks_grad = true;
  return push(std::move(n));
}

double Tape::scalar(NodeId id) const {
  const Matrix& v = value(id);
  if (v.size() != 1) throw ShapeError("tape node is not a scalar");
  return v(0, 0);
}

NodeId Tape::apply(Op op, std::initializer_list<NodeId> inputs, OpAttrs attrs) {
  int want = 0;
  switch (op) {
    case Op::kAffine: want = 3; break;
    case Op::kAdd:
    case Op::kSub:
    case Op::kHadamard: want = 2; break;
    case Op::kActivation:
    case Op::kSquare:
    case Op::kSum:
    case Op::kMean:
    case Op::kScale:
    case Op::kScaleColumns: want = 1; break;
    default:
      throw ConfigError("unsupported tape primitive " + std::to_string(static_cast<int>(op)),
                        "unsupported-primitive");
  }
  if (static_cast<int>(inputs.size()) != want) {
    throw ConfigError("tape primitive arity mismatch", "unsupported-primitive");
  }

  Node n;
  n.op = op;
  n.arity = want;
  int k = 0;
  for (NodeId id : inputs) {
    if (id.index >= nodes_.size()) throw ConfigError("tape input refers to a missing node");
    n.inputs[k++] = id.index;
    n.tracks_grad = n.tracks_grad || nodes_[id.index].tracks_grad;
  }
  n.attrs = std::move(attrs);

  auto in = [&](int i) -> const Matrix& { return nodes_[n.inputs[i]].value; };
  switch (op) {
    case Op::kAffine: {
      const Matrix& w = in(0);
      const Matrix& b = in(1);
      const Matrix& x = in(2);
      if (w.cols() != x.rows() || b.rows() != w.rows() || b.cols() != 1) {
        throw ShapeError("affine: incompatible shapes");
      }
      n.value = w * x;
      n.value.colwise() += b.col(0);
      break;
    }
    case Op::kActivation: activate(n.attrs.activation, in(0), n.value); break;
    case Op::kAdd:
    case Op::kSub:
    case Op::kHadamard:
      if (in(0).rows() != in(1).rows() || in(0).cols() != in(1).cols()) {
        throw ShapeError("elementwise op: shape mismatch");
      }
      if (op == Op::kAdd) n.value = in(0) + in(1);
      if (op == Op::kSub) n.value = in(0) - in(1);
      if (op == Op::kHadamard) n.value = in(0).cwiseProduct(in(1));
      break;
    case Op::kSquare: n.value = in(0).array().square().matrix(); break;
    case Op::kSum: n.value = Matrix::Constant(1, 1, in(0).sum()); break;
    case Op::kMean:
      if (in(0).size() == 0) throw ShapeError("mean of empty node");
      n.value = Matrix::Constant(1, 1, in(0).mean());
      break;
    case Op::kScale: n.value = n.attrs.scalar * in(0); break;
    case Op::kScaleColumns:
      if (n.attrs.column_weights.size() != in(0).cols()) {
        throw ShapeError("scale_columns: weight count mismatch");
      }
      n.value = in(0) * n.attrs.column_weights.asDiagonal();
      break;
    default: break;
  }
  return push(std::move(n));
}

void Tape::backward(NodeId root) {
  if (root.index >= nodes_.size()) throw ConfigError("backward: missing root");
  if (nodes_[root.index].value.size() != 1) throw ShapeError("backward root must be scalar");
  for (Node& n : nodes_) n.grad.resize(0, 0);

  auto touch = [&](std::size_t idx) -> Matrix& {
    Node& n = nodes_[idx];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  };
  touch(root.index)(0, 0) = 1.0;

  for (std::size_t i = root.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.tracks_grad || n.grad.size() == 0 || n.op == Op::kLeaf) continue;
    const Matrix& g = n.grad;
    auto wants = [&](int k) { return nodes_[n.inputs[k]].tracks_grad; };
    auto val = [&](int k) -> const Matrix& { return nodes_[n.inputs[k]].value; };
    switch (n.op) {
      case Op::kAffine:
        if (wants(0)) touch(n.inputs[0]).noalias() += g * val(2).transpose();
        if (wants(1)) touch(n.inputs[1]).col(0) += g.rowwise().sum();
        if (wants(2)) touch(n.inputs[2]).noalias() += val(0).transpose() * g;
        break;
      case Op::kActivation:
        if (wants(0)) {
          Matrix d;
          activate_derivative(n.attrs.activation, val(0), d);
          touch(n.inputs[0]) += g.cwiseProduct(d);
        }
        break;
      case Op::kAdd:
        if (wants(0)) touch(n.inputs[0]) += g;
        if (wants(1)) touch(n.inputs[1]) += g;
        break;
      case Op::kSub:
        if (wants(0)) touch(n.inputs[0]) += g;
        if (wants(1)) touch(n.inputs[1]) -= g;
        break;
      case Op::kHadamard:
        if (wants(0)) touch(n.inputs[0]) += g.cwiseProduct(val(1));
        if (wants(1)) touch(n.inputs[1]) += g.cwiseProduct(val(0));
        break;
      case Op::kSquare:
        if (wants(0)) touch(n.inputs[0]) += 2.0 * val(0).cwiseProduct(g);
        break;
      case Op::kSum:
        if (wants(0)) touch(n.inputs[0]).array() += g(0, 0);
        break;
      case Op::kMean:
        if (wants(0)) touch(n.inputs[0]).array() += g(0, 0) / static_cast<double>(val(0).size());
        break;
      case Op::kScale:
        if (wants(0)) touch(n.inputs[0]) += n.attrs.scalar * g;
        break;
      case Op::kScaleColumns:
        if (wants(0)) touch(n.inputs[0]) += g * n.attrs.column_weights.asDiagonal();
        break;
      default: break;
    }
  }
}

}  // namespace feat::ad
