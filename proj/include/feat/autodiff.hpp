#pragma once

#include <cstddef>
#include <initializer_list>
#include <string_view>
#include <vector>

#include "feat/core.hpp"

namespace feat::ad {

/// Smooth activations only; hidden layers must be C1 so learned scores stay continuous.
enum class Activation { kGelu, kSoftplus, kTanh };

std::string_view activation_name(Activation act);
Activation parse_activation(std::string_view name);

/// Elementwise activation value and derivative.
void activate(Activation act, const Matrix& z, Matrix& out);
void activate_derivative(Activation act, const Matrix& z, Matrix& out);

/// Primitives understood by the tape. Values are matrices whose columns are
/// batch elements; reductions produce 1x1 matrices.
enum class Op {
  kLeaf,
  kAffine,        // W x + b (b broadcast over columns); inputs (W, b, x)
  kActivation,    // act(x)
  kAdd,
  kSub,
  kHadamard,
  kSquare,
  kSum,
  kMean,
  kScale,         // attrs.scalar * x
  kScaleColumns,  // x * diag(attrs.column_weights)
};

struct OpAttrs {
  double scalar = 1.0;
  Activation activation = Activation::kGelu;
  Vector column_weights;
};

struct NodeId {
  std::size_t index = 0;
};

/// Reverse-mode tape. Build the computation forward with the primitives, then
/// call backward() on a 1x1 node; gradients are available for every node that
/// depends on a parameter leaf.
class Tape {
 public:
  NodeId constant(Matrix value);
  NodeId parameter(Matrix value);

  /// Generic entry point; throws ConfigError for unsupported ops or bad arity.
  NodeId apply(Op op, std::initializer_list<NodeId> inputs, OpAttrs attrs = {});

  NodeId affine(NodeId weight, NodeId bias, NodeId x) { return apply(Op::kAffine, {weight, bias, x}); }
  NodeId activation(NodeId x, Activation act) {
    OpAttrs a;
    a.activation = act;
    return apply(Op::kActivation, {x}, std::move(a));
  }
  NodeId add(NodeId a, NodeId b) { return apply(Op::kAdd, {a, b}); }
  NodeId sub(NodeId a, NodeId b) { return apply(Op::kSub, {a, b}); }
  NodeId hadamard(NodeId a, NodeId b) { return apply(Op::kHadamard, {a, b}); }
  NodeId square(NodeId x) { return apply(Op::kSquare, {x}); }
  NodeId sum(NodeId x) { return apply(Op::kSum, {x}); }
  NodeId mean(NodeId x) { return apply(Op::kMean, {x}); }
  NodeId scale(NodeId x, double s) {
    OpAttrs a;
    a.scalar = s;
    return apply(Op::kScale, {x}, std::move(a));
  }
  NodeId scale_columns(NodeId x, Vector weights) {
    OpAttrs a;
    a.column_weights = std::move(weights);
    return apply(Op::kScaleColumns, {x}, std::move(a));
  }

  const Matrix& value(NodeId id) const { return nodes_.at(id.index).value; }
  double scalar(NodeId id) const;

  void backward(NodeId root);
  /// Gradient of the last backward() root with respect to this node.
  const Matrix& gradient(NodeId id) const { return nodes_.at(id.index).grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::size_t inputs[3] = {0, 0, 0};
    int arity = 0;
    bool tracks_grad = false;
    OpAttrs attrs;
    Matrix value;
    Matrix grad;
  };

  NodeId push(Node node);

  std::vector<Node> nodes_;
};

}  // namespace feat::ad
