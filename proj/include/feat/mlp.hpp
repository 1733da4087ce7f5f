#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "feat/autodiff.hpp"
#include "feat/core.hpp"

namespace feat {

/// Width of the sinusoidal time features appended to every network input.
inline constexpr int kTimeEmbeddingWidth = 8;

/// Writes [sin(pi 2^k t), cos(pi 2^k t)] for k = 0..3 into `out`.
void time_embedding(double t, Eigen::Ref<Eigen::VectorXd> out);

/// Stacks each column of `x` with the embedding of its time.
Matrix embed_inputs(const Matrix& x, const Vector& times);
Matrix embed_inputs(const Matrix& x, double t);

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Multilayer perceptron with a linear output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> widths, ad::Activation activation);

  /// Normal(0, 1/fan_in) weights, zero biases. With `zero_output` the last
  /// layer starts at exactly zero, so the network is identically zero.
  static Mlp random(std::vector<int> widths, ad::Activation activation, std::uint64_t seed,
                    bool zero_output = false);

  const std::vector<int>& widths() const { return widths_; }
  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  ad::Activation activation() const { return activation_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const;
  Vector flat_parameters() const;
  void set_flat_parameters(const Vector& flat);

  /// Forward pass on already-embedded inputs (one column per batch element).
  Matrix forward(const Matrix& inputs) const;

  /// Jacobian-vector products: column j of the result is J(inputs_j) tangents_j.
  Matrix jvp(const Matrix& inputs, const Matrix& tangents) const;

  /// Parameter leaves on a tape, in flat-parameter order (per layer: weight, bias).
  std::vector<ad::NodeId> add_parameters(ad::Tape& tape) const;

  /// Records the forward pass on a tape using leaves from add_parameters().
  /// Several passes may share one set of leaves; their gradients accumulate.
  ad::NodeId record(ad::Tape& tape, ad::NodeId input, const std::vector<ad::NodeId>& params) const;

  /// Flattens tape gradients of the leaves created by record().
  Vector gather_gradient(const ad::Tape& tape, const std::vector<ad::NodeId>& params) const;

 private:
  std::vector<int> widths_;
  ad::Activation activation_ = ad::Activation::kGelu;
  std::vector<DenseLayer> layers_;
};

/// Network evaluated on a state x at time t.
Vector mlp_forward(const Mlp& net, const Vector& x, double t);
Matrix mlp_forward_batch(const Mlp& net, const Matrix& x, double t);

/// Checkpoint role of a network.
enum class ModelKind { kVelocity, kScore };

struct Checkpoint {
  ModelKind kind = ModelKind::kVelocity;
  int dim = 0;
  Mlp net;
};

/// Header `feat-model v1 kind=<k> dim=<d> layers=<w0,...>` then one parameter
/// per line (17 significant digits). A non-default activation is recorded as a
/// trailing ` act=<name>` token on the header.
std::string format_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace feat
