#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feat/core.hpp"
#include "feat/model.hpp"
#include "feat/sampling.hpp"

namespace feat {

struct InterpolantDraw {
  Vector value;       // I_t
  Vector derivative;  // dI_t/dt
};

/// I_t = alpha x_a + beta x_b + gamma eps and its time derivative. `clip` is
/// the allowed distance from the endpoints (0 permits t = 0 and t = 1).
InterpolantDraw draw_interpolant(const Schedule& schedule, const VectorRef& xa, const VectorRef& xb,
                                 const VectorRef& eps, double t, double clip = 1e-3);

/// Paired endpoint draws with per-element times. Columns are batch elements.
struct InterpolantBatch {
  Matrix xa;
  Matrix xb;
  Matrix eps;
  Vector t;
  std::optional<Matrix> grad_a;  // grad U_a(x_a), needed by target score matching
  std::optional<Matrix> grad_b;

  Eigen::Index size() const { return xa.cols(); }
  void validate() const;
};

Matrix interpolant_values(const Schedule& s, const InterpolantBatch& b);
Matrix interpolant_derivatives(const Schedule& s, const InterpolantBatch& b);

/// Regression targets and per-element weights for each loss, shared by the
/// plain evaluators below and the training tape.
struct LossTarget {
  Matrix inputs;   // states the network is evaluated at
  Vector times;
  Matrix target;
  Vector weights;  // loss = sum_j weights_j |pred_j - target_j|^2
};

LossTarget velocity_target(const Schedule& s, const InterpolantBatch& b);
LossTarget dsm_target(const Schedule& s, const InterpolantBatch& b);
/// Elements with t < 0.5 (`upper` false) or t >= 0.5 (`upper` true).
LossTarget tsm_target(const Schedule& s, const InterpolantBatch& b, bool upper);

/// Batch mean of |v_t(I_t) - dI_t|^2 (lambda_t = 1).
double loss_velocity(const TransportModel& model, const Schedule& s, const InterpolantBatch& b);
/// Batch mean of gamma_t |s_t(I_t) - eps / gamma_t|^2.
double loss_score_dsm(const TransportModel& model, const Schedule& s, const InterpolantBatch& b);
/// Mean over t < 0.5 of |s - grad U_a / alpha_t|^2 plus mean over t >= 0.5 of
/// |s - grad U_b / beta_t|^2; an empty half contributes 0.
double loss_score_tsm(const TransportModel& model, const Schedule& s, const InterpolantBatch& b);
double evaluate_loss(const TransportModel& model, const LossTarget& target, bool use_velocity);

/// Exact minimum-cost pairing: xb column perm[i] is paired with xa column i.
std::vector<int> minibatch_ot_pairs(const Matrix& xa, const Matrix& xb);

/// Optimal proper rotation R (det +1) minimizing |R p - q| for 3 x N clouds.
/// Returns nullopt when the cross-covariance is rank deficient (collinear clouds).
std::optional<Eigen::Matrix3d> kabsch_rotation(const Eigen::Matrix3Xd& p, const Eigen::Matrix3Xd& q);

double cloud_rmsd(const Eigen::Matrix3Xd& p, const Eigen::Matrix3Xd& q);

struct CanonicalizeReport {
  long degenerate = 0;  // samples that fell back to the identity rotation
};

/// Mean-centers every sample (a cloud of d/3 points in R^3), optionally
/// permutes its particles to the minimum-cost assignment against the centered
/// reference, then rotates it onto the reference (Kabsch). Gradients follow
/// the same permutation and rotation.
SampleSet canonicalize(const SampleSet& set, const VectorRef& reference, bool particles,
                       CanonicalizeReport* report = nullptr);

struct TrainConfig {
  long iterations = 2000;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double t_clip = 1e-3;
  bool ot_pairing = false;
  int ot_batch_size = 1000;
  bool canonicalize = false;
  bool canonicalize_particles = false;
  long warmup_iterations = 0;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {64, 64, 64};
  ad::Activation activation = ad::Activation::kGelu;
  Schedule schedule;
};

struct LossRecord {
  long iter = 0;
  double velocity = 0.0;
  double dsm = 0.0;
  double tsm0 = 0.0;
  double tsm1 = 0.0;
};

struct TrainResult {
  NeuralTransport model;
  std::vector<LossRecord> trace;
};

/// Draws one training minibatch (resampling with replacement, optional OT
/// re-pairing) with velocity/DSM times in [clip, 1 - clip].
InterpolantBatch draw_training_batch(const SampleSet& a, const SampleSet& b, const TrainConfig& cfg,
                                     std::mt19937_64& gen);

/// Trains from fresh networks seeded by cfg.seed.
TrainResult train_transport(const TrainConfig& cfg, const SampleSet& set_a, const SampleSet& set_b);

/// Continues training `initial` (which must match cfg's dimension).
TrainResult train_transport(const TrainConfig& cfg, const SampleSet& set_a, const SampleSet& set_b,
                            NeuralTransport initial);

std::string format_loss_trace(const std::vector<LossRecord>& trace);

}  // namespace feat
