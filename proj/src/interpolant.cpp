#include "feat/interpolant.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "feat/adam.hpp"
#include "feat/assignment.hpp"
#include "feat/io.hpp"

namespace feat {

InterpolantDraw draw_interpolant(const Schedule& s, const VectorRef& xa, const VectorRef& xb,
                                 const VectorRef& eps, double t, double clip) {
  require_dim(xb.size(), xa.size(), "draw_interpolant x_b");
  require_dim(eps.size(), xa.size(), "draw_interpolant eps");
  if (!(clip >= 0.0 && clip < 0.5) || !(t >= clip && t <= 1.0 - clip)) {
    throw RangeError("interpolant time " + io::format_real(t) + " outside [" + io::format_real(clip) + ", " +
                     io::format_real(1.0 - clip) + "]");
  }
  InterpolantDraw d;
  d.value = s.alpha(t) * xa + s.beta(t) * xb + s.gamma(t) * eps;
  d.derivative = s.alpha_dot(t) * xa + s.beta_dot(t) * xb;
  if (s.noise != 0.0) d.derivative += s.gamma_dot(t) * eps;
  return d;
}

void InterpolantBatch::validate() const {
  const Eigen::Index n = xa.cols();
  const Eigen::Index d = xa.rows();
  if (xb.rows() != d || xb.cols() != n || eps.rows() != d || eps.cols() != n || t.size() != n) {
    throw ShapeError("interpolant batch: inconsistent shapes");
  }
  if (grad_a && (grad_a->rows() != d || grad_a->cols() != n)) throw ShapeError("batch grad_a shape");
  if (grad_b && (grad_b->rows() != d || grad_b->cols() != n)) throw ShapeError("batch grad_b shape");
}

Matrix interpolant_values(const Schedule& s, const InterpolantBatch& b) {
  b.validate();
  Matrix out(b.xa.rows(), b.size());
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double t = b.t(j);
    out.col(j) = s.alpha(t) * b.xa.col(j) + s.beta(t) * b.xb.col(j) + s.gamma(t) * b.eps.col(j);
  }
  return out;
}

Matrix interpolant_derivatives(const Schedule& s, const InterpolantBatch& b) {
  b.validate();
  Matrix out(b.xa.rows(), b.size());
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double t = b.t(j);
    out.col(j) = s.alpha_dot(t) * b.xa.col(j) + s.beta_dot(t) * b.xb.col(j);
    if (s.noise != 0.0) out.col(j) += s.gamma_dot(t) * b.eps.col(j);
  }
  return out;
}

LossTarget velocity_target(const Schedule& s, const InterpolantBatch& b) {
  LossTarget lt;
  lt.inputs = interpolant_values(s, b);
  lt.times = b.t;
  lt.target = interpolant_derivatives(s, b);
  lt.weights = Vector::Constant(b.size(), b.size() ? 1.0 / static_cast<double>(b.size()) : 0.0);
  return lt;
}

LossTarget dsm_target(const Schedule& s, const InterpolantBatch& b) {
  LossTarget lt;
  lt.inputs = interpolant_values(s, b);
  lt.times = b.t;
  lt.target.resize(b.xa.rows(), b.size());
  lt.weights.resize(b.size());
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double g = s.gamma(b.t(j));
    if (!(g > 0.0)) throw RangeError("denoising score matching sampled a time with gamma_t = 0");
    lt.target.col(j) = b.eps.col(j) / g;
    lt.weights(j) = g / static_cast<double>(b.size());
  }
  return lt;
}

LossTarget tsm_target(const Schedule& s, const InterpolantBatch& b, bool upper) {
  if (!b.grad_a || !b.grad_b) {
    throw ConfigError("target score matching needs endpoint gradients", "missing-gradients");
  }
  const Matrix states = interpolant_values(s, b);
  std::vector<Eigen::Index> members;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    if ((b.t(j) >= 0.5) == upper) members.push_back(j);
  }
  LossTarget lt;
  const auto m = static_cast<Eigen::Index>(members.size());
  lt.inputs.resize(b.xa.rows(), m);
  lt.times.resize(m);
  lt.target.resize(b.xa.rows(), m);
  lt.weights = Vector::Constant(m, m ? 1.0 / static_cast<double>(m) : 0.0);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index j = members[k];
    const double t = b.t(j);
    lt.inputs.col(k) = states.col(j);
    lt.times(k) = t;
    lt.target.col(k) = upper ? (b.grad_b->col(j) / s.beta(t)).eval() : (b.grad_a->col(j) / s.alpha(t)).eval();
  }
  return lt;
}

double evaluate_loss(const TransportModel& model, const LossTarget& target, bool use_velocity) {
  if (target.times.size() == 0) return 0.0;
  Matrix pred;
  if (use_velocity) {
    model.velocity_at(target.inputs, target.times, pred);
  } else {
    model.score_at(target.inputs, target.times, pred);
  }
  return ((pred - target.target).colwise().squaredNorm().transpose().array() * target.weights.array()).sum();
}

double loss_velocity(const TransportModel& model, const Schedule& s, const InterpolantBatch& b) {
  return evaluate_loss(model, velocity_target(s, b), true);
}

double loss_score_dsm(const TransportModel& model, const Schedule& s, const InterpolantBatch& b) {
  return evaluate_loss(model, dsm_target(s, b), false);
}

double loss_score_tsm(const TransportModel& model, const Schedule& s, const InterpolantBatch& b) {
  return evaluate_loss(model, tsm_target(s, b, false), false) + evaluate_loss(model, tsm_target(s, b, true), false);
}

std::vector<int> minibatch_ot_pairs(const Matrix& xa, const Matrix& xb) {
  if (xa.cols() != xb.cols()) throw ShapeError("OT pairing needs equal batch sizes");
  require_dim(xb.rows(), xa.rows(), "OT pairing dimension");
  return solve_assignment(squared_distances(xa, xb));
}

std::optional<Eigen::Matrix3d> kabsch_rotation(const Eigen::Matrix3Xd& p, const Eigen::Matrix3Xd& q) {
  if (p.cols() != q.cols()) throw ShapeError("kabsch: point counts differ");
  const Eigen::Matrix3d h = p * q.transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) return std::nullopt;
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
  fix(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return v * fix * u.transpose();
}

double cloud_rmsd(const Eigen::Matrix3Xd& p, const Eigen::Matrix3Xd& q) {
  if (p.cols() != q.cols() || p.cols() == 0) throw ShapeError("rmsd: point counts differ");
  return std::sqrt((p - q).squaredNorm() / static_cast<double>(p.cols()));
}

namespace {

Eigen::Matrix3Xd as_cloud(const VectorRef& x) {
  return Eigen::Map<const Eigen::Matrix3Xd>(x.data(), 3, x.size() / 3);
}

Eigen::Matrix3Xd centered(Eigen::Matrix3Xd c) {
  c.colwise() -= c.rowwise().mean();
  return c;
}

}  // namespace

SampleSet canonicalize(const SampleSet& set, const VectorRef& reference, bool particles,
                       CanonicalizeReport* report) {
  if (set.dim() % 3 != 0) throw ShapeError("canonicalize needs d = 3 N_p");
  require_dim(reference.size(), set.dim(), "canonicalize reference");
  const Eigen::Matrix3Xd ref = centered(as_cloud(reference));
  SampleSet out = set;
  long degenerate = 0;
  for (Eigen::Index n = 0; n < set.size(); ++n) {
    Eigen::Matrix3Xd cloud = centered(as_cloud(set.samples.col(n)));
    Eigen::Matrix3Xd grad;
    if (set.grads) grad = as_cloud(set.grads->col(n));
    if (particles) {
      const std::vector<int> perm = solve_assignment(squared_distances(ref, cloud));
      Eigen::Matrix3Xd pc(3, cloud.cols()), pg(3, grad.cols());
      for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
        pc.col(i) = cloud.col(perm[i]);
        if (set.grads) pg.col(i) = grad.col(perm[i]);
      }
      cloud = std::move(pc);
      if (set.grads) grad = std::move(pg);
    }
    auto rot = kabsch_rotation(cloud, ref);
    if (!rot) {
      ++degenerate;
      rot = Eigen::Matrix3d::Identity();
    }
    cloud = (*rot) * cloud;
    out.samples.col(n) = Eigen::Map<const Vector>(cloud.data(), cloud.size());
    if (set.grads) {
      grad = (*rot) * grad;
      out.grads->col(n) = Eigen::Map<const Vector>(grad.data(), grad.size());
    }
  }
  if (report) report->degenerate = degenerate;
  return out;
}

InterpolantBatch draw_training_batch(const SampleSet& a, const SampleSet& b, const TrainConfig& cfg,
                                     std::mt19937_64& gen) {
  const Eigen::Index bs = cfg.batch_size;
  std::uniform_int_distribution<Eigen::Index> pick_a(0, a.size() - 1);
  std::uniform_int_distribution<Eigen::Index> pick_b(0, b.size() - 1);
  std::uniform_real_distribution<double> pick_t(cfg.t_clip, 1.0 - cfg.t_clip);
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool with_grads = a.grads.has_value() && b.grads.has_value();

  InterpolantBatch batch;
  batch.xa.resize(a.dim(), bs);
  batch.xb.resize(a.dim(), bs);
  if (with_grads) {
    batch.grad_a = Matrix(a.dim(), bs);
    batch.grad_b = Matrix(a.dim(), bs);
  }
  std::vector<Eigen::Index> ib(bs);
  for (Eigen::Index j = 0; j < bs; ++j) {
    const Eigen::Index ia = pick_a(gen);
    ib[j] = pick_b(gen);
    batch.xa.col(j) = a.samples.col(ia);
    if (with_grads) batch.grad_a->col(j) = a.grads->col(ia);
  }
  if (cfg.ot_pairing) {
    const Eigen::Index chunk = std::max<Eigen::Index>(1, std::min<Eigen::Index>(cfg.ot_batch_size, bs));
    for (Eigen::Index start = 0; start < bs; start += chunk) {
      const Eigen::Index len = std::min(chunk, bs - start);
      Matrix xb_chunk(a.dim(), len);
      for (Eigen::Index j = 0; j < len; ++j) xb_chunk.col(j) = b.samples.col(ib[start + j]);
      const std::vector<int> perm = minibatch_ot_pairs(batch.xa.middleCols(start, len), xb_chunk);
      std::vector<Eigen::Index> reordered(len);
      for (Eigen::Index j = 0; j < len; ++j) reordered[j] = ib[start + perm[j]];
      std::copy(reordered.begin(), reordered.end(), ib.begin() + start);
    }
  }
  for (Eigen::Index j = 0; j < bs; ++j) {
    batch.xb.col(j) = b.samples.col(ib[j]);
    if (with_grads) batch.grad_b->col(j) = b.grads->col(ib[j]);
  }
  batch.eps.resize(a.dim(), bs);
  for (Eigen::Index i = 0; i < batch.eps.size(); ++i) batch.eps.data()[i] = normal(gen);
  batch.t.resize(bs);
  for (Eigen::Index j = 0; j < bs; ++j) batch.t(j) = pick_t(gen);
  return batch;
}

namespace {

// Adds sum_j w_j |net(inputs_j, t_j) - target_j|^2 to the tape.
ad::NodeId record_loss(ad::Tape& tape, const Mlp& net, const std::vector<ad::NodeId>& leaves,
                       const LossTarget& lt) {
  const ad::NodeId in = tape.constant(embed_inputs(lt.inputs, lt.times));
  const ad::NodeId pred = net.record(tape, in, leaves);
  const ad::NodeId diff = tape.sub(pred, tape.constant(lt.target));
  return tape.sum(tape.scale_columns(tape.square(diff), lt.weights));
}

void check_finite(double v, long iter, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string("non-finite ") + what + " loss at iteration " + std::to_string(iter),
                         "non-finite-loss");
  }
}

}  // namespace

TrainResult train_transport(const TrainConfig& cfg, const SampleSet& set_a, const SampleSet& set_b) {
  if (set_a.size() == 0 || set_b.size() == 0) throw ConfigError("training needs non-empty sample sets");
  require_dim(set_b.dim(), set_a.dim(), "training sample sets");
  return train_transport(cfg, set_a, set_b,
                         NeuralTransport::initialize(static_cast<int>(set_a.dim()), cfg.hidden, cfg.activation,
                                                     cfg.seed, cfg.schedule));
}

TrainResult train_transport(const TrainConfig& cfg, const SampleSet& set_a, const SampleSet& set_b,
                            NeuralTransport initial) {
  if (set_a.size() == 0 || set_b.size() == 0) throw ConfigError("training needs non-empty sample sets");
  require_dim(set_b.dim(), set_a.dim(), "training sample sets");
  require_dim(initial.dim(), set_a.dim(), "initial transport");
  if (!(cfg.t_clip > 0.0 && cfg.t_clip < 0.5)) throw ConfigError("t_clip must lie in (0, 0.5)");
  if (cfg.batch_size <= 0 || cfg.iterations < 0 || cfg.warmup_iterations < 0) {
    throw ConfigError("invalid batch size or iteration counts");
  }
  const long total = cfg.warmup_iterations + cfg.iterations;
  TrainResult result{std::move(initial), {}};
  if (total == 0) return result;

  const bool use_tsm = set_a.grads.has_value() && set_b.grads.has_value();
  SampleSet a = set_a;
  SampleSet b = set_b;
  if (cfg.canonicalize) {
    const Vector ref = set_a.samples.col(0);
    a = canonicalize(set_a, ref, cfg.canonicalize_particles);
    b = canonicalize(set_b, ref, cfg.canonicalize_particles);
  }

  NeuralTransport& model = result.model;
  const Schedule& sched = cfg.schedule;
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  AdamState v_opt(static_cast<Eigen::Index>(model.velocity_net().parameter_count()), adam_cfg);
  AdamState s_opt(static_cast<Eigen::Index>(model.score_net().parameter_count()), adam_cfg);
  Vector v_params = model.velocity_net().flat_parameters();
  Vector s_params = model.score_net().flat_parameters();

  std::mt19937_64 gen(derive_seed(cfg.seed, seed_label::kTraining));
  std::uniform_real_distribution<double> lower_t(cfg.t_clip, 0.5);
  std::uniform_real_distribution<double> upper_t(0.5, 1.0 - cfg.t_clip);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  result.trace.reserve(static_cast<std::size_t>(total));

  for (long iter = 0; iter < total; ++iter) {
    InterpolantBatch batch = draw_training_batch(a, b, cfg, gen);
    LossRecord rec{iter, nan, nan, nan, nan};

    {
      ad::Tape tape;
      const auto leaves = model.velocity_net().add_parameters(tape);
      const ad::NodeId loss = record_loss(tape, model.velocity_net(), leaves, velocity_target(sched, batch));
      rec.velocity = tape.scalar(loss);
      check_finite(rec.velocity, iter, "velocity");
      tape.backward(loss);
      const auto outcome = v_opt.step(v_params, model.velocity_net().gather_gradient(tape, leaves));
      if (!outcome.applied) throw NumericalError("velocity update rejected: " + outcome.diagnostic, "non-finite-loss");
      model.velocity_net().set_flat_parameters(v_params);
    }

    if (iter >= cfg.warmup_iterations) {
      ad::Tape tape;
      const auto leaves = model.score_net().add_parameters(tape);
      ad::NodeId loss = record_loss(tape, model.score_net(), leaves, dsm_target(sched, batch));
      rec.dsm = tape.scalar(loss);
      if (use_tsm) {
        InterpolantBatch low = batch;
        InterpolantBatch high = batch;
        for (Eigen::Index j = 0; j < batch.size(); ++j) {
          low.t(j) = lower_t(gen);
          high.t(j) = upper_t(gen);
        }
        const ad::NodeId l0 = record_loss(tape, model.score_net(), leaves, tsm_target(sched, low, false));
        const ad::NodeId l1 = record_loss(tape, model.score_net(), leaves, tsm_target(sched, high, true));
        rec.tsm0 = tape.scalar(l0);
        rec.tsm1 = tape.scalar(l1);
        loss = tape.add(tape.add(loss, l0), l1);
      }
      check_finite(tape.scalar(loss), iter, "score");
      tape.backward(loss);
      const auto outcome = s_opt.step(s_params, model.score_net().gather_gradient(tape, leaves));
      if (!outcome.applied) throw NumericalError("score update rejected: " + outcome.diagnostic, "non-finite-loss");
      model.score_net().set_flat_parameters(s_params);
    }
    result.trace.push_back(rec);
  }
  return result;
}

std::string format_loss_trace(const std::vector<LossRecord>& trace) {
  std::ostringstream out;
  out << "iter,loss_v,loss_dsm,loss_tsm0,loss_tsm1\n";
  for (const auto& r : trace) {
    out << r.iter << ',' << io::format_real(r.velocity) << ',' << io::format_real(r.dsm) << ','
        << io::format_real(r.tsm0) << ',' << io::format_real(r.tsm1) << '\n';
  }
  return out.str();
}

}  // namespace feat
