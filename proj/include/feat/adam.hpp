#pragma once

#include <string>

#include "feat/core.hpp"

namespace feat {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamOutcome {
  bool applied = true;
  std::string diagnostic;
};

/// Adaptive-moment optimizer with bias correction. A gradient containing a
/// non-finite entry is rejected: parameters, moments and step count stay put.
class AdamState {
 public:
  AdamState(Eigen::Index parameter_count, AdamConfig config = {});

  AdamOutcome step(Vector& params, const Vector& grads);

  long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  Vector m_;
  Vector v_;
  long steps_ = 0;
};

}  // namespace feat
