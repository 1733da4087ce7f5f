#include "feat/adam.hpp"

#include <cmath>

namespace feat {

AdamState::AdamState(Eigen::Index parameter_count, AdamConfig config)
    : config_(config), m_(Vector::Zero(parameter_count)), v_(Vector::Zero(parameter_count)) {
  if (!(config_.learning_rate > 0) || !(config_.epsilon > 0) || config_.beta1 < 0 ||
      config_.beta1 >= 1 || config_.beta2 < 0 || config_.beta2 >= 1) {
    throw ConfigError("invalid adam hyperparameters");
  }
}

AdamOutcome AdamState::step(Vector& params, const Vector& grads) {
  require_dim(params.size(), m_.size(), "adam params");
  require_dim(grads.size(), m_.size(), "adam grads");
  if (!grads.allFinite()) {
    Eigen::Index bad = 0;
    while (bad < grads.size() && std::isfinite(grads(bad))) ++bad;
    return {false, "non-finite gradient at parameter " + std::to_string(bad) + " (step " +
                       std::to_string(steps_ + 1) + ")"};
  }
  ++steps_;
  const auto& c = config_;
  m_ = c.beta1 * m_ + (1.0 - c.beta1) * grads;
  v_ = c.beta2 * v_ + (1.0 - c.beta2) * grads.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(steps_));
  params.array() -= c.learning_rate * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + c.epsilon);
  return {};
}

}  // namespace feat
