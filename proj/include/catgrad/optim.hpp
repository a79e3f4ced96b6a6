#pragma once

#include "catgrad/types.hpp"

#include <string>
#include <utility>

namespace catgrad {

enum class OptimAlgorithm { Adam, RAdam };

struct OptimConfig {
  OptimAlgorithm algorithm = OptimAlgorithm::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimState {
  int step_count = 0;
  Mat first_moment;
  Mat second_moment;

  static OptimState zeros(Eigen::Index rows, Eigen::Index cols) {
    return {0, Mat::Zero(rows, cols), Mat::Zero(rows, cols)};
  }
};

std::string to_string(OptimAlgorithm alg);
OptimAlgorithm optim_algorithm_from_string(const std::string& name);

// Pure transition: same inputs always produce the same (state, theta) pair.
// RAdam falls back to the plain bias-corrected momentum update while the
// variance rectification term is undefined (rho_t <= 4).
std::pair<OptimState, LogitMatrix> optim_step(const OptimState& state, const LogitMatrix& theta,
                                              const GradEstimate& grad, const OptimConfig& cfg);

}  // namespace catgrad
