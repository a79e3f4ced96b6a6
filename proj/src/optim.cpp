#include "catgrad/optim.hpp"

#include <cmath>

namespace catgrad {

std::string to_string(OptimAlgorithm alg) {
  return alg == OptimAlgorithm::Adam ? "adam" : "radam";
}

OptimAlgorithm optim_algorithm_from_string(const std::string& name) {
  if (name == "adam") return OptimAlgorithm::Adam;
  if (name == "radam") return OptimAlgorithm::RAdam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

std::pair<OptimState, LogitMatrix> optim_step(const OptimState& state, const LogitMatrix& theta,
                                              const GradEstimate& grad, const OptimConfig& cfg) {
  if (theta.rows() != grad.rows() || theta.cols() != grad.cols()) {
    throw std::invalid_argument("optim_step: gradient shape does not match parameters");
  }
  if (state.first_moment.size() != 0 &&
      (state.first_moment.rows() != theta.rows() || state.first_moment.cols() != theta.cols())) {
    throw std::invalid_argument("optim_step: state shape does not match parameters");
  }
  if (!(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("optim_step: learning rate must be positive");
  }

  OptimState next = state;
  if (next.first_moment.size() == 0) {
    next = OptimState::zeros(theta.rows(), theta.cols());
  }
  next.step_count = state.step_count + 1;
  const double t = static_cast<double>(next.step_count);

  next.first_moment = cfg.beta1 * next.first_moment + (1.0 - cfg.beta1) * grad;
  next.second_moment =
      (cfg.beta2 * next.second_moment.array() + (1.0 - cfg.beta2) * grad.array().square()).matrix();

  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  const Mat m_hat = next.first_moment / bias1;

  LogitMatrix updated = theta;
  if (cfg.algorithm == OptimAlgorithm::Adam) {
    const Mat v_hat = next.second_moment / bias2;
    updated.array() -=
        cfg.learning_rate * m_hat.array() / (v_hat.array().sqrt() + cfg.epsilon);
    return {std::move(next), std::move(updated)};
  }

  // RAdam (rectified Adam)
  const double rho_inf = 2.0 / (1.0 - cfg.beta2) - 1.0;
  const double beta2_t = std::pow(cfg.beta2, t);
  const double rho_t = rho_inf - 2.0 * t * beta2_t / (1.0 - beta2_t);
  if (rho_t > 4.0) {
    const double rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                                  ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
    const Mat v_hat = next.second_moment / bias2;
    updated.array() -=
        cfg.learning_rate * rect * m_hat.array() / (v_hat.array().sqrt() + cfg.epsilon);
  } else {
    updated -= cfg.learning_rate * m_hat;
  }
  return {std::move(next), std::move(updated)};
}

}  // namespace catgrad
