#include "catgrad/categorical.hpp"

#include <cmath>
#include <limits>

namespace catgrad {

namespace {

double log_sum_exp(const Vec& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

}  // namespace

Vec softmax(const Vec& logits, Temperature tau) {
  if (!logits.allFinite()) {
    throw std::invalid_argument("softmax: logits contain non-finite entries");
  }
  if (!(tau.value > 0.0)) {
    throw std::invalid_argument("softmax: temperature must be positive");
  }
  const Vec scaled = logits / tau.value;
  Vec out = (scaled.array() - scaled.maxCoeff()).exp();
  out /= out.sum();
  return out;
}

Mat softmax_rows(const Mat& logits, Temperature tau) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out.row(i) = softmax(logits.row(i).transpose(), tau).transpose();
  }
  return out;
}

Mat softmax_jacobian(const Vec& pi) {
  if (pi.minCoeff() < -1e-12 || std::abs(pi.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("softmax_jacobian: input is not on the simplex");
  }
  Mat jac = Mat(pi.asDiagonal());
  jac.noalias() -= pi * pi.transpose();
  return jac;
}

Vec one_hot(int index, int n) {
  Vec r = Vec::Zero(n);
  r[index] = 1.0;
  return r;
}

int sample_index(const Vec& pi, RngStream& rng) {
  const double u = rng.uniform_open01();
  double cum = 0.0;
  const Eigen::Index n = pi.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    cum += pi[i];
    if (u <= cum) {
      return static_cast<int>(i);
    }
  }
  return static_cast<int>(n - 1);  // cum fell short of 1 by rounding
}

Vec sample_one_hot(const Vec& pi, RngStream& rng) {
  return one_hot(sample_index(pi, rng), static_cast<int>(pi.size()));
}

GumbelDraw gumbel_argmax(const Vec& logits, RngStream& rng) {
  GumbelDraw draw;
  draw.perturbed = Vec(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double g = -std::log(-std::log(rng.uniform_open01()));
    draw.perturbed[i] = logits[i] + g;
  }
  draw.perturbed.maxCoeff(&draw.argmax);  // Eigen breaks ties toward index 0
  return draw;
}

Vec conditional_gumbels(const Vec& logits, int k, RngStream& rng) {
  const Eigen::Index n = logits.size();
  if (k < 0 || k >= n) {
    throw std::invalid_argument("conditional_gumbels: category index out of range");
  }
  const double log_z = log_sum_exp(logits);
  Vec log_e(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    log_e[j] = std::log(-std::log(rng.uniform_open01()));  // log of Exp(1)
  }

  Vec t(n);
  t[k] = log_z - log_e[k];
  const double cap = std::nextafter(t[k], -std::numeric_limits<double>::infinity());
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == k) continue;
    // -log(exp(log_e[k] - log_z) + exp(log_e[j] - theta_j)), evaluated stably.
    const double a = log_e[k] - log_z;
    const double b = log_e[j] - logits[j];
    const double hi = std::max(a, b);
    const double tj = -(hi + std::log(std::exp(a - hi) + std::exp(b - hi)));
    // Strict inequality holds in exact arithmetic; keep it under rounding so
    // the argmax invariant survives tie-breaking toward lower indices.
    t[j] = std::min(tj, cap);
  }
  return t;
}

}  // namespace catgrad
