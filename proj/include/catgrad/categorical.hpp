#pragma once

#include "catgrad/types.hpp"

namespace catgrad {

// Tempered softmax of a logit vector; max-subtracted before exponentiation.
Vec softmax(const Vec& logits, Temperature tau = Temperature{});

// Row-wise tempered softmax of an L x n logit matrix.
Mat softmax_rows(const Mat& logits, Temperature tau = Temperature{});

// Jacobian of softmax at temperature 1, expressed through its output:
// diag(pi) - pi * pi^T. Symmetric, rows sum to zero. The tempered Jacobian
// is this evaluated at softmax_tau(theta) and scaled by 1/tau.
Mat softmax_jacobian(const Vec& pi);

Vec one_hot(int index, int n);

// Inverse-CDF draw of a category from pi using a single uniform.
int sample_index(const Vec& pi, RngStream& rng);
Vec sample_one_hot(const Vec& pi, RngStream& rng);

struct GumbelDraw {
  int argmax = 0;
  Vec perturbed;  // theta + G
};

// Gumbel-max draw: perturb logits with i.i.d. standard Gumbel noise and take
// the argmax (ties toward the lowest index). The perturbed vector is returned
// so callers can backpropagate through its tempered softmax.
GumbelDraw gumbel_argmax(const Vec& logits, RngStream& rng);

// Perturbed logits distributed as theta + G conditioned on argmax == k,
// via the truncated-Gumbel construction:
//   E_j ~ Exp(1);  T_k = log(sum_j exp(theta_j)) - log(E_k)
//   T_j = -log(E_k / sum_m exp(theta_m) + E_j / exp(theta_j))   (j != k)
// argmax(T) == k on every draw.
Vec conditional_gumbels(const Vec& logits, int k, RngStream& rng);

}  // namespace catgrad
