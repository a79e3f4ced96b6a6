#pragma once

#include "catgrad/types.hpp"

#include <functional>

namespace catgrad {

// Scalar path g on [t0, t1] with its derivative; g is assumed three times
// differentiable on the interval.
struct ScalarPath {
  std::function<double(double)> g;
  std::function<double(double)> g_prime;
  double t0 = 0.0;
  double t1 = 1.0;
};

enum class StepMethod { Euler, Heun };

// Forward Euler increment g'(t0) * (t1 - t0).
double euler_increment(const ScalarPath& path);

// Trapezoidal increment (g'(t0) + g'(t1)) / 2 * (t1 - t0); exact on quadratics.
double heun_increment(const ScalarPath& path);

struct OrderReport {
  std::vector<double> step_sizes;  // strictly decreasing
  std::vector<double> errors;
  double observed_order = 0.0;
  bool order_defined = true;  // false when the method is exact on this path
};

// Composes the method over 1, 2, 4, ... uniform sub-steps and measures the
// empirical global order as the mean of log2(error(h) / error(h/2)).
OrderReport convergence_order(StepMethod method, const ScalarPath& path, int halvings);

// Central differences (f(x + h e_i) - f(x - h e_i)) / (2h).
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5);

}  // namespace catgrad
