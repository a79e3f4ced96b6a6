#include "catgrad/numerics.hpp"

#include <cmath>
#include <limits>

namespace catgrad {

namespace {

void validate_path(const ScalarPath& path) {
  if (!path.g || !path.g_prime) {
    throw std::invalid_argument("scalar path needs both g and g_prime");
  }
  if (!(path.t0 < path.t1)) {
    throw std::invalid_argument("scalar path requires t0 < t1");
  }
}

double composed_increment(StepMethod method, const ScalarPath& path, int steps) {
  const double h = (path.t1 - path.t0) / steps;
  double total = 0.0;
  for (int s = 0; s < steps; ++s) {
    const double a = path.t0 + s * h;
    if (method == StepMethod::Euler) {
      total += path.g_prime(a) * h;
    } else {
      total += 0.5 * (path.g_prime(a) + path.g_prime(a + h)) * h;
    }
  }
  return total;
}

}  // namespace

double euler_increment(const ScalarPath& path) {
  validate_path(path);
  return path.g_prime(path.t0) * (path.t1 - path.t0);
}

double heun_increment(const ScalarPath& path) {
  validate_path(path);
  return 0.5 * (path.g_prime(path.t0) + path.g_prime(path.t1)) * (path.t1 - path.t0);
}

OrderReport convergence_order(StepMethod method, const ScalarPath& path, int halvings) {
  validate_path(path);
  if (halvings < 3) {
    throw std::invalid_argument("convergence_order needs at least 3 halvings");
  }
  const double truth = path.g(path.t1) - path.g(path.t0);

  OrderReport report;
  int steps = 1;
  for (int level = 0; level <= halvings; ++level) {
    report.step_sizes.push_back((path.t1 - path.t0) / steps);
    report.errors.push_back(std::abs(composed_increment(method, path, steps) - truth));
    steps *= 2;
  }

  double sum = 0.0;
  for (int level = 0; level < halvings; ++level) {
    const double e0 = report.errors[static_cast<std::size_t>(level)];
    const double e1 = report.errors[static_cast<std::size_t>(level) + 1];
    if (e0 < 1e-12 || e1 < 1e-12) {
      // method is (numerically) exact on this path; the ratio is noise
      report.order_defined = false;
      report.observed_order = std::numeric_limits<double>::quiet_NaN();
      return report;
    }
    sum += std::log2(e0 / e1);
  }
  report.observed_order = sum / halvings;
  return report;
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("finite_diff_grad requires h > 0");
  }
  Vec g(x.size());
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double hi = f(probe);
    probe[i] = x[i] - h;
    const double lo = f(probe);
    probe[i] = x[i];
    g[i] = (hi - lo) / (2.0 * h);
  }
  return g;
}

}  // namespace catgrad
