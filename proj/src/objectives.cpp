#include "catgrad/objectives.hpp"

#include <cmath>

namespace catgrad {

PolynomialObjective::PolynomialObjective(Vec targets, double p, Vec category_values)
    : targets_(std::move(targets)), p_(p), values_(std::move(category_values)) {
  if (!(p_ > 1.0)) {
    throw std::invalid_argument("polynomial objective requires p > 1, got " + std::to_string(p_));
  }
  if (!targets_.allFinite() || !values_.allFinite()) {
    throw std::invalid_argument("polynomial objective: non-finite coefficients");
  }
}

ObjectiveEval PolynomialObjective::eval(const OneHotMatrix& d) const {
  const int num = num_vars();
  if (d.num_vars() != num || d.num_cats != num_cats()) {
    throw std::invalid_argument("polynomial objective: sample shape mismatch");
  }
  ObjectiveEval out;
  out.grad = Mat::Zero(num, num_cats());
  const double inv_l = 1.0 / num;
  for (int i = 0; i < num; ++i) {
    const double x = values_[d.choice[static_cast<std::size_t>(i)]];
    const double r = x - targets_[i];
    const double ar = std::abs(r);
    out.value += inv_l * std::pow(ar, p_);
    // d/dx |x-c|^p = p * sign(x-c) * |x-c|^(p-1); zero at x == c for p > 1.
    const double factor = (ar == 0.0) ? 0.0 : p_ * inv_l * ((r > 0.0) ? 1.0 : -1.0) * std::pow(ar, p_ - 1.0);
    out.grad.row(i) = factor * values_.transpose();
  }
  return out;
}

QuadraticOracleObjective::QuadraticOracleObjective(Mat q, Vec b, int num_vars, int num_cats)
    : q_(std::move(q)), b_(std::move(b)), num_vars_(num_vars), num_cats_(num_cats) {
  const Eigen::Index dim = static_cast<Eigen::Index>(num_vars_) * num_cats_;
  if (q_.rows() != dim || q_.cols() != dim || b_.size() != dim) {
    throw std::invalid_argument("quadratic objective: dimension mismatch");
  }
  if ((q_ - q_.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("quadratic objective: Q is not symmetric");
  }
}

QuadraticOracleObjective QuadraticOracleObjective::random(int num_vars, int num_cats,
                                                          std::uint64_t seed, double scale) {
  const Eigen::Index dim = static_cast<Eigen::Index>(num_vars) * num_cats;
  RngStream rng(seed, 0x9d);
  Mat q(dim, dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    for (Eigen::Index b = 0; b < dim; ++b) {
      q(a, b) = scale * (2.0 * rng.uniform_open01() - 1.0);
    }
  }
  q = ((q + q.transpose()) / 2.0).eval();
  Vec b(dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    b[a] = scale * (2.0 * rng.uniform_open01() - 1.0);
  }
  return QuadraticOracleObjective(std::move(q), std::move(b), num_vars, num_cats);
}

ObjectiveEval QuadraticOracleObjective::eval(const OneHotMatrix& d) const {
  if (d.num_vars() != num_vars_ || d.num_cats != num_cats_) {
    throw std::invalid_argument("quadratic objective: sample shape mismatch");
  }
  const Vec flat = d.flattened();
  ObjectiveEval out;
  const Vec qd = q_ * flat;
  out.value = 0.5 * flat.dot(qd) + b_.dot(flat);
  Vec g = qd + b_;
  out.grad = Eigen::Map<const Mat>(g.data(), num_cats_, num_vars_).transpose();
  return out;
}

CubicObjective::CubicObjective(double c0, Vec b, Mat q, std::vector<double> t_sym, int num_vars,
                               int num_cats)
    : c0_(c0),
      b_(std::move(b)),
      q_(std::move(q)),
      t_sym_(std::move(t_sym)),
      num_vars_(num_vars),
      num_cats_(num_cats),
      dim_(static_cast<Eigen::Index>(num_vars) * num_cats) {
  if (dim_ > 128) {
    throw CapacityError("cubic objective: dense coefficient tensor over " + std::to_string(dim_) +
                        " coordinates is too large (limit 128)");
  }
  if (b_.size() != dim_ || q_.rows() != dim_ || q_.cols() != dim_ ||
      t_sym_.size() != static_cast<std::size_t>(dim_ * dim_ * dim_)) {
    throw std::invalid_argument("cubic objective: dimension mismatch");
  }
}

CubicObjective CubicObjective::random(int num_vars, int num_cats, std::uint64_t seed, int degree) {
  const Eigen::Index dim = static_cast<Eigen::Index>(num_vars) * num_cats;
  if (dim > 128) {
    throw CapacityError("cubic objective: dense coefficient tensor over " + std::to_string(dim) +
                        " coordinates is too large (limit 128)");
  }
  RngStream rng(seed, 0xc3);
  auto coef = [&] { return 2.0 * rng.uniform_open01() - 1.0; };

  Vec b(dim);
  for (Eigen::Index a = 0; a < dim; ++a) b[a] = coef();

  // One draw per distinct monomial, spread across the symmetric entries so
  // the monomial x_a x_b x_c itself carries the drawn weight. Degree-k
  // weights are scaled by 1/k!, standardizing the Taylor coefficients the
  // way smooth objectives do.
  Mat q = Mat::Zero(dim, dim);
  if (degree >= 2) {
    for (Eigen::Index a = 0; a < dim; ++a) {
      for (Eigen::Index c = a; c < dim; ++c) {
        const double v = coef() / 2.0;
        if (a == c) {
          q(a, a) = 2.0 * v;  // 1/2 d^T Q d contributes q_aa / 2 on the diagonal
        } else {
          q(a, c) = v;
          q(c, a) = v;
        }
      }
    }
  }

  std::vector<double> t(static_cast<std::size_t>(dim * dim * dim), 0.0);
  if (degree >= 3) {
    for (Eigen::Index a = 0; a < dim; ++a) {
      for (Eigen::Index bb = a; bb < dim; ++bb) {
        for (Eigen::Index c = bb; c < dim; ++c) {
          const double v = coef() / 6.0;
          int permutations = 6;
          if (a == bb && bb == c) {
            permutations = 1;
          } else if (a == bb || bb == c) {
            permutations = 3;
          }
          const double share = v / permutations;
          const Eigen::Index idx[3] = {a, bb, c};
          for (int p0 = 0; p0 < 3; ++p0) {
            for (int p1 = 0; p1 < 3; ++p1) {
              if (p1 == p0) continue;
              const int p2 = 3 - p0 - p1;
              t[static_cast<std::size_t>((idx[p0] * dim + idx[p1]) * dim + idx[p2])] = share;
            }
          }
        }
      }
    }
  }
  return CubicObjective(coef(), std::move(b), std::move(q), std::move(t), num_vars, num_cats);
}

double CubicObjective::value_at(const Vec& d) const {
  double value = c0_ + b_.dot(d) + 0.5 * d.dot(q_ * d);
  for (Eigen::Index a = 0; a < dim_; ++a) {
    if (d[a] == 0.0) continue;
    for (Eigen::Index b = 0; b < dim_; ++b) {
      if (d[b] == 0.0) continue;
      for (Eigen::Index c = 0; c < dim_; ++c) {
        if (d[c] == 0.0) continue;
        value += tensor_at(a, b, c) * d[a] * d[b] * d[c];
      }
    }
  }
  return value;
}

Vec CubicObjective::grad_at(const Vec& d) const {
  Vec g = b_ + q_ * d;
  // symmetric T: d/d d_a of sum T d d d = 3 * sum_{bc} T[a,b,c] d_b d_c
  for (Eigen::Index a = 0; a < dim_; ++a) {
    double acc = 0.0;
    for (Eigen::Index b = 0; b < dim_; ++b) {
      if (d[b] == 0.0) continue;
      for (Eigen::Index c = 0; c < dim_; ++c) {
        if (d[c] == 0.0) continue;
        acc += tensor_at(a, b, c) * d[b] * d[c];
      }
    }
    g[a] += 3.0 * acc;
  }
  return g;
}

ObjectiveEval CubicObjective::eval(const OneHotMatrix& d) const {
  if (d.num_vars() != num_vars_ || d.num_cats != num_cats_) {
    throw std::invalid_argument("cubic objective: sample shape mismatch");
  }
  const Vec flat = d.flattened();
  ObjectiveEval out;
  out.value = value_at(flat);
  Vec g = grad_at(flat);
  out.grad = Eigen::Map<const Mat>(g.data(), num_cats_, num_vars_).transpose();
  return out;
}

std::uint64_t joint_outcome_count(int num_vars, int num_cats) {
  std::uint64_t count = 1;
  for (int i = 0; i < num_vars; ++i) {
    if (count > (1ull << 63) / static_cast<std::uint64_t>(num_cats)) {
      return 1ull << 63;  // saturate; already far past any usable cap
    }
    count *= static_cast<std::uint64_t>(num_cats);
  }
  return count;
}

void check_enumeration_cap(int num_vars, int num_cats, std::uint64_t cap) {
  if (num_vars < 1 || num_cats < 2) {
    throw std::invalid_argument("enumeration requires L >= 1 and n >= 2");
  }
  const std::uint64_t count = joint_outcome_count(num_vars, num_cats);
  if (count > cap) {
    throw CapacityError("joint outcome count n^L = " + std::to_string(count) +
                        " exceeds enumeration cap " + std::to_string(cap));
  }
}

}  // namespace catgrad
