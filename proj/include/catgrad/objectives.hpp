#pragma once

#include "catgrad/types.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace catgrad {

struct ObjectiveEval {
  double value = 0.0;
  Mat grad;  // d f / d D, gradient in the relaxed one-hot coordinates at D
};

// Scalar function of a joint one-hot sample together with its gradient in
// the relaxed coordinates. Implementations are immutable after construction.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual int num_vars() const = 0;
  virtual int num_cats() const = 0;
  virtual ObjectiveEval eval(const OneHotMatrix& d) const = 0;
};

// f(X) = (1/L) * sum_i |x_i - c_i|^p with x_i = <D_i, values>.
// Binary variables are the n=2 case with values = (0, 1).
class PolynomialObjective : public Objective {
 public:
  PolynomialObjective(Vec targets, double p, Vec category_values);

  int num_vars() const override { return static_cast<int>(targets_.size()); }
  int num_cats() const override { return static_cast<int>(values_.size()); }
  ObjectiveEval eval(const OneHotMatrix& d) const override;

  double exponent() const { return p_; }
  const Vec& targets() const { return targets_; }
  const Vec& category_values() const { return values_; }

 private:
  Vec targets_;
  double p_;
  Vec values_;
};

// f(d) = 1/2 d^T Q d + b^T d over the flattened one-hot coordinates.
// Quadratics make second-order gradient approximations exact, which is what
// this oracle objective is for.
class QuadraticOracleObjective : public Objective {
 public:
  QuadraticOracleObjective(Mat q, Vec b, int num_vars, int num_cats);

  static QuadraticOracleObjective random(int num_vars, int num_cats, std::uint64_t seed,
                                         double scale = 1.0);

  int num_vars() const override { return num_vars_; }
  int num_cats() const override { return num_cats_; }
  ObjectiveEval eval(const OneHotMatrix& d) const override;

  const Mat& q() const { return q_; }
  const Vec& b() const { return b_; }

 private:
  Mat q_;
  Vec b_;
  int num_vars_;
  int num_cats_;
};

// Polynomial of degree <= 3 in the flattened one-hot coordinates:
//   f(d) = c0 + b^T d + 1/2 d^T Q d + sum_{abc} T[a,b,c] d_a d_b d_c
// with Q and T symmetric. Used by the identity checks, where random cubics
// separate first-order from second-order estimators.
class CubicObjective : public Objective {
 public:
  CubicObjective(double c0, Vec b, Mat q, std::vector<double> t_sym, int num_vars, int num_cats);

  // Random coefficients uniform in [-1, 1]; degree in {1, 2, 3} zeroes the
  // higher-order terms.
  static CubicObjective random(int num_vars, int num_cats, std::uint64_t seed, int degree = 3);

  int num_vars() const override { return num_vars_; }
  int num_cats() const override { return num_cats_; }
  ObjectiveEval eval(const OneHotMatrix& d) const override;

  // Value and gradient at an arbitrary relaxed point; the relaxed form backs
  // finite-difference cross-checks.
  double value_at(const Vec& d_flat) const;
  Vec grad_at(const Vec& d_flat) const;

 private:
  double tensor_at(Eigen::Index a, Eigen::Index b, Eigen::Index c) const {
    return t_sym_[static_cast<std::size_t>((a * dim_ + b) * dim_ + c)];
  }

  double c0_;
  Vec b_;
  Mat q_;
  std::vector<double> t_sym_;  // dense symmetric dim^3 tensor
  int num_vars_;
  int num_cats_;
  Eigen::Index dim_;
};

inline constexpr std::uint64_t kDefaultEnumerationCap = 1ull << 20;

// Number of joint outcomes n^L, saturating at 2^63.
std::uint64_t joint_outcome_count(int num_vars, int num_cats);

void check_enumeration_cap(int num_vars, int num_cats,
                           std::uint64_t cap = kDefaultEnumerationCap);

// Visits all n^L joint one-hot outcomes in lexicographic order (the last
// variable cycles fastest). Throws CapacityError above the cap.
template <typename Fn>
void enumerate_outcomes(int num_vars, int num_cats, Fn&& visit,
                        std::uint64_t cap = kDefaultEnumerationCap) {
  check_enumeration_cap(num_vars, num_cats, cap);
  OneHotMatrix d(std::vector<int>(static_cast<std::size_t>(num_vars), 0), num_cats);
  while (true) {
    visit(static_cast<const OneHotMatrix&>(d));
    int i = num_vars - 1;
    while (i >= 0) {
      if (++d.choice[static_cast<std::size_t>(i)] < num_cats) break;
      d.choice[static_cast<std::size_t>(i)] = 0;
      --i;
    }
    if (i < 0) return;
  }
}

// Same iteration with the objective evaluated at every outcome.
template <typename Fn>
void enumerate_objective(const Objective& obj, Fn&& visit,
                         std::uint64_t cap = kDefaultEnumerationCap) {
  enumerate_outcomes(obj.num_vars(), obj.num_cats(),
                     [&](const OneHotMatrix& d) { visit(d, obj.eval(d)); }, cap);
}

}  // namespace catgrad
