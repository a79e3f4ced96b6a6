#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace catgrad {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Learnable logits, one row of n entries per latent variable.
using LogitMatrix = Mat;

// Estimated d(loss)/d(theta), same shape as the logits.
using GradEstimate = Mat;

// Thrown when a joint enumeration would exceed the configured cap.
class CapacityError : public std::runtime_error {
 public:
  explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a probability falls below the guard threshold of a ratio
// estimator (the phi/pi instability of the averaged-baseline form).
class NumericGuardError : public std::runtime_error {
 public:
  explicit NumericGuardError(const std::string& what) : std::runtime_error(what) {}
};

struct Temperature {
  double value = 1.0;

  Temperature() = default;
  explicit Temperature(double v) : value(v) {
    if (!(v > 0.0)) {
      throw std::invalid_argument("temperature must be positive, got " + std::to_string(v));
    }
  }
};

// Counter-based random stream keyed by (seed, stream_id). Draw k is a pure
// function to (seed, stream_id, k), so results never depend on scheduling.
// Child streams derive a fresh stream_id; counters start at zero.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id), base_(mix64(mix64(seed) ^ stream_id)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() {
    return mix64(base_ + 0x9E3779B97F4A7C15ull * ++counter_);
  }

  // Uniform on the open interval (0,1); never returns 0 or 1 so that
  // -log(-log(u)) and -log(u) stay finite.
  double uniform_open01() {
    const std::uint64_t bits = next_u64() >> 11;  // 53 random bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  RngStream substream(std::uint64_t child_id) const {
    return RngStream(seed_, mix64(stream_id_ ^ mix64(child_id + 0x632BE59BD9B4E019ull)));
  }

  static std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

// Joint one-hot sample: one chosen category per latent variable.
struct OneHotMatrix {
  std::vector<int> choice;  // length L, entries in [0, num_cats)
  int num_cats = 0;

  OneHotMatrix() = default;
  OneHotMatrix(std::vector<int> c, int n) : choice(std::move(c)), num_cats(n) {}

  int num_vars() const { return static_cast<int>(choice.size()); }

  Vec row(int i) const {
    Vec r = Vec::Zero(num_cats);
    r[choice[static_cast<std::size_t>(i)]] = 1.0;
    return r;
  }

  // Row-major flatten: variable i occupies entries [i*n, (i+1)*n).
  Vec flattened() const {
    Vec d = Vec::Zero(static_cast<Eigen::Index>(choice.size()) * num_cats);
    for (std::size_t i = 0; i < choice.size(); ++i) {
      d[static_cast<Eigen::Index>(i) * num_cats + choice[i]] = 1.0;
    }
    return d;
  }
};

inline void validate_logits(const LogitMatrix& theta) {
  if (theta.rows() < 1 || theta.cols() < 2) {
    throw std::invalid_argument("logit matrix needs L >= 1 rows and n >= 2 columns");
  }
  if (!theta.allFinite()) {
    throw std::invalid_argument("logit matrix contains non-finite entries");
  }
}

}  // namespace catgrad
