#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "catgrad/categorical.hpp"
#include "catgrad/estimators.hpp"
#include "catgrad/numerics.hpp"
#include "catgrad/objectives.hpp"

#include <cmath>
#include <memory>

using namespace catgrad;

namespace {

Mat theta_of(std::initializer_list<double> xs) {
  Mat t(1, static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) t(0, i++) = x;
  return t;
}

// f(x) = b . x + c0 over the flattened coordinates of a single variable.
CubicObjective linear_objective(const Vec& b, double c0 = 0.0) {
  const Eigen::Index dim = b.size();
  return CubicObjective(c0, b, Mat::Zero(dim, dim),
                        std::vector<double>(static_cast<std::size_t>(dim * dim * dim), 0.0), 1,
                        static_cast<int>(dim));
}

CubicObjective constant_objective(int num_vars, int n, double c0) {
  const Eigen::Index dim = static_cast<Eigen::Index>(num_vars) * n;
  return CubicObjective(c0, Vec::Zero(dim), Mat::Zero(dim, dim),
                        std::vector<double>(static_cast<std::size_t>(dim * dim * dim), 0.0),
                        num_vars, n);
}

// f(x) = x_1^3 for one binary variable; the worked n=2 anchor.
CubicObjective first_coordinate_cubed() {
  std::vector<double> t(8, 0.0);
  t[0] = 1.0;  // T[0,0,0]
  return CubicObjective(0.0, Vec::Zero(2), Mat::Zero(2, 2), std::move(t), 1, 2);
}

// f(x) = x_1^2 for one binary variable.
CubicObjective first_coordinate_squared() {
  Mat q = Mat::Zero(2, 2);
  q(0, 0) = 2.0;
  return CubicObjective(0.0, Vec::Zero(2), q, std::vector<double>(8, 0.0), 1, 2);
}

Mat random_theta(int num_vars, int n, RngStream& rng, double range = 3.0) {
  Mat theta(num_vars, n);
  for (int i = 0; i < num_vars; ++i) {
    for (int k = 0; k < n; ++k) theta(i, k) = 2.0 * range * rng.uniform_open01() - range;
  }
  return theta;
}

// Independent route to the exact gradient: finite differences of the
// enumerated expectation E[f](theta), computed with test-local code.
Mat fd_of_expected_loss(const Mat& theta, const Objective& obj) {
  const auto loss_at = [&](const Mat& t) {
    const Mat pi = softmax_rows(t, Temperature{});
    double total = 0.0;
    enumerate_objective(obj, [&](const OneHotMatrix& d, const ObjectiveEval& eval) {
      double p = 1.0;
      for (int i = 0; i < d.num_vars(); ++i) p *= pi(i, d.choice[static_cast<std::size_t>(i)]);
      total += p * eval.value;
    });
    return total;
  };
  Mat fd(theta.rows(), theta.cols());
  const double h = 1e-5;
  Mat probe = theta;
  for (Eigen::Index i = 0; i < theta.rows(); ++i) {
    for (Eigen::Index k = 0; k < theta.cols(); ++k) {
      probe(i, k) = theta(i, k) + h;
      const double hi = loss_at(probe);
      probe(i, k) = theta(i, k) - h;
      const double lo = loss_at(probe);
      probe(i, k) = theta(i, k);
      fd(i, k) = (hi - lo) / (2.0 * h);
    }
  }
  return fd;
}

double max_abs_diff(const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("exact gradient closed forms") {
  {
    // f(I_1)=1, f(I_2)=0 at theta = (0,0)
    Vec b(2);
    b << 1.0, 0.0;
    const auto obj = linear_objective(b);
    const Mat grad = exact_gradient(theta_of({0.0, 0.0}), obj);
    CHECK(grad(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(grad(0, 1) == doctest::Approx(-0.25).epsilon(1e-12));
  }
  {
    const auto obj = first_coordinate_cubed();
    const Mat theta = theta_of({std::log(3.0), 0.0});
    const Mat grad = exact_gradient(theta, obj);
    CHECK(grad(0, 0) == doctest::Approx(3.0 / 16).epsilon(1e-12));
    CHECK(grad(0, 1) == doctest::Approx(-3.0 / 16).epsilon(1e-12));
    // cross-check against finite differences of the enumerated expectation
    CHECK(max_abs_diff(grad, fd_of_expected_loss(theta, obj)) <= 1e-8);
  }
  {
    const auto obj = constant_objective(2, 3, 4.2);
    const Mat grad = exact_gradient(Mat::Zero(2, 3), obj);
    CHECK(grad.cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("exact gradient matches finite differences on random instances") {
  RngStream rng(101, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const int num_vars = 1 + static_cast<int>(rng.next_u64() % 2);
    const int n = 2 + static_cast<int>(rng.next_u64() % 3);
    const auto obj = CubicObjective::random(num_vars, n, 500 + trial);
    const Mat theta = random_theta(num_vars, n, rng);
    const Mat grad = exact_gradient(theta, obj);
    CHECK(max_abs_diff(grad, fd_of_expected_loss(theta, obj)) <= 1e-6);
  }
}

TEST_CASE("worked anchor: exact vs ST vs ReinMax expectations") {
  const auto obj = first_coordinate_cubed();
  const Mat theta = theta_of({std::log(3.0), 0.0});

  const Mat exact = exact_gradient(theta, obj);
  CHECK(exact(0, 0) == doctest::Approx(0.1875).epsilon(1e-12));

  EstimatorConfig st_cfg;
  st_cfg.kind = EstimatorKind::ST;
  const Mat st = expected_estimate(st_cfg, theta, obj);
  CHECK(st(0, 0) == doctest::Approx(27.0 / 64).epsilon(1e-12));
  CHECK(st(0, 1) == doctest::Approx(-27.0 / 64).epsilon(1e-12));

  EstimatorConfig rm_cfg;
  rm_cfg.kind = EstimatorKind::ReinMax;
  const Mat rm = expected_estimate(rm_cfg, theta, obj);
  CHECK(rm(0, 0) == doctest::Approx(9.0 / 32).epsilon(1e-12));
  CHECK(rm(0, 1) == doctest::Approx(-9.0 / 32).epsilon(1e-12));

  const Mat first = first_order_oracle(theta, obj);
  CHECK(first(0, 0) == doctest::Approx(27.0 / 64).epsilon(1e-12));

  const Mat second = second_order_oracle(theta, obj);
  CHECK(second(0, 0) == doctest::Approx(9.0 / 32).epsilon(1e-12));

  const Mat second_wo = second_order_wo_baseline_oracle(theta, obj);
  CHECK(second_wo(0, 0) == doctest::Approx(9.0 / 32).epsilon(1e-12));
  CHECK(second_wo(0, 1) == doctest::Approx(-9.0 / 32).epsilon(1e-12));
}

TEST_CASE("reinmax is exact on a symmetric quadratic anchor") {
  const auto obj = first_coordinate_squared();
  const Mat theta = theta_of({0.0, 0.0});
  EstimatorConfig cfg;
  cfg.kind = EstimatorKind::ReinMax;
  const Mat rm = expected_estimate(cfg, theta, obj);
  CHECK(rm(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(rm(0, 1) == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(max_abs_diff(rm, exact_gradient(theta, obj)) <= 1e-12);
}

TEST_CASE("first-order identity: expected ST equals the double sum") {
  RngStream rng(103, 0);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 7);
    const auto obj = CubicObjective::random(1, n, 600 + trial);
    const Mat theta = random_theta(1, n, rng);
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::ST;
    CHECK(max_abs_diff(expected_estimate(cfg, theta, obj), first_order_oracle(theta, obj)) <=
          1e-10);
  }
}

TEST_CASE("second-order identity: expected ReinMax equals the double sum") {
  RngStream rng(105, 0);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 7);
    const auto obj = CubicObjective::random(1, n, 700 + trial);
    const Mat theta = random_theta(1, n, rng);
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::ReinMax;
    const Mat expected = expected_estimate(cfg, theta, obj);
    CHECK(max_abs_diff(expected, second_order_oracle(theta, obj)) <= 1e-10);
    CHECK(max_abs_diff(expected, second_order_wo_baseline_oracle(theta, obj)) <= 1e-10);
  }
}

TEST_CASE("identities extend to several variables under joint enumeration") {
  RngStream rng(104, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const int num_vars = 2 + static_cast<int>(rng.next_u64() % 2);
    const int n = 2 + static_cast<int>(rng.next_u64() % 2);
    const auto obj = CubicObjective::random(num_vars, n, 650 + trial);
    const Mat theta = random_theta(num_vars, n, rng);

    EstimatorConfig st;
    st.kind = EstimatorKind::ST;
    CHECK(max_abs_diff(expected_estimate(st, theta, obj), first_order_oracle(theta, obj)) <= 1e-10);

    EstimatorConfig rm;
    rm.kind = EstimatorKind::ReinMax;
    const Mat expected = expected_estimate(rm, theta, obj);
    CHECK(max_abs_diff(expected, second_order_oracle(theta, obj)) <= 1e-10);
    CHECK(max_abs_diff(expected, second_order_wo_baseline_oracle(theta, obj)) <= 1e-10);

    Vec phi(n);
    for (int k = 0; k < n; ++k) phi[k] = rng.uniform_open01() + 0.05;
    phi /= phi.sum();
    EstimatorConfig avg;
    avg.kind = EstimatorKind::AvgBaselineST;
    avg.phi = phi;
    CHECK(max_abs_diff(expected_estimate(avg, theta, obj), first_order_oracle(theta, obj, phi)) <=
          1e-10);
  }
}

TEST_CASE("baseline-weighted identity: scaled ST expectation equals the phi sum") {
  RngStream rng(107, 0);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 7);
    const auto obj = CubicObjective::random(1, n, 800 + trial);
    const Mat theta = random_theta(1, n, rng);
    Vec phi(n);
    for (int k = 0; k < n; ++k) phi[k] = rng.uniform_open01() + 0.05;
    phi /= phi.sum();

    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::AvgBaselineST;
    cfg.phi = phi;
    CHECK(max_abs_diff(expected_estimate(cfg, theta, obj), first_order_oracle(theta, obj, phi)) <=
          1e-10);

    // uniform weights reduce to the 1/n double sum
    EstimatorConfig uniform_cfg;
    uniform_cfg.kind = EstimatorKind::AvgBaselineST;
    const Vec uniform = Vec::Constant(n, 1.0 / n);
    CHECK(max_abs_diff(expected_estimate(uniform_cfg, theta, obj),
                       first_order_oracle(theta, obj, uniform)) <= 1e-12);
  }
}

TEST_CASE("avg-baseline ST with phi = pi collapses to plain ST") {
  const auto obj = CubicObjective::random(2, 3, 900);
  RngStream rng(109, 0);
  const Mat theta = random_theta(2, 3, rng);
  const Vec pi_row0 = softmax(theta.row(0).transpose());

  EstimatorConfig plain;
  plain.kind = EstimatorKind::ST;

  // phi = pi only matches row-wise when all rows share one distribution, so
  // pin both rows of theta to the same logits.
  Mat tied = theta;
  tied.row(1) = theta.row(0);
  EstimatorConfig scaled;
  scaled.kind = EstimatorKind::AvgBaselineST;
  scaled.phi = pi_row0;

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    BatchSpec batch_a{4, RngStream(seed, 77)};
    BatchSpec batch_b{4, RngStream(seed, 77)};
    const Mat a = st_estimate(tied, obj, batch_a, plain);
    const Mat b = avg_baseline_st_estimate(tied, obj, batch_b, scaled);
    CHECK(max_abs_diff(a, b) <= 1e-12);
  }
}

TEST_CASE("avg-baseline ST scales each sample by phi over pi") {
  // theta = (ln 3, 0): pi = (3/4, 1/4); uniform phi makes a category-1 draw
  // carry the ratio (1/2) / (1/4) = 2.
  const auto obj = CubicObjective::random(1, 2, 902);
  const Mat theta = theta_of({std::log(3.0), 0.0});
  const Vec pi = softmax(theta.row(0).transpose());

  std::uint64_t seed = 0;
  for (;; ++seed) {  // find a draw that lands on the rare category
    RngStream probe = RngStream(seed, 7).substream(0).substream(0);
    if (sample_index(pi, probe) == 1) break;
  }

  EstimatorConfig plain;
  plain.kind = EstimatorKind::ST;
  EstimatorConfig scaled;
  scaled.kind = EstimatorKind::AvgBaselineST;  // default phi: uniform

  BatchSpec batch_a{1, RngStream(seed, 7)};
  BatchSpec batch_b{1, RngStream(seed, 7)};
  const Mat st = st_estimate(theta, obj, batch_a, plain);
  const Mat avg = avg_baseline_st_estimate(theta, obj, batch_b, scaled);
  CHECK(max_abs_diff(avg, (2.0 * st).eval()) <= 1e-12);
}

TEST_CASE("avg-baseline ST guards against vanishing sampled probabilities") {
  const auto obj = CubicObjective::random(1, 2, 901);
  const Mat theta = theta_of({60.0, 0.0});  // pi_2 ~ 8.8e-27
  EstimatorConfig cfg;
  cfg.kind = EstimatorKind::AvgBaselineST;
  CHECK_THROWS_AS(expected_estimate(cfg, theta, obj), NumericGuardError);
}

TEST_CASE("reinforce expectation is the exact gradient") {
  RngStream rng(111, 0);
  for (int trial = 0; trial < 40; ++trial) {
    const int num_vars = 1 + static_cast<int>(rng.next_u64() % 2);
    const int n = 2 + static_cast<int>(rng.next_u64() % 5);
    const auto obj = CubicObjective::random(num_vars, n, 1000 + trial);
    const Mat theta = random_theta(num_vars, n, rng);
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::Reinforce;
    CHECK(max_abs_diff(expected_estimate(cfg, theta, obj), exact_gradient(theta, obj)) <= 1e-12);
  }
}

TEST_CASE("reinforce on a constant objective is mean-zero noise") {
  const auto obj = constant_objective(1, 2, 3.0);
  const Mat theta = theta_of({0.4, -0.2});
  EstimatorConfig cfg;
  cfg.kind = EstimatorKind::Reinforce;

  const int trials = 20000;
  Vec mean = Vec::Zero(2);
  Vec sq = Vec::Zero(2);
  for (int t = 0; t < trials; ++t) {
    BatchSpec batch{1, RngStream(5000, static_cast<std::uint64_t>(t))};
    const Mat est = reinforce_estimate(theta, obj, batch, cfg);
    mean += est.row(0).transpose();
    sq += est.row(0).transpose().cwiseAbs2();
  }
  mean /= trials;
  for (int k = 0; k < 2; ++k) {
    const double var = sq[k] / trials - mean[k] * mean[k];
    const double se = std::sqrt(var / trials);
    CHECK(std::abs(mean[k]) <= 3.0 * se + 1e-12);
  }

  // with the batch-mean baseline a constant objective gives exactly zero
  EstimatorConfig baselined = cfg;
  baselined.reinforce_baseline = ReinforceBaseline::BatchMean;
  BatchSpec batch{8, RngStream(5001, 0)};
  CHECK(reinforce_estimate(theta, obj, batch, baselined).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("reinforce variance scales inversely with batch size") {
  const auto obj = QuadraticOracleObjective::random(1, 2, 41);
  const Mat theta = theta_of({0.3, -0.3});
  EstimatorConfig cfg;
  cfg.kind = EstimatorKind::Reinforce;

  const auto variance_of = [&](int batch_size, int trials, std::uint64_t stream) {
    double sum = 0.0, sumsq = 0.0;
    for (int t = 0; t < trials; ++t) {
      BatchSpec batch{batch_size, RngStream(6000 + stream, static_cast<std::uint64_t>(t))};
      const double x = reinforce_estimate(theta, obj, batch, cfg)(0, 0);
      sum += x;
      sumsq += x * x;
    }
    const double mean = sum / trials;
    return sumsq / trials - mean * mean;
  };

  const double var_small = variance_of(1, 4000, 0);
  const double var_big = variance_of(10000, 300, 1);
  const double ratio = var_small / var_big;
  CHECK(ratio >= 5e3);
  CHECK(ratio <= 2e4);
}

TEST_CASE("ST expectation is exact on linear objectives") {
  RngStream rng(113, 0);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 7);
    const auto obj = CubicObjective::random(1, n, 1100 + trial, /*degree=*/1);
    const Mat theta = random_theta(1, n, rng);
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::ST;
    CHECK(max_abs_diff(expected_estimate(cfg, theta, obj), exact_gradient(theta, obj)) <= 1e-10);
    CHECK(max_abs_diff(first_order_oracle(theta, obj), exact_gradient(theta, obj)) <= 1e-12);
  }
}

TEST_CASE("constant objectives silence every pathwise estimator") {
  const auto obj = constant_objective(2, 3, -1.7);
  const Mat theta = Mat::Zero(2, 3);
  BatchSpec batch{3, RngStream(7, 7)};
  for (EstimatorKind kind : {EstimatorKind::ST, EstimatorKind::STGS, EstimatorKind::GrMc,
                             EstimatorKind::ReinMax, EstimatorKind::AvgBaselineST}) {
    EstimatorConfig cfg;
    cfg.kind = kind;
    cfg.mc_samples = 4;
    BatchSpec b = batch;
    CHECK(batch_estimate(theta, obj, b, cfg).grad.cwiseAbs().maxCoeff() <= 1e-15);
  }
  CHECK(first_order_oracle(theta, obj).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(second_order_oracle(theta, obj).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(second_order_wo_baseline_oracle(theta, obj).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("quadratic exactness separates ReinMax from ST") {
  RngStream rng(115, 0);
  int st_gaps = 0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    const int num_vars = 1 + static_cast<int>(rng.next_u64() % 2);
    const int n = 2 + static_cast<int>(rng.next_u64() % 4);
    const auto obj = QuadraticOracleObjective::random(num_vars, n, 1200 + trial);
    const Mat theta = random_theta(num_vars, n, rng);
    const Mat exact = exact_gradient(theta, obj);

    EstimatorConfig rm;
    rm.kind = EstimatorKind::ReinMax;
    CHECK(max_abs_diff(expected_estimate(rm, theta, obj), exact) <= 1e-9);

    EstimatorConfig st;
    st.kind = EstimatorKind::ST;
    if (max_abs_diff(expected_estimate(st, theta, obj), exact) > 1e-6) ++st_gaps;
  }
  CHECK(st_gaps >= trials * 9 / 10);
}

TEST_CASE("tangent rows: estimator outputs sum to zero per variable") {
  RngStream rng(117, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const int num_vars = 1 + static_cast<int>(rng.next_u64() % 2);
    const int n = 2 + static_cast<int>(rng.next_u64() % 5);
    const auto obj = CubicObjective::random(num_vars, n, 1300 + trial);
    const Mat theta = random_theta(num_vars, n, rng);

    std::vector<Mat> grads;
    grads.push_back(exact_gradient(theta, obj));
    grads.push_back(first_order_oracle(theta, obj));
    grads.push_back(second_order_oracle(theta, obj));
    grads.push_back(second_order_wo_baseline_oracle(theta, obj));
    for (EstimatorKind kind : {EstimatorKind::ST, EstimatorKind::ReinMax}) {
      EstimatorConfig cfg;
      cfg.kind = kind;
      grads.push_back(expected_estimate(cfg, theta, obj));
      BatchSpec batch{2, RngStream(1300 + static_cast<std::uint64_t>(trial), 3)};
      grads.push_back(batch_estimate(theta, obj, batch, cfg).grad);
    }
    for (const Mat& g : grads) {
      CHECK(g.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("bias ordering: ReinMax tracks the exact gradient more closely than ST") {
  RngStream rng(119, 0);
  const int trials = 200;
  int reinmax_wins = 0;
  double st_angle = 0.0, rm_angle = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 7);
    const auto obj = CubicObjective::random(1, n, 1400 + trial);
    const Mat theta = random_theta(1, n, rng);
    const Mat exact = exact_gradient(theta, obj);

    EstimatorConfig st;
    st.kind = EstimatorKind::ST;
    EstimatorConfig rm;
    rm.kind = EstimatorKind::ReinMax;
    const double cos_st = cosine_similarity(expected_estimate(st, theta, obj), exact);
    const double cos_rm = cosine_similarity(expected_estimate(rm, theta, obj), exact);
    if (cos_rm >= cos_st) ++reinmax_wins;
    st_angle += std::acos(std::clamp(cos_st, -1.0, 1.0));
    rm_angle += std::acos(std::clamp(cos_rm, -1.0, 1.0));
  }
  CHECK(reinmax_wins >= trials * 8 / 10);
  CHECK(rm_angle / trials < st_angle / trials);
}

TEST_CASE("stgs: per-sample estimate matches finite differences of its surrogate") {
  RngStream rng(121, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 5);
    const auto obj = CubicObjective::random(1, n, 1500 + trial);
    const Mat theta = random_theta(1, n, rng);
    const double tau = (trial % 3 == 0) ? 0.5 : ((trial % 3 == 1) ? 1.0 : 2.0);

    RngStream draw_rng(2200 + static_cast<std::uint64_t>(trial), 0);
    const GumbelDraw draw = gumbel_argmax(theta.row(0).transpose(), draw_rng);
    const OneHotMatrix d({draw.argmax}, n);
    const Vec g = obj.eval(d).grad.row(0).transpose();
    const Vec gumbels = draw.perturbed - theta.row(0).transpose();

    const Vec row = stgs_row(g, draw.perturbed, tau);
    const Vec fd = finite_diff_grad(
        [&](const Vec& t) { return g.dot(softmax(t + gumbels, Temperature(tau))); },
        theta.row(0).transpose(), 1e-5);
    const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-8);
    CHECK((row - fd).cwiseAbs().maxCoeff() / scale <= 1e-5);
  }
}

TEST_CASE("stgs estimates shrink as the temperature grows") {
  const auto obj = CubicObjective::random(1, 4, 1600);
  const Mat theta = theta_of({0.5, -0.5, 0.2, 0.0});

  double previous = std::numeric_limits<double>::infinity();
  for (double tau : {1.0, 10.0, 100.0, 1000.0}) {
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::STGS;
    cfg.tau = Temperature(tau);
    BatchSpec batch{16, RngStream(1601, 0)};
    const Mat est = stgs_estimate(theta, obj, batch, cfg);

    // per-row bound |J_tau g| <= ||g|| * n / tau
    BatchSpec replay{16, RngStream(1601, 0)};
    double bound = 0.0;
    for (int b = 0; b < 16; ++b) {
      RngStream elem = replay.rng.substream(static_cast<std::uint64_t>(b));
      RngStream var_rng = elem.substream(0);
      const GumbelDraw draw = gumbel_argmax(theta.row(0).transpose(), var_rng);
      const OneHotMatrix d({draw.argmax}, 4);
      bound = std::max(bound, obj.eval(d).grad.row(0).norm() * 4.0 / tau);
    }
    CHECK(est.norm() <= bound + 1e-12);
    CHECK(est.norm() <= previous + 1e-12);
    previous = est.norm();
  }
}

TEST_CASE("gr-mc with one inner sample matches stgs in distribution") {
  const auto obj = CubicObjective::random(1, 3, 1700);
  const Mat theta = theta_of({0.2, -0.4, 0.6});

  const int trials = 100000;
  Vec mean_stgs = Vec::Zero(3), mean_gr = Vec::Zero(3);
  Vec sq_stgs = Vec::Zero(3), sq_gr = Vec::Zero(3);
  for (int t = 0; t < trials; ++t) {
    EstimatorConfig stgs_cfg;
    stgs_cfg.kind = EstimatorKind::STGS;
    BatchSpec b1{1, RngStream(1701, static_cast<std::uint64_t>(t))};
    const Vec a = stgs_estimate(theta, obj, b1, stgs_cfg).row(0).transpose();
    mean_stgs += a;
    sq_stgs += a.cwiseAbs2();

    EstimatorConfig gr_cfg;
    gr_cfg.kind = EstimatorKind::GrMc;
    gr_cfg.mc_samples = 1;
    BatchSpec b2{1, RngStream(1702, static_cast<std::uint64_t>(t))};
    const Vec c = gr_mc_estimate(theta, obj, b2, gr_cfg).row(0).transpose();
    mean_gr += c;
    sq_gr += c.cwiseAbs2();
  }
  mean_stgs /= trials;
  mean_gr /= trials;
  for (int k = 0; k < 3; ++k) {
    const double var_a = sq_stgs[k] / trials - mean_stgs[k] * mean_stgs[k];
    const double var_c = sq_gr[k] / trials - mean_gr[k] * mean_gr[k];
    const double se = std::sqrt((var_a + var_c) / trials);
    CHECK(std::abs(mean_stgs[k] - mean_gr[k]) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("gr-mc inner averaging reduces the conditional variance") {
  const auto obj = QuadraticOracleObjective::random(1, 3, 1800);
  const Mat theta = theta_of({0.3, 0.0, -0.3});
  const int fixed_category = 1;
  const OneHotMatrix d({fixed_category}, 3);
  const Vec g = obj.eval(d).grad.row(0).transpose();

  const auto variance_of = [&](int mc_samples, std::uint64_t stream) {
    double sum = 0.0, sumsq = 0.0;
    const int trials = 1000;
    RngStream rng(1801, stream);
    for (int t = 0; t < trials; ++t) {
      Vec row = Vec::Zero(3);
      for (int m = 0; m < mc_samples; ++m) {
        const Vec perturbed = conditional_gumbels(theta.row(0).transpose(), fixed_category, rng);
        row += stgs_row(g, perturbed, 1.0);
      }
      const double x = row[0] / mc_samples;
      sum += x;
      sumsq += x * x;
    }
    const double mean = sum / trials;
    return sumsq / trials - mean * mean;
  };

  const double var_single = variance_of(1, 0);
  const double var_many = variance_of(1000, 1);
  CHECK(var_many < 0.5 * var_single);
}

TEST_CASE("expected_estimate rejects estimators without closed-form expectations") {
  const auto obj = CubicObjective::random(1, 3, 1900);
  const Mat theta = Mat::Zero(1, 3);
  for (EstimatorKind kind : {EstimatorKind::STGS, EstimatorKind::GrMc}) {
    EstimatorConfig cfg;
    cfg.kind = kind;
    CHECK_THROWS_AS(expected_estimate(cfg, theta, obj), std::invalid_argument);
  }
}

TEST_CASE("cosine similarity endpoints") {
  Mat a(2, 2);
  a << 1.0, -2.0, 0.5, 3.0;
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(a, (-a).eval()) == doctest::Approx(-1.0).epsilon(1e-12));

  Mat b(1, 2), c(1, 2);
  b << 1.0, 0.0;
  c << 0.0, 1.0;
  CHECK(cosine_similarity(b, c) == doctest::Approx(0.0));
  CHECK(cosine_similarity(b, Mat::Zero(1, 2)) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(b, Mat::Zero(2, 2)), std::invalid_argument);
}

TEST_CASE("estimator names round-trip") {
  for (EstimatorKind kind :
       {EstimatorKind::Exact, EstimatorKind::Reinforce, EstimatorKind::ST, EstimatorKind::STGS,
        EstimatorKind::GrMc, EstimatorKind::ReinMax, EstimatorKind::FirstOrderOracle,
        EstimatorKind::SecondOrderOracle, EstimatorKind::SecondOrderWoBaselineOracle,
        EstimatorKind::AvgBaselineST}) {
    CHECK(estimator_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(estimator_kind_from_string("nope"), std::invalid_argument);
}

TEST_CASE("reinmax config warning fires below tau = 1") {
  EstimatorConfig cfg;
  cfg.kind = EstimatorKind::ReinMax;
  cfg.tau = Temperature(0.5);
  CHECK_FALSE(config_warnings(cfg).empty());
  cfg.tau = Temperature(1.0);
  CHECK(config_warnings(cfg).empty());
}
