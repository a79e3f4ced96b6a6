#include "catgrad/verify.hpp"

#include "catgrad/categorical.hpp"
#include "catgrad/estimators.hpp"
#include "catgrad/numerics.hpp"
#include "catgrad/objectives.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace catgrad {

namespace {

struct Instance {
  Mat theta;
  CubicObjective obj;
  int n;
  std::uint64_t obj_seed;
};

Instance make_instance(std::uint64_t suite_seed, int index, int degree = 3) {
  RngStream rng(suite_seed, static_cast<std::uint64_t>(index));
  const int n = 2 + static_cast<int>(rng.next_u64() % 7);
  const std::uint64_t obj_seed = RngStream::mix64(suite_seed + 7919 * static_cast<std::uint64_t>(index));
  Mat theta(1, n);
  for (int k = 0; k < n; ++k) theta(0, k) = 6.0 * rng.uniform_open01() - 3.0;
  return {std::move(theta), CubicObjective::random(1, n, obj_seed, degree), n, obj_seed};
}

std::string instance_detail(const Instance& inst, int index) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "instance %d (n=%d, objective seed %llu)", index, inst.n,
                static_cast<unsigned long long>(inst.obj_seed));
  return buf;
}

class CheckRunner {
 public:
  explicit CheckRunner(VerifyReport& report) : report_(report) {}

  // Residual-style check: passes when the worst residual stays within tol.
  void residual_check(const std::string& name, double tolerance, int instances,
                      const std::function<void(int, double&, std::string&)>& body) {
    CheckResult result;
    result.name = name;
    result.tolerance = tolerance;
    result.instances = instances;
    for (int i = 0; i < instances; ++i) {
      double residual = 0.0;
      std::string detail;
      body(i, residual, detail);
      if (residual > result.max_residual) {
        result.max_residual = residual;
        result.detail = detail;
      }
    }
    result.passed = result.max_residual <= tolerance;
    push(result);
  }

  void push(CheckResult result) {
    report_.all_passed = report_.all_passed && result.passed;
    report_.checks.push_back(std::move(result));
  }

 private:
  VerifyReport& report_;
};

EstimatorConfig config_of(EstimatorKind kind) {
  EstimatorConfig cfg;
  cfg.kind = kind;
  return cfg;
}

double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

VerifyReport run_verify(const VerifyOptions& opts) {
  VerifyReport report;
  report.seed = opts.seed;
  CheckRunner runner(report);

  const int identity_count = opts.identity_instances;
  const int quad_count = opts.quadratic_instances;

  runner.residual_check(
      "st-expectation-matches-first-order", 1e-10, identity_count,
      [&](int i, double& residual, std::string& detail) {
        const Instance inst = make_instance(opts.seed, i);
        residual = max_abs(expected_estimate(config_of(EstimatorKind::ST), inst.theta, inst.obj) -
                           first_order_oracle(inst.theta, inst.obj));
        detail = instance_detail(inst, i);
      });

  runner.residual_check(
      "reinmax-expectation-matches-second-order", 1e-10, identity_count,
      [&](int i, double& residual, std::string& detail) {
        const Instance inst = make_instance(opts.seed, i);
        Mat expected = expected_estimate(config_of(EstimatorKind::ReinMax), inst.theta, inst.obj);
        if (opts.corrupt_reinmax) expected(0, 0) += 1e-6;
        residual = max_abs(expected - second_order_oracle(inst.theta, inst.obj));
        detail = instance_detail(inst, i);
      });

  runner.residual_check(
      "second-order-baseline-free-equivalence", 1e-10, identity_count,
      [&](int i, double& residual, std::string& detail) {
        const Instance inst = make_instance(opts.seed, i);
        residual = max_abs(second_order_wo_baseline_oracle(inst.theta, inst.obj) -
                           second_order_oracle(inst.theta, inst.obj));
        detail = instance_detail(inst, i);
      });

  runner.residual_check(
      "avg-baseline-scaling-identity", 1e-10, identity_count,
      [&](int i, double& residual, std::string& detail) {
        const Instance inst = make_instance(opts.seed, i);
        RngStream phi_rng(opts.seed ^ 0xf1f1, static_cast<std::uint64_t>(i));
        Vec phi(inst.n);
        for (int k = 0; k < inst.n; ++k) phi[k] = phi_rng.uniform_open01() + 0.05;
        phi /= phi.sum();
        EstimatorConfig cfg = config_of(EstimatorKind::AvgBaselineST);
        cfg.phi = phi;
        residual = max_abs(expected_estimate(cfg, inst.theta, inst.obj) -
                           first_order_oracle(inst.theta, inst.obj, phi));
        detail = instance_detail(inst, i);
      });

  runner.residual_check(
      "reinforce-expectation-unbiased", 1e-12, identity_count,
      [&](int i, double& residual, std::string& detail) {
        const Instance inst = make_instance(opts.seed, i);
        residual = max_abs(expected_estimate(config_of(EstimatorKind::Reinforce), inst.theta,
                                             inst.obj) -
                           exact_gradient(inst.theta, inst.obj));
        detail = instance_detail(inst, i);
      });

  runner.residual_check(
      "reinmax-exact-on-quadratics", 1e-9, quad_count,
      [&](int i, double& residual, std::string& detail) {
        RngStream rng(opts.seed ^ 0x9a9a, static_cast<std::uint64_t>(i));
        const int num_vars = 1 + static_cast<int>(rng.next_u64() % 2);
        const int n = 2 + static_cast<int>(rng.next_u64() % 4);
        const auto obj = QuadraticOracleObjective::random(num_vars, n, opts.seed + 31 * i);
        Mat theta(num_vars, n);
        for (int v = 0; v < num_vars; ++v) {
          for (int k = 0; k < n; ++k) theta(v, k) = 6.0 * rng.uniform_open01() - 3.0;
        }
        residual = max_abs(expected_estimate(config_of(EstimatorKind::ReinMax), theta, obj) -
                           exact_gradient(theta, obj));
        char buf[96];
        std::snprintf(buf, sizeof(buf), "instance %d (L=%d, n=%d)", i, num_vars, n);
        detail = buf;
      });

  {
    CheckResult result;
    result.name = "st-biased-on-quadratics";
    result.tolerance = 0.9;  // minimum fraction of instances with a visible gap
    result.instances = quad_count;
    int gaps = 0;
    for (int i = 0; i < quad_count; ++i) {
      RngStream rng(opts.seed ^ 0x9a9a, static_cast<std::uint64_t>(i));
      const int num_vars = 1 + static_cast<int>(rng.next_u64() % 2);
      const int n = 2 + static_cast<int>(rng.next_u64() % 4);
      const auto obj = QuadraticOracleObjective::random(num_vars, n, opts.seed + 31 * i);
      Mat theta(num_vars, n);
      for (int v = 0; v < num_vars; ++v) {
        for (int k = 0; k < n; ++k) theta(v, k) = 6.0 * rng.uniform_open01() - 3.0;
      }
      if (max_abs(expected_estimate(config_of(EstimatorKind::ST), theta, obj) -
                  exact_gradient(theta, obj)) > 1e-6) {
        ++gaps;
      }
    }
    result.max_residual = static_cast<double>(gaps) / quad_count;
    result.passed = result.max_residual >= result.tolerance;
    result.detail = std::to_string(gaps) + " of " + std::to_string(quad_count) + " instances show a gap";
    runner.push(result);
  }

  runner.residual_check(
      "st-exact-on-linear", 1e-10, quad_count,
      [&](int i, double& residual, std::string& detail) {
        const Instance inst = make_instance(opts.seed ^ 0x11ee, i, /*degree=*/1);
        residual = max_abs(expected_estimate(config_of(EstimatorKind::ST), inst.theta, inst.obj) -
                           exact_gradient(inst.theta, inst.obj));
        detail = instance_detail(inst, i);
      });

  runner.residual_check(
      "tangent-rows-zero-sum", 1e-9, identity_count,
      [&](int i, double& residual, std::string& detail) {
        const Instance inst = make_instance(opts.seed, i);
        double worst = 0.0;
        for (EstimatorKind kind : {EstimatorKind::ST, EstimatorKind::ReinMax}) {
          const Mat est = expected_estimate(config_of(kind), inst.theta, inst.obj);
          worst = std::max(worst, est.rowwise().sum().cwiseAbs().maxCoeff());
        }
        worst = std::max(worst,
                         exact_gradient(inst.theta, inst.obj).rowwise().sum().cwiseAbs().maxCoeff());
        worst = std::max(worst, second_order_oracle(inst.theta, inst.obj)
                                    .rowwise()
                                    .sum()
                                    .cwiseAbs()
                                    .maxCoeff());
        residual = worst;
        detail = instance_detail(inst, i);
      });

  {
    CheckResult result;
    result.name = "bias-ordering-cosine";
    result.tolerance = 0.8;  // minimum win rate; mean angle must also favor ReinMax
    result.instances = identity_count;
    int wins = 0;
    double st_angle = 0.0, rm_angle = 0.0;
    for (int i = 0; i < identity_count; ++i) {
      const Instance inst = make_instance(opts.seed ^ 0xb1a5, i);
      const Mat exact = exact_gradient(inst.theta, inst.obj);
      const double cos_st =
          cosine_similarity(expected_estimate(config_of(EstimatorKind::ST), inst.theta, inst.obj),
                            exact);
      const double cos_rm = cosine_similarity(
          expected_estimate(config_of(EstimatorKind::ReinMax), inst.theta, inst.obj), exact);
      if (cos_rm >= cos_st) ++wins;
      st_angle += std::acos(std::clamp(cos_st, -1.0, 1.0));
      rm_angle += std::acos(std::clamp(cos_rm, -1.0, 1.0));
    }
    result.max_residual = static_cast<double>(wins) / identity_count;
    result.passed = result.max_residual >= result.tolerance && rm_angle < st_angle;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "wins %d/%d, mean angle st=%.6f reinmax=%.6f", wins,
                  identity_count, st_angle / identity_count, rm_angle / identity_count);
    result.detail = buf;
    runner.push(result);
  }

  {
    const std::vector<std::pair<std::string, ScalarPath>> paths = {
        {"exp", {[](double x) { return std::exp(x); }, [](double x) { return std::exp(x); }, 0, 1}},
        {"sin", {[](double x) { return std::sin(x); }, [](double x) { return std::cos(x); }, 0, 1}},
        {"atan",
         {[](double x) { return std::atan(x); }, [](double x) { return 1.0 / (1.0 + x * x); }, 0,
          1}},
    };
    CheckResult euler;
    euler.name = "euler-global-order-one";
    euler.tolerance = 0.2;
    euler.instances = static_cast<int>(paths.size());
    CheckResult heun;
    heun.name = "heun-global-order-two";
    heun.tolerance = 0.2;
    heun.instances = static_cast<int>(paths.size());
    for (const auto& [label, path] : paths) {
      const double e = std::abs(convergence_order(StepMethod::Euler, path, 5).observed_order - 1.0);
      if (e > euler.max_residual) {
        euler.max_residual = e;
        euler.detail = "worst path: g = " + label;
      }
      const double h = std::abs(convergence_order(StepMethod::Heun, path, 5).observed_order - 2.0);
      if (h > heun.max_residual) {
        heun.max_residual = h;
        heun.detail = "worst path: g = " + label;
      }
    }
    euler.passed = euler.max_residual <= euler.tolerance;
    heun.passed = heun.max_residual <= heun.tolerance;
    runner.push(euler);
    runner.push(heun);
  }

  runner.residual_check("heun-exact-on-quadratics", 1e-10, 50,
                        [&](int i, double& residual, std::string& detail) {
                          RngStream rng(opts.seed ^ 0x4e4e, static_cast<std::uint64_t>(i));
                          const double a = 20.0 * rng.uniform_open01() - 10.0;
                          const double b = 20.0 * rng.uniform_open01() - 10.0;
                          const double c = 20.0 * rng.uniform_open01() - 10.0;
                          const ScalarPath path{
                              [=](double x) { return (a * x + b) * x + c; },
                              [=](double x) { return 2.0 * a * x + b; }, 0.0, 1.0};
                          residual = std::abs(heun_increment(path) - (path.g(1.0) - path.g(0.0)));
                          char buf[96];
                          std::snprintf(buf, sizeof(buf), "coefficients (%.3f, %.3f, %.3f)", a, b, c);
                          detail = buf;
                        });

  runner.residual_check(
      "stgs-surrogate-finite-difference", 1e-5, 100,
      [&](int i, double& residual, std::string& detail) {
        const Instance inst = make_instance(opts.seed ^ 0x57f5, i);
        const double tau = (i % 3 == 0) ? 0.7 : ((i % 3 == 1) ? 1.0 : 1.8);
        RngStream draw_rng(opts.seed ^ 0x57f6, static_cast<std::uint64_t>(i));
        const GumbelDraw draw = gumbel_argmax(inst.theta.row(0).transpose(), draw_rng);
        const OneHotMatrix d({draw.argmax}, inst.n);
        const Vec g = inst.obj.eval(d).grad.row(0).transpose();
        const Vec gumbels = draw.perturbed - inst.theta.row(0).transpose();

        const Vec row = stgs_row(g, draw.perturbed, tau);
        const Vec fd = finite_diff_grad(
            [&](const Vec& t) { return g.dot(softmax(t + gumbels, Temperature(tau))); },
            inst.theta.row(0).transpose(), 1e-5);
        const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-8);
        residual = (row - fd).cwiseAbs().maxCoeff() / scale;
        detail = instance_detail(inst, i);
      });

  {
    CheckResult result;
    result.name = "conditional-gumbel-argmax-invariant";
    result.tolerance = 0.0;  // violations allowed: none
    result.instances = 500;
    int violations = 0;
    RngStream rng(opts.seed ^ 0xc0c0, 0);
    for (int i = 0; i < result.instances; ++i) {
      const int n = 2 + static_cast<int>(rng.next_u64() % 7);
      Vec theta(n);
      for (int k = 0; k < n; ++k) theta[k] = 8.0 * rng.uniform_open01() - 4.0;
      const int k = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n));
      const Vec t = conditional_gumbels(theta, k, rng);
      int argmax = 0;
      t.maxCoeff(&argmax);
      if (argmax != k) {
        ++violations;
        if (result.detail.empty()) result.detail = "violated at instance " + std::to_string(i);
      }
    }
    result.max_residual = violations;
    result.passed = violations == 0;
    runner.push(result);
  }

  runner.residual_check(
      "softmax-jacobian-finite-difference", 1e-6, 50,
      [&](int i, double& residual, std::string& detail) {
        RngStream rng(opts.seed ^ 0x50f7, static_cast<std::uint64_t>(i));
        const int n = 2 + static_cast<int>(rng.next_u64() % 7);
        Vec logits(n);
        for (int k = 0; k < n; ++k) logits[k] = 10.0 * rng.uniform_open01() - 5.0;
        const Mat jac = softmax_jacobian(softmax(logits));
        double worst = 0.0;
        for (int out = 0; out < n; ++out) {
          const Vec fd =
              finite_diff_grad([&](const Vec& x) { return softmax(x)[out]; }, logits, 1e-5);
          worst = std::max(worst, (jac.row(out).transpose() - fd).cwiseAbs().maxCoeff());
        }
        residual = worst;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "instance %d (n=%d)", i, n);
        detail = buf;
      });

  return report;
}

std::string VerifyReport::to_text() const {
  std::string out;
  for (const CheckResult& check : checks) {
    char line[320];
    std::snprintf(line, sizeof(line), "[%s] %-42s max residual %.3e (tol %.0e, %d instances)",
                  check.passed ? " OK " : "FAIL", check.name.c_str(), check.max_residual,
                  check.tolerance, check.instances);
    out += line;
    if (!check.passed && !check.detail.empty()) {
      out += "  <- " + check.detail;
    }
    out += '\n';
  }
  char tail[96];
  std::snprintf(tail, sizeof(tail), "%s (suite seed %llu)\n",
                all_passed ? "all checks passed" : "CHECKS FAILED",
                static_cast<unsigned long long>(seed));
  out += tail;
  return out;
}

std::string VerifyReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const CheckResult& check : checks) {
    arr.push_back({{"name", check.name},
                   {"passed", check.passed},
                   {"max_residual", check.max_residual},
                   {"tolerance", check.tolerance},
                   {"instances", check.instances},
                   {"detail", check.detail}});
  }
  return nlohmann::json{{"seed", seed}, {"checks", arr}, {"all_passed", all_passed}}.dump(2) + "\n";
}

}  // namespace catgrad
