#include "catgrad/estimators.hpp"

#include "catgrad/categorical.hpp"

#include <algorithm>
#include <cmath>

namespace catgrad {

namespace {

constexpr double kProbGuard = 1e-12;

void validate_config(const EstimatorConfig& cfg, int n) {
  if (cfg.mc_samples < 1) {
    throw std::invalid_argument("mc_samples must be >= 1");
  }
  if (cfg.phi) {
    if (cfg.phi->size() != n) {
      throw std::invalid_argument("phi must have one weight per category");
    }
    if (cfg.phi->minCoeff() < 0.0 || std::abs(cfg.phi->sum() - 1.0) > 1e-9) {
      throw std::invalid_argument("phi must lie on the simplex");
    }
  }
}

void validate_batch(const BatchSpec& batch) {
  if (batch.batch_size < 1) {
    throw std::invalid_argument("batch_size must be >= 1");
  }
}

// (diag(p) - p p^T) g without forming the matrix.
Vec jacobian_apply(const Vec& p, const Vec& g) {
  return p.cwiseProduct(g) - p.dot(g) * p;
}

Vec phi_or_uniform(const EstimatorConfig& cfg, int n) {
  if (cfg.phi) return *cfg.phi;
  return Vec::Constant(n, 1.0 / n);
}

// Joint probability of the outcome under row-wise softmax(theta).
double joint_probability(const Mat& pi0, const OneHotMatrix& d) {
  double p = 1.0;
  for (int i = 0; i < d.num_vars(); ++i) {
    p *= pi0(i, d.choice[static_cast<std::size_t>(i)]);
  }
  return p;
}

double product_excluding(const Mat& pi0, const OneHotMatrix& d, int skip) {
  double p = 1.0;
  for (int i = 0; i < d.num_vars(); ++i) {
    if (i == skip) continue;
    p *= pi0(i, d.choice[static_cast<std::size_t>(i)]);
  }
  return p;
}

OneHotMatrix sample_joint(const Mat& pi0, RngStream& elem) {
  const int num_vars = static_cast<int>(pi0.rows());
  OneHotMatrix d(std::vector<int>(static_cast<std::size_t>(num_vars), 0),
                 static_cast<int>(pi0.cols()));
  for (int i = 0; i < num_vars; ++i) {
    RngStream var_rng = elem.substream(static_cast<std::uint64_t>(i));
    d.choice[static_cast<std::size_t>(i)] = sample_index(pi0.row(i).transpose(), var_rng);
  }
  return d;
}

Mat reinforce_rows(const Mat& pi0, const OneHotMatrix& d, double weight) {
  Mat rows = -pi0;
  for (int i = 0; i < d.num_vars(); ++i) {
    rows(i, d.choice[static_cast<std::size_t>(i)]) += 1.0;
  }
  return weight * rows;
}

Mat avg_baseline_rows(const Mat& g, const OneHotMatrix& d, const Mat& pi0, const Mat& pi_tau,
                      double tau, const Vec& phi) {
  Mat rows = st_rows(g, pi_tau, tau);
  for (int i = 0; i < d.num_vars(); ++i) {
    const int k = d.choice[static_cast<std::size_t>(i)];
    const double p = pi0(i, k);
    if (p < kProbGuard) {
      throw NumericGuardError("sampled category probability " + std::to_string(p) +
                              " below guard 1e-12; phi/pi scaling is unstable");
    }
    rows.row(i) *= phi[k] / p;
  }
  return rows;
}

void check_same_shape(const LogitMatrix& theta, const Objective& obj) {
  if (theta.rows() != obj.num_vars() || theta.cols() != obj.num_cats()) {
    throw std::invalid_argument("logit matrix shape does not match the objective");
  }
}

}  // namespace

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Exact: return "exact";
    case EstimatorKind::Reinforce: return "reinforce";
    case EstimatorKind::ST: return "st";
    case EstimatorKind::STGS: return "stgs";
    case EstimatorKind::GrMc: return "gr-mc";
    case EstimatorKind::ReinMax: return "reinmax";
    case EstimatorKind::FirstOrderOracle: return "first-order-oracle";
    case EstimatorKind::SecondOrderOracle: return "second-order-oracle";
    case EstimatorKind::SecondOrderWoBaselineOracle: return "second-order-wo-baseline-oracle";
    case EstimatorKind::AvgBaselineST: return "avg-baseline-st";
  }
  return "unknown";
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
  for (EstimatorKind kind :
       {EstimatorKind::Exact, EstimatorKind::Reinforce, EstimatorKind::ST, EstimatorKind::STGS,
        EstimatorKind::GrMc, EstimatorKind::ReinMax, EstimatorKind::FirstOrderOracle,
        EstimatorKind::SecondOrderOracle, EstimatorKind::SecondOrderWoBaselineOracle,
        EstimatorKind::AvgBaselineST}) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

std::vector<std::string> config_warnings(const EstimatorConfig& cfg) {
  std::vector<std::string> warnings;
  if (cfg.kind == EstimatorKind::ReinMax && cfg.tau.value < 1.0) {
    warnings.push_back("reinmax: tau < 1 trades accuracy for nothing here; tau >= 1 recommended");
  }
  return warnings;
}

// --- per-sample building blocks ---------------------------------------------

Mat st_rows(const Mat& g, const Mat& pi_tau, double tau) {
  Mat rows(g.rows(), g.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const Vec p = pi_tau.row(i).transpose();
    rows.row(i) = jacobian_apply(p, g.row(i).transpose()).transpose() / tau;
  }
  return rows;
}

Mat reinmax_rows(const Mat& g, const OneHotMatrix& d, const Mat& pi0, const Mat& pi_tau) {
  Mat rows(g.rows(), g.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const Vec gi = g.row(i).transpose();
    Vec mixed = pi_tau.row(i).transpose() / 2.0;
    mixed[d.choice[static_cast<std::size_t>(i)]] += 0.5;
    const Vec p0 = pi0.row(i).transpose();
    rows.row(i) =
        (2.0 * jacobian_apply(mixed, gi) - 0.5 * jacobian_apply(p0, gi)).transpose();
  }
  return rows;
}

Vec stgs_row(const Vec& g_row, const Vec& perturbed, double tau) {
  const Vec s = softmax(perturbed, Temperature(tau));
  return jacobian_apply(s, g_row) / tau;
}

// --- enumeration-based gradients --------------------------------------------

GradEstimate exact_gradient(const LogitMatrix& theta, const Objective& obj) {
  validate_logits(theta);
  check_same_shape(theta, obj);
  const Mat pi0 = softmax_rows(theta, Temperature{});
  Mat grad = Mat::Zero(theta.rows(), theta.cols());
  enumerate_objective(obj, [&](const OneHotMatrix& d, const ObjectiveEval& eval) {
    grad += reinforce_rows(pi0, d, joint_probability(pi0, d) * eval.value);
  });
  return grad;
}

double expected_loss(const LogitMatrix& theta, const Objective& obj) {
  validate_logits(theta);
  check_same_shape(theta, obj);
  const Mat pi0 = softmax_rows(theta, Temperature{});
  double loss = 0.0;
  enumerate_objective(obj, [&](const OneHotMatrix& d, const ObjectiveEval& eval) {
    loss += joint_probability(pi0, d) * eval.value;
  });
  return loss;
}

GradEstimate first_order_oracle(const LogitMatrix& theta, const Objective& obj) {
  return first_order_oracle(theta, obj, Vec());  // empty phi means "weight by pi"
}

GradEstimate first_order_oracle(const LogitMatrix& theta, const Objective& obj, const Vec& phi) {
  validate_logits(theta);
  check_same_shape(theta, obj);
  const int n = obj.num_cats();
  if (n > 64) {
    throw std::invalid_argument("oracle double sums are limited to n <= 64");
  }
  if (phi.size() != 0 && phi.size() != n) {
    throw std::invalid_argument("phi must have one weight per category");
  }
  const Mat pi0 = softmax_rows(theta, Temperature{});
  std::vector<Mat> jac(static_cast<std::size_t>(theta.rows()));
  for (Eigen::Index v = 0; v < theta.rows(); ++v) {
    jac[static_cast<std::size_t>(v)] = softmax_jacobian(pi0.row(v).transpose());
  }

  Mat grad = Mat::Zero(theta.rows(), theta.cols());
  enumerate_objective(obj, [&](const OneHotMatrix& d, const ObjectiveEval& eval) {
    for (int v = 0; v < d.num_vars(); ++v) {
      const int j = d.choice[static_cast<std::size_t>(v)];
      const double baseline_weight = (phi.size() == 0) ? pi0(v, j) : phi[j];
      const double w = product_excluding(pi0, d, v) * baseline_weight;
      if (w == 0.0) continue;
      const Mat& jv = jac[static_cast<std::size_t>(v)];
      for (int i = 0; i < d.num_cats; ++i) {
        const double secant = eval.grad(v, i) - eval.grad(v, j);
        grad.row(v) += (w * secant) * jv.row(i);
      }
    }
  });
  return grad;
}

GradEstimate second_order_oracle(const LogitMatrix& theta, const Objective& obj) {
  validate_logits(theta);
  check_same_shape(theta, obj);
  const int n = obj.num_cats();
  if (n > 64) {
    throw std::invalid_argument("oracle double sums are limited to n <= 64");
  }
  const Mat pi0 = softmax_rows(theta, Temperature{});
  std::vector<Mat> jac(static_cast<std::size_t>(theta.rows()));
  for (Eigen::Index v = 0; v < theta.rows(); ++v) {
    jac[static_cast<std::size_t>(v)] = softmax_jacobian(pi0.row(v).transpose());
  }

  Mat grad = Mat::Zero(theta.rows(), theta.cols());
  enumerate_objective(obj, [&](const OneHotMatrix& d, const ObjectiveEval& eval) {
    OneHotMatrix moved = d;
    for (int v = 0; v < d.num_vars(); ++v) {
      const int j = d.choice[static_cast<std::size_t>(v)];
      const double w = product_excluding(pi0, d, v) * pi0(v, j);
      if (w == 0.0) continue;
      const Mat& jv = jac[static_cast<std::size_t>(v)];
      for (int i = 0; i < d.num_cats; ++i) {
        moved.choice[static_cast<std::size_t>(v)] = i;
        const Mat g_moved = obj.eval(moved).grad;
        const double secant = 0.5 * (eval.grad(v, i) - eval.grad(v, j) +
                                     g_moved(v, i) - g_moved(v, j));
        grad.row(v) += (w * secant) * jv.row(i);
      }
      moved.choice[static_cast<std::size_t>(v)] = j;
    }
  });
  return grad;
}

GradEstimate second_order_wo_baseline_oracle(const LogitMatrix& theta, const Objective& obj) {
  validate_logits(theta);
  check_same_shape(theta, obj);
  const int n = obj.num_cats();
  if (n > 64) {
    throw std::invalid_argument("oracle double sums are limited to n <= 64");
  }
  const Mat pi0 = softmax_rows(theta, Temperature{});

  Mat grad = Mat::Zero(theta.rows(), theta.cols());
  enumerate_objective(obj, [&](const OneHotMatrix& d, const ObjectiveEval& eval) {
    OneHotMatrix moved = d;
    for (int v = 0; v < d.num_vars(); ++v) {
      const int i = d.choice[static_cast<std::size_t>(v)];
      const double w = product_excluding(pi0, d, v) * pi0(v, i);
      if (w == 0.0) continue;
      for (int k = 0; k < d.num_cats; ++k) {
        moved.choice[static_cast<std::size_t>(v)] = k;
        const Mat g_moved = obj.eval(moved).grad;
        const double secant = 0.5 * (eval.grad(v, k) - eval.grad(v, i) +
                                     g_moved(v, k) - g_moved(v, i));
        grad(v, k) += w * pi0(v, k) * secant;
      }
      moved.choice[static_cast<std::size_t>(v)] = i;
    }
  });
  return grad;
}

GradEstimate expected_estimate(const EstimatorConfig& cfg, const LogitMatrix& theta,
                               const Objective& obj) {
  validate_logits(theta);
  check_same_shape(theta, obj);
  validate_config(cfg, obj.num_cats());
  if (cfg.kind == EstimatorKind::STGS || cfg.kind == EstimatorKind::GrMc) {
    throw std::invalid_argument(
        "expected_estimate: " + to_string(cfg.kind) +
        " has no closed-form expectation over the Gumbel noise; sample it instead");
  }
  if (cfg.kind == EstimatorKind::Exact) {
    return exact_gradient(theta, obj);
  }
  if (cfg.kind == EstimatorKind::FirstOrderOracle || cfg.kind == EstimatorKind::SecondOrderOracle ||
      cfg.kind == EstimatorKind::SecondOrderWoBaselineOracle) {
    throw std::invalid_argument("expected_estimate: " + to_string(cfg.kind) +
                                " is already deterministic");
  }

  const Mat pi0 = softmax_rows(theta, Temperature{});
  const Mat pi_tau = softmax_rows(theta, cfg.tau);
  const Vec phi = phi_or_uniform(cfg, obj.num_cats());

  Mat grad = Mat::Zero(theta.rows(), theta.cols());
  enumerate_objective(obj, [&](const OneHotMatrix& d, const ObjectiveEval& eval) {
    const double p = joint_probability(pi0, d);
    if (p == 0.0) return;
    switch (cfg.kind) {
      case EstimatorKind::ST:
        grad += p * st_rows(eval.grad, pi_tau, cfg.tau.value);
        break;
      case EstimatorKind::ReinMax:
        grad += p * reinmax_rows(eval.grad, d, pi0, pi_tau);
        break;
      case EstimatorKind::Reinforce:
        grad += reinforce_rows(pi0, d, p * eval.value);
        break;
      case EstimatorKind::AvgBaselineST:
        grad += p * avg_baseline_rows(eval.grad, d, pi0, pi_tau, cfg.tau.value, phi);
        break;
      default:
        break;  // unreachable; rejected above
    }
  });
  return grad;
}

// --- sampled estimators -------------------------------------------------------

namespace {

// One STGS draw: Gumbel-perturb each variable, evaluate f at the argmax
// sample, backpropagate through the tempered softmax of the perturbation.
Mat stgs_sample(const LogitMatrix& theta, const Objective& obj, double tau, RngStream& elem,
                double& loss_out) {
  const int num_vars = static_cast<int>(theta.rows());
  const int n = static_cast<int>(theta.cols());
  OneHotMatrix d(std::vector<int>(static_cast<std::size_t>(num_vars), 0), n);
  Mat perturbed(num_vars, n);
  for (int v = 0; v < num_vars; ++v) {
    RngStream var_rng = elem.substream(static_cast<std::uint64_t>(v));
    GumbelDraw draw = gumbel_argmax(theta.row(v).transpose(), var_rng);
    d.choice[static_cast<std::size_t>(v)] = draw.argmax;
    perturbed.row(v) = draw.perturbed.transpose();
  }
  const ObjectiveEval eval = obj.eval(d);
  loss_out = eval.value;
  Mat rows(num_vars, n);
  for (int v = 0; v < num_vars; ++v) {
    rows.row(v) =
        stgs_row(eval.grad.row(v).transpose(), perturbed.row(v).transpose(), tau).transpose();
  }
  return rows;
}

BatchEstimate reinforce_batch(const LogitMatrix& theta, const Objective& obj, const BatchSpec& batch,
                              const EstimatorConfig& cfg, const Mat& pi0) {
  std::vector<OneHotMatrix> samples;
  samples.reserve(static_cast<std::size_t>(batch.batch_size));
  std::vector<double> values(static_cast<std::size_t>(batch.batch_size));
  double mean_value = 0.0;
  for (int b = 0; b < batch.batch_size; ++b) {
    RngStream elem = batch.rng.substream(static_cast<std::uint64_t>(b));
    samples.push_back(sample_joint(pi0, elem));
    values[static_cast<std::size_t>(b)] = obj.eval(samples.back()).value;
    mean_value += values[static_cast<std::size_t>(b)];
  }
  mean_value /= batch.batch_size;

  const double baseline = (cfg.reinforce_baseline == ReinforceBaseline::BatchMean) ? mean_value : 0.0;
  Mat grad = Mat::Zero(theta.rows(), theta.cols());
  for (int b = 0; b < batch.batch_size; ++b) {
    grad += reinforce_rows(pi0, samples[static_cast<std::size_t>(b)],
                           values[static_cast<std::size_t>(b)] - baseline);
  }
  return {grad / batch.batch_size, mean_value};
}

}  // namespace

GradEstimate reinforce_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                                const EstimatorConfig& cfg) {
  validate_logits(theta);
  check_same_shape(theta, obj);
  validate_config(cfg, obj.num_cats());
  validate_batch(batch);
  const Mat pi0 = softmax_rows(theta, Temperature{});
  return reinforce_batch(theta, obj, batch, cfg, pi0).grad;
}

GradEstimate st_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                         const EstimatorConfig& cfg) {
  EstimatorConfig local = cfg;
  local.kind = EstimatorKind::ST;
  return batch_estimate(theta, obj, batch, local).grad;
}

GradEstimate stgs_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                           const EstimatorConfig& cfg) {
  EstimatorConfig local = cfg;
  local.kind = EstimatorKind::STGS;
  return batch_estimate(theta, obj, batch, local).grad;
}

GradEstimate gr_mc_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                            const EstimatorConfig& cfg) {
  EstimatorConfig local = cfg;
  local.kind = EstimatorKind::GrMc;
  return batch_estimate(theta, obj, batch, local).grad;
}

GradEstimate reinmax_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                              const EstimatorConfig& cfg) {
  EstimatorConfig local = cfg;
  local.kind = EstimatorKind::ReinMax;
  return batch_estimate(theta, obj, batch, local).grad;
}

GradEstimate avg_baseline_st_estimate(const LogitMatrix& theta, const Objective& obj,
                                      BatchSpec batch, const EstimatorConfig& cfg) {
  EstimatorConfig local = cfg;
  local.kind = EstimatorKind::AvgBaselineST;
  return batch_estimate(theta, obj, batch, local).grad;
}

BatchEstimate batch_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                             const EstimatorConfig& cfg) {
  validate_logits(theta);
  check_same_shape(theta, obj);
  validate_config(cfg, obj.num_cats());

  if (cfg.kind == EstimatorKind::Exact) {
    return {exact_gradient(theta, obj), expected_loss(theta, obj)};
  }
  if (cfg.kind == EstimatorKind::FirstOrderOracle) {
    return {first_order_oracle(theta, obj), expected_loss(theta, obj)};
  }
  if (cfg.kind == EstimatorKind::SecondOrderOracle) {
    return {second_order_oracle(theta, obj), expected_loss(theta, obj)};
  }
  if (cfg.kind == EstimatorKind::SecondOrderWoBaselineOracle) {
    return {second_order_wo_baseline_oracle(theta, obj), expected_loss(theta, obj)};
  }
  validate_batch(batch);
  const Mat pi0 = softmax_rows(theta, Temperature{});
  if (cfg.kind == EstimatorKind::Reinforce) {
    return reinforce_batch(theta, obj, batch, cfg, pi0);
  }
  const Mat pi_tau = softmax_rows(theta, cfg.tau);
  const Vec phi = phi_or_uniform(cfg, obj.num_cats());

  Mat grad = Mat::Zero(theta.rows(), theta.cols());
  double mean_loss = 0.0;
  for (int b = 0; b < batch.batch_size; ++b) {
    RngStream elem = batch.rng.substream(static_cast<std::uint64_t>(b));
    double loss = 0.0;
    switch (cfg.kind) {
      case EstimatorKind::ST: {
        const OneHotMatrix d = sample_joint(pi0, elem);
        const ObjectiveEval eval = obj.eval(d);
        loss = eval.value;
        grad += st_rows(eval.grad, pi_tau, cfg.tau.value);
        break;
      }
      case EstimatorKind::ReinMax: {
        const OneHotMatrix d = sample_joint(pi0, elem);
        const ObjectiveEval eval = obj.eval(d);
        loss = eval.value;
        grad += reinmax_rows(eval.grad, d, pi0, pi_tau);
        break;
      }
      case EstimatorKind::AvgBaselineST: {
        const OneHotMatrix d = sample_joint(pi0, elem);
        const ObjectiveEval eval = obj.eval(d);
        loss = eval.value;
        grad += avg_baseline_rows(eval.grad, d, pi0, pi_tau, cfg.tau.value, phi);
        break;
      }
      case EstimatorKind::STGS: {
        grad += stgs_sample(theta, obj, cfg.tau.value, elem, loss);
        break;
      }
      case EstimatorKind::GrMc: {
        const int num_vars = static_cast<int>(pi0.rows());
        OneHotMatrix d(std::vector<int>(static_cast<std::size_t>(num_vars), 0), obj.num_cats());
        std::vector<RngStream> var_streams;
        var_streams.reserve(static_cast<std::size_t>(num_vars));
        for (int v = 0; v < num_vars; ++v) {
          var_streams.push_back(elem.substream(static_cast<std::uint64_t>(v)));
          d.choice[static_cast<std::size_t>(v)] =
              sample_index(pi0.row(v).transpose(), var_streams.back());
        }
        const ObjectiveEval eval = obj.eval(d);
        loss = eval.value;
        for (int v = 0; v < num_vars; ++v) {
          Vec avg_row = Vec::Zero(obj.num_cats());
          for (int m = 0; m < cfg.mc_samples; ++m) {
            const Vec t =
                conditional_gumbels(theta.row(v).transpose(),
                                    d.choice[static_cast<std::size_t>(v)],
                                    var_streams[static_cast<std::size_t>(v)]);
            avg_row += stgs_row(eval.grad.row(v).transpose(), t, cfg.tau.value);
          }
          grad.row(v) += avg_row.transpose() / cfg.mc_samples;
        }
        break;
      }
      default:
        throw std::invalid_argument("batch_estimate: unsupported estimator kind");
    }
    mean_loss += loss;
  }
  return {grad / batch.batch_size, mean_loss / batch.batch_size};
}

double cosine_similarity(const GradEstimate& a, const GradEstimate& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("cosine_similarity: shape mismatch");
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-15 || nb < 1e-15) return 0.0;
  const double cosine = (a.array() * b.array()).sum() / (na * nb);
  return std::clamp(cosine, -1.0, 1.0);
}

}  // namespace catgrad
