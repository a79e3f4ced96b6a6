#pragma once

#include "catgrad/objectives.hpp"
#include "catgrad/types.hpp"

#include <optional>
#include <string>

namespace catgrad {

enum class EstimatorKind {
  Exact,
  Reinforce,
  ST,
  STGS,
  GrMc,
  ReinMax,
  FirstOrderOracle,
  SecondOrderOracle,
  SecondOrderWoBaselineOracle,
  AvgBaselineST,
};

enum class ReinforceBaseline { None, BatchMean };

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::ReinMax;
  Temperature tau{};
  int mc_samples = 1000;               // GR-MC only
  std::optional<Vec> phi;              // AvgBaselineST weights; uniform when absent
  ReinforceBaseline reinforce_baseline = ReinforceBaseline::None;
};

struct BatchSpec {
  int batch_size = 1;
  RngStream rng;
};

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& name);

// Non-fatal configuration advice (e.g. tau < 1 for tempered-Jacobian methods).
std::vector<std::string> config_warnings(const EstimatorConfig& cfg);

// --- exact gradient and deterministic oracles (enumeration-based) ---------

// d E[f] / d theta by full joint enumeration:
// per variable i, sum_D P(D) f(D) (D_i - pi_i).
GradEstimate exact_gradient(const LogitMatrix& theta, const Objective& obj);

// E[f(D)] by enumeration.
double expected_loss(const LogitMatrix& theta, const Objective& obj);

// Double sum sum_i sum_j pi_j f'(I_j)(I_i - I_j) dpi_i/dtheta per variable,
// conditioned on the other variables and averaged over them by enumeration.
GradEstimate first_order_oracle(const LogitMatrix& theta, const Objective& obj);

// Same double sum with the sampling weights pi_j replaced by baseline
// weights phi_j.
GradEstimate first_order_oracle(const LogitMatrix& theta, const Objective& obj, const Vec& phi);

// Double sum with the trapezoidal secant 1/2 (f'(I_j) + f'(I_i)) (I_i - I_j).
GradEstimate second_order_oracle(const LogitMatrix& theta, const Objective& obj);

// Baseline-free form: per coordinate k,
// pi_k sum_i pi_i 1/2 (f'(I_i) + f'(I_k)) (I_k - I_i).
GradEstimate second_order_wo_baseline_oracle(const LogitMatrix& theta, const Objective& obj);

// Closed-form expectation of a sampled estimator over D by enumeration,
// weighting per-sample estimates by their probabilities. Rejects STGS and
// GR-MC, whose Gumbel expectation has no closed form here.
GradEstimate expected_estimate(const EstimatorConfig& cfg, const LogitMatrix& theta,
                               const Objective& obj);

// --- sampled estimators ----------------------------------------------------

GradEstimate reinforce_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                                const EstimatorConfig& cfg);
GradEstimate st_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                         const EstimatorConfig& cfg);
GradEstimate stgs_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                           const EstimatorConfig& cfg);
GradEstimate gr_mc_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                            const EstimatorConfig& cfg);
GradEstimate reinmax_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                              const EstimatorConfig& cfg);
GradEstimate avg_baseline_st_estimate(const LogitMatrix& theta, const Objective& obj,
                                      BatchSpec batch, const EstimatorConfig& cfg);

struct BatchEstimate {
  GradEstimate grad;
  double mean_loss = 0.0;
};

// Dispatches on cfg.kind and also reports the batch-mean loss of the samples
// the gradient was computed from. For Exact the gradient is deterministic and
// the loss is the exact expectation.
BatchEstimate batch_estimate(const LogitMatrix& theta, const Objective& obj, BatchSpec batch,
                             const EstimatorConfig& cfg);

// --- per-sample building blocks (exposed for tests and oracles) ------------

// Backward rows given the gradient slice g (L x n) and the joint sample.
Mat st_rows(const Mat& g, const Mat& pi_tau, double tau);
Mat reinmax_rows(const Mat& g, const OneHotMatrix& d, const Mat& pi0, const Mat& pi_tau);
Vec stgs_row(const Vec& g_row, const Vec& perturbed, double tau);

// --- comparison -------------------------------------------------------------

// Flattened cosine similarity in [-1, 1]; 0 when either norm is < 1e-15.
double cosine_similarity(const GradEstimate& a, const GradEstimate& b);

}  // namespace catgrad
