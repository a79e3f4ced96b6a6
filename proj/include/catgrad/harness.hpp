#pragma once

#include "catgrad/estimators.hpp"
#include "catgrad/io.hpp"
#include "catgrad/objectives.hpp"
#include "catgrad/optim.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace catgrad {

enum class ObjectiveKind { Poly, QuadraticOracle, CubicOracle };

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::Poly;
  double p = 2.0;
  double c_fill = 0.45;
  std::optional<Vec> category_values;  // defaults to (0, 1, ..., n-1)
  std::uint64_t oracle_seed = 7;       // quadratic / cubic oracle coefficients
};

std::string to_string(ObjectiveKind kind);
ObjectiveKind objective_kind_from_string(const std::string& name);

std::unique_ptr<Objective> make_objective(const ObjectiveSpec& spec, int num_vars, int num_cats);

struct ExperimentConfig {
  EstimatorConfig estimator;
  ObjectiveSpec objective;
  int num_vars = 16;
  int num_cats = 2;
  int batch_size = 256;
  OptimConfig optimizer;
  int epochs = 40;
  int steps_per_epoch = 100;
  std::uint64_t seed = 0;
  std::optional<int> bias_eval_every;  // steps; needs n^L within the cap
  std::string output_path;
  bool include_timing = false;  // timing cells stay blank otherwise, keeping
                                // outputs byte-identical across runs
};

// Throws std::invalid_argument naming the offending field.
void validate_experiment_config(const ExperimentConfig& cfg);

struct StepRow {
  int epoch = 0;
  int step = 0;  // global step index
  double loss = 0.0;
  double wall_time_ms = 0.0;
  std::optional<double> cosine_vs_exact;
  std::string cosine_mode;  // "expected" or "sampled" when cosine is present
};

struct RunSummary {
  double final_loss = 0.0;
  double mean_loss_last_epoch = 0.0;
  double total_time_ms = 0.0;
};

struct RunRecord {
  std::vector<StepRow> rows;
  std::optional<RunSummary> summary;  // absent when no steps ran
};

// Called once per step with the parameters the step's estimate was computed
// at (before the optimizer update).
using StepObserver = std::function<void(int step, const LogitMatrix& theta, double loss)>;

RunRecord run_training(const ExperimentConfig& cfg, const StepObserver& observer = {});

CsvTable run_record_to_csv(const RunRecord& record, bool include_timing);
std::string run_record_to_json(const RunRecord& record, bool include_timing);
std::string run_summary_to_json(const RunSummary& summary, bool include_timing);

struct SweepCell {
  std::vector<std::string> key;  // axis values, in header order
  double final_mean_loss = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // non-empty when the cell failed
};

struct SweepGrid {
  std::vector<std::string> axis_names;
  std::vector<SweepCell> cells;  // complete grid, row-major in axis order

  CsvTable to_csv() const;
  std::string to_json() const;
};

SweepGrid run_heatmap_sweep(const ExperimentConfig& base, const std::vector<int>& batch_sizes,
                            const std::vector<int>& variable_counts);

SweepGrid run_temperature_sweep(const ExperimentConfig& base,
                                const std::vector<EstimatorKind>& estimators,
                                const std::vector<double>& taus);

// Cosine similarity of estimates against the enumerated exact gradient on
// seeded random logits; closed-form expectations where they exist, batch
// samples for the Gumbel-noise estimators.
struct BiasEvalRow {
  int instance = 0;
  std::string estimator;
  std::string mode;  // expected | sampled
  double cosine = 0.0;
};

std::vector<BiasEvalRow> run_bias_eval(const ExperimentConfig& base,
                                       const std::vector<EstimatorKind>& estimators,
                                       int instances);

CsvTable bias_eval_to_csv(const std::vector<BiasEvalRow>& rows);
std::string bias_eval_to_json(const std::vector<BiasEvalRow>& rows);

struct BenchRow {
  std::string estimator;
  int mc_samples = 0;  // 0 unless GR-MC
  double mean_step_ms = 0.0;
  double allocs_per_step = 0.0;   // malloc calls per step
  double peak_live_allocs = 0.0;  // peak simultaneously-live allocations above the baseline
  double grad_checksum = 0.0;     // deterministic digest of the estimates
};

struct BenchReport {
  std::vector<BenchRow> rows;
  CsvTable to_csv() const;
  std::string to_json() const;
};

// Times estimation only; no parameter updates. Every estimator sees the same
// logits and the same per-step sample streams.
BenchReport run_bench(const ExperimentConfig& base, const std::vector<EstimatorConfig>& estimators,
                      int steps, int warmup);

// Worker count for sweep cells: CATGRAD_WORKERS when set, else hardware
// concurrency. Scheduling never affects outputs.
int sweep_worker_count();

// Allocation bookkeeping fed by the malloc/free wrappers when a binary links
// with --wrap=malloc,--wrap=free,...; stays at zero otherwise. Live counts
// are signed: frees of memory that predates the wrappers (or came from an
// unwrapped path inside libc) may push the balance below its baseline.
std::uint64_t allocation_count();      // cumulative allocation calls
std::int64_t live_allocation_count();  // allocations minus frees
std::int64_t peak_allocation_count();  // high-water mark of the live count
void reset_allocation_peak();          // lower the mark to the current live count
void allocation_on_malloc();
void allocation_on_free();

}  // namespace catgrad
