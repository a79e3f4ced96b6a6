#include "catgrad/harness.hpp"

#include "catgrad/categorical.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <thread>

namespace catgrad {

namespace {

using SteadyClock = std::chrono::steady_clock;

double ms_between(SteadyClock::time_point a, SteadyClock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

std::atomic<std::uint64_t> g_allocation_count{0};
std::atomic<std::int64_t> g_live_allocations{0};
std::atomic<std::int64_t> g_peak_allocations{0};

std::uint64_t derive_cell_seed(std::uint64_t base_seed, std::uint64_t i, std::uint64_t j) {
  return RngStream::mix64(RngStream::mix64(base_seed) ^ RngStream::mix64((i << 32) | j));
}

// Runs work(0..count-1) on the sweep worker pool. Results are indexed, so
// scheduling cannot change any output.
void run_indexed(int count, const std::function<void(int)>& work) {
  const int workers = std::min(sweep_worker_count(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) work(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= count) break;
        work(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

bool is_gumbel_noise_kind(EstimatorKind kind) {
  return kind == EstimatorKind::STGS || kind == EstimatorKind::GrMc;
}

// Deterministic (noise-free) estimate used for the "expected" bias mode.
Mat deterministic_estimate(const EstimatorConfig& cfg, const LogitMatrix& theta,
                           const Objective& obj) {
  switch (cfg.kind) {
    case EstimatorKind::Exact:
      return exact_gradient(theta, obj);
    case EstimatorKind::FirstOrderOracle:
      return first_order_oracle(theta, obj);
    case EstimatorKind::SecondOrderOracle:
      return second_order_oracle(theta, obj);
    case EstimatorKind::SecondOrderWoBaselineOracle:
      return second_order_wo_baseline_oracle(theta, obj);
    default:
      return expected_estimate(cfg, theta, obj);
  }
}

nlohmann::json row_to_json(const StepRow& row, bool include_timing) {
  nlohmann::json j{{"epoch", row.epoch}, {"step", row.step}, {"loss", row.loss}};
  if (include_timing) j["wall_time_ms"] = row.wall_time_ms;
  if (row.cosine_vs_exact) {
    j["cosine_vs_exact"] = *row.cosine_vs_exact;
    j["cosine_mode"] = row.cosine_mode;
  }
  return j;
}

}  // namespace

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::Poly: return "poly";
    case ObjectiveKind::QuadraticOracle: return "quadratic-oracle";
    case ObjectiveKind::CubicOracle: return "cubic-oracle";
  }
  return "unknown";
}

ObjectiveKind objective_kind_from_string(const std::string& name) {
  if (name == "poly") return ObjectiveKind::Poly;
  if (name == "quadratic-oracle") return ObjectiveKind::QuadraticOracle;
  if (name == "cubic-oracle") return ObjectiveKind::CubicOracle;
  throw std::invalid_argument("unknown objective '" + name + "'");
}

std::unique_ptr<Objective> make_objective(const ObjectiveSpec& spec, int num_vars, int num_cats) {
  switch (spec.kind) {
    case ObjectiveKind::Poly: {
      Vec values;
      if (spec.category_values) {
        values = *spec.category_values;
      } else {
        values = Vec::LinSpaced(num_cats, 0.0, static_cast<double>(num_cats - 1));
      }
      return std::make_unique<PolynomialObjective>(Vec::Constant(num_vars, spec.c_fill), spec.p,
                                                   values);
    }
    case ObjectiveKind::QuadraticOracle:
      return std::make_unique<QuadraticOracleObjective>(
          QuadraticOracleObjective::random(num_vars, num_cats, spec.oracle_seed));
    case ObjectiveKind::CubicOracle:
      return std::make_unique<CubicObjective>(
          CubicObjective::random(num_vars, num_cats, spec.oracle_seed));
  }
  throw std::invalid_argument("unknown objective kind");
}

void validate_experiment_config(const ExperimentConfig& cfg) {
  const auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (cfg.num_vars < 1) fail("L must be >= 1 (got " + std::to_string(cfg.num_vars) + ")");
  if (cfg.num_cats < 2) fail("n must be >= 2 (got " + std::to_string(cfg.num_cats) + ")");
  if (cfg.batch_size < 1) fail("batch must be >= 1 (got " + std::to_string(cfg.batch_size) + ")");
  if (cfg.epochs < 0) fail("epochs must be >= 0 (got " + std::to_string(cfg.epochs) + ")");
  if (cfg.steps_per_epoch < 1) {
    fail("steps-per-epoch must be >= 1 (got " + std::to_string(cfg.steps_per_epoch) + ")");
  }
  if (!(cfg.optimizer.learning_rate > 0.0)) {
    fail("lr must be > 0 (got " + std::to_string(cfg.optimizer.learning_rate) + ")");
  }
  if (cfg.objective.kind == ObjectiveKind::Poly) {
    if (!(cfg.objective.p > 1.0)) {
      fail("p must be > 1 (got " + std::to_string(cfg.objective.p) + ")");
    }
    if (!std::isfinite(cfg.objective.c_fill)) fail("c must be finite");
    if (cfg.objective.category_values &&
        cfg.objective.category_values->size() != cfg.num_cats) {
      fail("values must list one entry per category");
    }
  }
  if (cfg.estimator.mc_samples < 1) {
    fail("mc-samples must be >= 1 (got " + std::to_string(cfg.estimator.mc_samples) + ")");
  }
  if (cfg.bias_eval_every) {
    if (*cfg.bias_eval_every < 1) {
      fail("bias-eval-every must be >= 1 (got " + std::to_string(*cfg.bias_eval_every) + ")");
    }
    check_enumeration_cap(cfg.num_vars, cfg.num_cats);
  }
  const EstimatorKind kind = cfg.estimator.kind;
  if (kind == EstimatorKind::Exact || kind == EstimatorKind::FirstOrderOracle ||
      kind == EstimatorKind::SecondOrderOracle ||
      kind == EstimatorKind::SecondOrderWoBaselineOracle) {
    check_enumeration_cap(cfg.num_vars, cfg.num_cats);
  }
}

RunRecord run_training(const ExperimentConfig& cfg, const StepObserver& observer) {
  validate_experiment_config(cfg);
  const auto obj = make_objective(cfg.objective, cfg.num_vars, cfg.num_cats);

  LogitMatrix theta = Mat::Zero(cfg.num_vars, cfg.num_cats);
  OptimState state;
  RngStream root(cfg.seed, 0);

  RunRecord record;
  const int total_steps = cfg.epochs * cfg.steps_per_epoch;
  record.rows.reserve(static_cast<std::size_t>(total_steps));
  const auto run_start = SteadyClock::now();

  for (int s = 0; s < total_steps; ++s) {
    const auto step_start = SteadyClock::now();
    BatchSpec batch{cfg.batch_size, root.substream(static_cast<std::uint64_t>(s))};
    const BatchEstimate est = batch_estimate(theta, *obj, batch, cfg.estimator);

    StepRow row;
    row.epoch = s / cfg.steps_per_epoch;
    row.step = s;
    row.loss = est.mean_loss;
    if (cfg.bias_eval_every && s % *cfg.bias_eval_every == 0) {
      const Mat exact = exact_gradient(theta, *obj);
      if (is_gumbel_noise_kind(cfg.estimator.kind)) {
        row.cosine_vs_exact = cosine_similarity(est.grad, exact);
        row.cosine_mode = "sampled";
      } else {
        row.cosine_vs_exact =
            cosine_similarity(deterministic_estimate(cfg.estimator, theta, *obj), exact);
        row.cosine_mode = "expected";
      }
    }
    if (observer) observer(s, theta, est.mean_loss);

    std::tie(state, theta) = optim_step(state, theta, est.grad, cfg.optimizer);
    row.wall_time_ms = ms_between(step_start, SteadyClock::now());
    record.rows.push_back(std::move(row));
  }

  if (!record.rows.empty()) {
    RunSummary summary;
    summary.final_loss = record.rows.back().loss;
    double acc = 0.0;
    for (int s = total_steps - cfg.steps_per_epoch; s < total_steps; ++s) {
      acc += record.rows[static_cast<std::size_t>(s)].loss;
    }
    summary.mean_loss_last_epoch = acc / cfg.steps_per_epoch;
    summary.total_time_ms = ms_between(run_start, SteadyClock::now());
    record.summary = summary;
  }
  return record;
}

CsvTable run_record_to_csv(const RunRecord& record, bool include_timing) {
  CsvTable table;
  table.header = {"epoch", "step", "loss", "wall_time_ms", "cosine_vs_exact", "cosine_mode"};
  table.rows.reserve(record.rows.size());
  for (const StepRow& row : record.rows) {
    table.rows.push_back({std::to_string(row.epoch), std::to_string(row.step),
                          format_double(row.loss),
                          include_timing ? format_double(row.wall_time_ms) : "",
                          row.cosine_vs_exact ? format_double(*row.cosine_vs_exact) : "",
                          row.cosine_mode});
  }
  return table;
}

std::string run_record_to_json(const RunRecord& record, bool include_timing) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const StepRow& row : record.rows) {
    j["rows"].push_back(row_to_json(row, include_timing));
  }
  if (record.summary) {
    j["summary"] = nlohmann::json::parse(run_summary_to_json(*record.summary, include_timing));
  } else {
    j["summary"] = nullptr;
  }
  return j.dump(2) + "\n";
}

std::string run_summary_to_json(const RunSummary& summary, bool include_timing) {
  nlohmann::json j{{"final_loss", summary.final_loss},
                   {"mean_loss_last_epoch", summary.mean_loss_last_epoch}};
  if (include_timing) j["total_time_ms"] = summary.total_time_ms;
  return j.dump(2) + "\n";
}

CsvTable SweepGrid::to_csv() const {
  CsvTable table;
  table.header = axis_names;
  table.header.push_back("final_mean_loss");
  for (const SweepCell& cell : cells) {
    std::vector<std::string> row = cell.key;
    row.push_back(format_double(cell.final_mean_loss));
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string SweepGrid::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const SweepCell& cell : cells) {
    nlohmann::json row;
    for (std::size_t a = 0; a < axis_names.size(); ++a) row[axis_names[a]] = cell.key[a];
    if (std::isnan(cell.final_mean_loss)) {
      row["final_mean_loss"] = nullptr;
    } else {
      row["final_mean_loss"] = cell.final_mean_loss;
    }
    if (!cell.error.empty()) row["error"] = cell.error;
    rows.push_back(std::move(row));
  }
  return nlohmann::json{{"cells", rows}}.dump(2) + "\n";
}

namespace {

// Shared cell runner: every cell owns its config and seed; errors become NaN
// cells with a log line.
SweepGrid run_sweep_cells(std::vector<std::pair<std::vector<std::string>, ExperimentConfig>> cells,
                          std::vector<std::string> axis_names) {
  SweepGrid grid;
  grid.axis_names = std::move(axis_names);
  grid.cells.resize(cells.size());
  run_indexed(static_cast<int>(cells.size()), [&](int i) {
    SweepCell& cell = grid.cells[static_cast<std::size_t>(i)];
    cell.key = cells[static_cast<std::size_t>(i)].first;
    try {
      const RunRecord record = run_training(cells[static_cast<std::size_t>(i)].second);
      if (record.summary) {
        cell.final_mean_loss = record.summary->mean_loss_last_epoch;
      } else {
        cell.error = "no steps ran";
      }
    } catch (const std::exception& err) {
      cell.error = err.what();
    }
  });
  for (const SweepCell& cell : grid.cells) {
    if (!cell.error.empty()) {
      std::string key;
      for (const auto& part : cell.key) key += (key.empty() ? "" : ",") + part;
      std::cerr << "sweep cell (" << key << ") failed: " << cell.error << "\n";
    }
  }
  return grid;
}

}  // namespace

SweepGrid run_heatmap_sweep(const ExperimentConfig& base, const std::vector<int>& batch_sizes,
                            const std::vector<int>& variable_counts) {
  if (batch_sizes.empty() || variable_counts.empty()) {
    throw std::invalid_argument("sweep grids must be non-empty");
  }
  std::vector<std::pair<std::vector<std::string>, ExperimentConfig>> cells;
  for (std::size_t i = 0; i < batch_sizes.size(); ++i) {
    for (std::size_t j = 0; j < variable_counts.size(); ++j) {
      ExperimentConfig cfg = base;
      cfg.batch_size = batch_sizes[i];
      cfg.num_vars = variable_counts[j];
      cfg.seed = derive_cell_seed(base.seed, i, j);
      cfg.bias_eval_every.reset();
      cfg.output_path.clear();
      cells.push_back(
          {{std::to_string(batch_sizes[i]), std::to_string(variable_counts[j])}, std::move(cfg)});
    }
  }
  return run_sweep_cells(std::move(cells), {"batch_size", "num_vars"});
}

SweepGrid run_temperature_sweep(const ExperimentConfig& base,
                                const std::vector<EstimatorKind>& estimators,
                                const std::vector<double>& taus) {
  if (estimators.empty() || taus.empty()) {
    throw std::invalid_argument("sweep grids must be non-empty");
  }
  for (double tau : taus) {
    if (!(tau > 0.0)) throw std::invalid_argument("taus must be positive");
  }
  std::vector<std::pair<std::vector<std::string>, ExperimentConfig>> cells;
  for (std::size_t i = 0; i < estimators.size(); ++i) {
    for (std::size_t j = 0; j < taus.size(); ++j) {
      ExperimentConfig cfg = base;
      cfg.estimator.kind = estimators[i];
      cfg.estimator.tau = Temperature(taus[j]);
      cfg.seed = derive_cell_seed(base.seed, i, j);
      cfg.bias_eval_every.reset();
      cfg.output_path.clear();
      cells.push_back({{to_string(estimators[i]), format_double(taus[j])}, std::move(cfg)});
    }
  }
  return run_sweep_cells(std::move(cells), {"estimator", "tau"});
}

std::vector<BiasEvalRow> run_bias_eval(const ExperimentConfig& base,
                                       const std::vector<EstimatorKind>& estimators,
                                       int instances) {
  if (instances < 1) throw std::invalid_argument("instances must be >= 1");
  validate_experiment_config(base);
  check_enumeration_cap(base.num_vars, base.num_cats);

  std::vector<BiasEvalRow> rows;
  RngStream root(base.seed, 0xb1a5);
  for (int inst = 0; inst < instances; ++inst) {
    ObjectiveSpec spec = base.objective;
    if (spec.kind != ObjectiveKind::Poly) {
      spec.oracle_seed = base.objective.oracle_seed + static_cast<std::uint64_t>(inst);
    }
    const auto obj = make_objective(spec, base.num_vars, base.num_cats);

    RngStream inst_rng = root.substream(static_cast<std::uint64_t>(inst));
    Mat theta(base.num_vars, base.num_cats);
    for (int v = 0; v < base.num_vars; ++v) {
      for (int k = 0; k < base.num_cats; ++k) theta(v, k) = 6.0 * inst_rng.uniform_open01() - 3.0;
    }
    const Mat exact = exact_gradient(theta, *obj);

    for (EstimatorKind kind : estimators) {
      EstimatorConfig est_cfg = base.estimator;
      est_cfg.kind = kind;
      BiasEvalRow row;
      row.instance = inst;
      row.estimator = to_string(kind);
      if (is_gumbel_noise_kind(kind)) {
        BatchSpec batch{base.batch_size, inst_rng.substream(1000 + static_cast<std::uint64_t>(kind))};
        row.mode = "sampled";
        row.cosine = cosine_similarity(batch_estimate(theta, *obj, batch, est_cfg).grad, exact);
      } else {
        row.mode = "expected";
        row.cosine = cosine_similarity(deterministic_estimate(est_cfg, theta, *obj), exact);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

CsvTable bias_eval_to_csv(const std::vector<BiasEvalRow>& rows) {
  CsvTable table;
  table.header = {"instance", "estimator", "mode", "cosine_vs_exact"};
  for (const BiasEvalRow& row : rows) {
    table.rows.push_back(
        {std::to_string(row.instance), row.estimator, row.mode, format_double(row.cosine)});
  }
  return table;
}

std::string bias_eval_to_json(const std::vector<BiasEvalRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const BiasEvalRow& row : rows) {
    arr.push_back({{"instance", row.instance},
                   {"estimator", row.estimator},
                   {"mode", row.mode},
                   {"cosine_vs_exact", row.cosine}});
  }
  return nlohmann::json{{"rows", arr}}.dump(2) + "\n";
}

CsvTable BenchReport::to_csv() const {
  CsvTable table;
  table.header = {"estimator",       "mc_samples",       "mean_step_ms",
                  "allocs_per_step", "peak_live_allocs", "grad_checksum"};
  for (const BenchRow& row : rows) {
    table.rows.push_back({row.estimator, std::to_string(row.mc_samples),
                          format_double(row.mean_step_ms), format_double(row.allocs_per_step),
                          format_double(row.peak_live_allocs), format_double(row.grad_checksum)});
  }
  return table;
}

std::string BenchReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const BenchRow& row : rows) {
    arr.push_back({{"estimator", row.estimator},
                   {"mc_samples", row.mc_samples},
                   {"mean_step_ms", row.mean_step_ms},
                   {"allocs_per_step", row.allocs_per_step},
                   {"peak_live_allocs", row.peak_live_allocs},
                   {"grad_checksum", row.grad_checksum}});
  }
  return nlohmann::json{{"rows", arr}}.dump(2) + "\n";
}

BenchReport run_bench(const ExperimentConfig& base, const std::vector<EstimatorConfig>& estimators,
                      int steps, int warmup) {
  if (steps < 1) throw std::invalid_argument("bench steps must be >= 1");
  validate_experiment_config(base);
  const auto obj = make_objective(base.objective, base.num_vars, base.num_cats);

  RngStream theta_rng(base.seed, 0xbe);
  Mat theta(base.num_vars, base.num_cats);
  for (int v = 0; v < base.num_vars; ++v) {
    for (int k = 0; k < base.num_cats; ++k) theta(v, k) = 2.0 * theta_rng.uniform_open01() - 1.0;
  }
  RngStream root(base.seed, 0);

  BenchReport report;
  for (const EstimatorConfig& est_cfg : estimators) {
    for (int s = 0; s < warmup; ++s) {
      BatchSpec batch{base.batch_size, root.substream(static_cast<std::uint64_t>(s))};
      (void)batch_estimate(theta, *obj, batch, est_cfg);
    }
    double checksum = 0.0;
    const std::int64_t live_before = live_allocation_count();
    reset_allocation_peak();
    const std::uint64_t allocs_before = allocation_count();
    const auto t0 = SteadyClock::now();
    for (int s = 0; s < steps; ++s) {
      BatchSpec batch{base.batch_size, root.substream(static_cast<std::uint64_t>(s))};
      checksum += batch_estimate(theta, *obj, batch, est_cfg).grad.sum();
    }
    const auto t1 = SteadyClock::now();
    const std::uint64_t allocs_after = allocation_count();
    const std::int64_t peak = peak_allocation_count();

    BenchRow row;
    row.estimator = to_string(est_cfg.kind);
    row.mc_samples = est_cfg.kind == EstimatorKind::GrMc ? est_cfg.mc_samples : 0;
    row.mean_step_ms = ms_between(t0, t1) / steps;
    row.allocs_per_step = static_cast<double>(allocs_after - allocs_before) / steps;
    row.peak_live_allocs = static_cast<double>(peak > live_before ? peak - live_before : 0);
    row.grad_checksum = checksum;
    report.rows.push_back(std::move(row));
  }
  return report;
}

int sweep_worker_count() {
  if (const char* env = std::getenv("CATGRAD_WORKERS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::uint64_t allocation_count() { return g_allocation_count.load(std::memory_order_relaxed); }

std::int64_t live_allocation_count() { return g_live_allocations.load(std::memory_order_relaxed); }

std::int64_t peak_allocation_count() { return g_peak_allocations.load(std::memory_order_relaxed); }

void reset_allocation_peak() {
  g_peak_allocations.store(g_live_allocations.load(std::memory_order_relaxed),
                           std::memory_order_relaxed);
}

void allocation_on_malloc() {
  g_allocation_count.fetch_add(1, std::memory_order_relaxed);
  const std::int64_t live = g_live_allocations.fetch_add(1, std::memory_order_relaxed) + 1;
  std::int64_t peak = g_peak_allocations.load(std::memory_order_relaxed);
  while (live > peak &&
         !g_peak_allocations.compare_exchange_weak(peak, live, std::memory_order_relaxed)) {
  }
}

void allocation_on_free() {
  g_live_allocations.fetch_sub(1, std::memory_order_relaxed);
}

}  // namespace catgrad
