#include "catgrad/harness.hpp"
#include "catgrad/verify.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace catgrad;

struct CommonFlags {
  std::string estimator = "reinmax";
  std::string objective = "poly";
  double p = 2.0;
  double c_fill = 0.45;
  std::vector<double> values;
  std::uint64_t oracle_seed = 7;
  int num_vars = 16;
  int num_cats = 2;
  int batch = 256;
  int epochs = 40;
  int steps_per_epoch = 100;
  std::string optimizer = "adam";
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double tau = 1.0;
  int mc_samples = 1000;
  std::string reinforce_baseline = "none";
  int bias_eval_every = 0;  // 0 = off
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
  bool timing = false;
  std::string config_path;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--estimator", f.estimator,
                  "exact | reinforce | st | stgs | gr-mc | reinmax | first-order-oracle | "
                  "second-order-oracle | second-order-wo-baseline-oracle | avg-baseline-st");
  cmd->add_option("--objective", f.objective, "poly | quadratic-oracle | cubic-oracle");
  cmd->add_option("--p", f.p, "polynomial exponent (requires p > 1)");
  cmd->add_option("--c", f.c_fill, "polynomial target value per variable");
  cmd->add_option("--values", f.values, "category values for the polynomial objective")
      ->delimiter(',');
  cmd->add_option("--oracle-seed", f.oracle_seed, "coefficient seed for oracle objectives");
  cmd->add_option("--L", f.num_vars, "number of latent variables");
  cmd->add_option("--n", f.num_cats, "categories per variable");
  cmd->add_option("--batch", f.batch, "batch size");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--steps-per-epoch", f.steps_per_epoch, "gradient steps per epoch");
  cmd->add_option("--optimizer", f.optimizer, "adam | radam");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--beta1", f.beta1, "first-moment decay");
  cmd->add_option("--beta2", f.beta2, "second-moment decay");
  cmd->add_option("--eps", f.eps, "optimizer epsilon");
  cmd->add_option("--tau", f.tau, "temperature");
  cmd->add_option("--mc-samples", f.mc_samples, "inner Monte Carlo samples for gr-mc");
  cmd->add_option("--reinforce-baseline", f.reinforce_baseline, "none | batch-mean");
  cmd->add_option("--bias-eval-every", f.bias_eval_every,
                  "log cosine similarity against the exact gradient every K steps");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--out", f.out, "output path (stdout when omitted)");
  cmd->add_option("--format", f.format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_flag("--timing", f.timing, "fill wall-time fields (runs are then not byte-reproducible)");
  cmd->add_option("--config", f.config_path, "flat key=value config file; command-line flags win");
}

// File values fill in every option the command line left untouched.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  for (const auto& [key, value] : parse_flat_config(path)) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr) {
      throw std::invalid_argument("config file key '" + key + "' does not match any flag");
    }
    if (opt->count() > 0) continue;  // command line wins
    opt->add_result(value);
    opt->run_callback();
  }
}

ExperimentConfig to_experiment_config(const CommonFlags& f) {
  ExperimentConfig cfg;
  cfg.estimator.kind = estimator_kind_from_string(f.estimator);
  if (!(f.tau > 0.0)) {
    throw std::invalid_argument("tau must be > 0 (got " + std::to_string(f.tau) + ")");
  }
  cfg.estimator.tau = Temperature(f.tau);
  cfg.estimator.mc_samples = f.mc_samples;
  if (f.reinforce_baseline == "none") {
    cfg.estimator.reinforce_baseline = ReinforceBaseline::None;
  } else if (f.reinforce_baseline == "batch-mean") {
    cfg.estimator.reinforce_baseline = ReinforceBaseline::BatchMean;
  } else {
    throw std::invalid_argument("reinforce-baseline must be none or batch-mean (got " +
                                f.reinforce_baseline + ")");
  }
  cfg.objective.kind = objective_kind_from_string(f.objective);
  cfg.objective.p = f.p;
  cfg.objective.c_fill = f.c_fill;
  if (!f.values.empty()) {
    Vec v(static_cast<Eigen::Index>(f.values.size()));
    for (std::size_t i = 0; i < f.values.size(); ++i) v[static_cast<Eigen::Index>(i)] = f.values[i];
    cfg.objective.category_values = v;
  }
  cfg.objective.oracle_seed = f.oracle_seed;
  cfg.num_vars = f.num_vars;
  cfg.num_cats = f.num_cats;
  cfg.batch_size = f.batch;
  cfg.epochs = f.epochs;
  cfg.steps_per_epoch = f.steps_per_epoch;
  cfg.optimizer.algorithm = optim_algorithm_from_string(f.optimizer);
  cfg.optimizer.learning_rate = f.lr;
  cfg.optimizer.beta1 = f.beta1;
  cfg.optimizer.beta2 = f.beta2;
  cfg.optimizer.epsilon = f.eps;
  cfg.seed = f.seed;
  if (f.bias_eval_every > 0) cfg.bias_eval_every = f.bias_eval_every;
  cfg.output_path = f.out;
  cfg.include_timing = f.timing;
  validate_experiment_config(cfg);
  return cfg;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text_file(out_path, text);
  }
}

void print_warnings(const EstimatorConfig& cfg) {
  for (const std::string& w : config_warnings(cfg)) {
    std::cerr << "warning: " << w << "\n";
  }
}

// "gr-mc:100" pins the inner sample count for that entry.
EstimatorConfig parse_estimator_spec(const std::string& spec, const EstimatorConfig& base) {
  EstimatorConfig out = base;
  const auto colon = spec.find(':');
  out.kind = estimator_kind_from_string(spec.substr(0, colon));
  if (colon != std::string::npos) {
    out.mc_samples = std::stoi(spec.substr(colon + 1));
    if (out.mc_samples < 1) throw std::invalid_argument("mc-samples must be >= 1 in '" + spec + "'");
  }
  return out;
}

std::vector<EstimatorKind> parse_kind_list(const std::vector<std::string>& specs) {
  std::vector<EstimatorKind> kinds;
  kinds.reserve(specs.size());
  for (const std::string& s : specs) kinds.push_back(estimator_kind_from_string(s));
  return kinds;
}

int cmd_train(const CommonFlags& flags) {
  const ExperimentConfig cfg = to_experiment_config(flags);
  print_warnings(cfg.estimator);
  const RunRecord record = run_training(cfg);
  if (flags.format == "json") {
    emit(run_record_to_json(record, cfg.include_timing), cfg.output_path);
  } else {
    emit(run_record_to_csv(record, cfg.include_timing).to_string(), cfg.output_path);
    if (record.summary && !cfg.output_path.empty()) {
      write_text_file(cfg.output_path + ".summary.json",
                      run_summary_to_json(*record.summary, cfg.include_timing));
    }
  }
  if (record.summary && !cfg.output_path.empty()) {
    std::cout << run_summary_to_json(*record.summary, cfg.include_timing);
  }
  return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::vector<int>& batch_sizes,
              const std::vector<int>& variable_counts) {
  const ExperimentConfig cfg = to_experiment_config(flags);
  print_warnings(cfg.estimator);
  const SweepGrid grid = run_heatmap_sweep(cfg, batch_sizes, variable_counts);
  emit(flags.format == "json" ? grid.to_json() : grid.to_csv().to_string(), flags.out);
  return 0;
}

int cmd_temp_sweep(const CommonFlags& flags, const std::vector<std::string>& estimators,
                   const std::vector<double>& taus) {
  const ExperimentConfig cfg = to_experiment_config(flags);
  const std::vector<EstimatorKind> kinds =
      estimators.empty() ? std::vector<EstimatorKind>{cfg.estimator.kind}
                         : parse_kind_list(estimators);
  const SweepGrid grid = run_temperature_sweep(cfg, kinds, taus);
  emit(flags.format == "json" ? grid.to_json() : grid.to_csv().to_string(), flags.out);
  return 0;
}

int cmd_bias_eval(const CommonFlags& flags, const std::vector<std::string>& estimators,
                  int instances) {
  const ExperimentConfig cfg = to_experiment_config(flags);
  const std::vector<EstimatorKind> kinds =
      estimators.empty() ? std::vector<EstimatorKind>{cfg.estimator.kind}
                         : parse_kind_list(estimators);
  const auto rows = run_bias_eval(cfg, kinds, instances);
  emit(flags.format == "json" ? bias_eval_to_json(rows) : bias_eval_to_csv(rows).to_string(),
       flags.out);
  return 0;
}

int cmd_verify(std::uint64_t seed, bool as_json, bool corrupt_reinmax, const std::string& out) {
  VerifyOptions opts;
  opts.seed = seed;
  opts.corrupt_reinmax = corrupt_reinmax;
  const VerifyReport report = run_verify(opts);
  const std::string text = as_json ? report.to_json() : report.to_text();
  std::cout << text;
  if (!out.empty()) write_text_file(out, text);
  return report.all_passed ? 0 : 1;
}

int cmd_bench(const CommonFlags& flags, const std::vector<std::string>& estimators, int steps,
              int warmup) {
  const ExperimentConfig cfg = to_experiment_config(flags);
  std::vector<EstimatorConfig> configs;
  if (estimators.empty()) {
    configs.push_back(cfg.estimator);
  } else {
    for (const std::string& spec : estimators) {
      configs.push_back(parse_estimator_spec(spec, cfg.estimator));
    }
  }
  const BenchReport report = run_bench(cfg, configs, steps, warmup);
  emit(flags.format == "json" ? report.to_json() : report.to_csv().to_string(), flags.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient estimators for categorical latent variables"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "run one training experiment");
  add_common_flags(train, train_flags);

  CommonFlags sweep_flags;
  std::vector<int> batch_sizes{64, 256};
  std::vector<int> variable_counts{16, 64};
  CLI::App* sweep = app.add_subcommand("sweep", "batch-size x variable-count heatmap");
  add_common_flags(sweep, sweep_flags);
  sweep->add_option("--batch-sizes", batch_sizes, "grid of batch sizes")->delimiter(',');
  sweep->add_option("--variable-counts", variable_counts, "grid of variable counts")
      ->delimiter(',');

  CommonFlags temp_flags;
  std::vector<std::string> temp_estimators;
  std::vector<double> taus{0.5, 1.0, 2.0};
  CLI::App* temp = app.add_subcommand("temp-sweep", "temperature sweep per estimator");
  add_common_flags(temp, temp_flags);
  temp->add_option("--estimators", temp_estimators, "estimators to sweep")->delimiter(',');
  temp->add_option("--taus", taus, "temperatures to sweep")->delimiter(',');

  CommonFlags bias_flags;
  std::vector<std::string> bias_estimators;
  int bias_instances = 50;
  CLI::App* bias = app.add_subcommand("bias-eval",
                                      "cosine similarity against the enumerated exact gradient");
  add_common_flags(bias, bias_flags);
  bias->add_option("--estimators", bias_estimators, "estimators to evaluate")->delimiter(',');
  bias->add_option("--instances", bias_instances, "random logit instances");

  std::uint64_t verify_seed = 2024;
  bool verify_json = false;
  bool corrupt_reinmax = false;
  std::string verify_out;
  CLI::App* verify = app.add_subcommand("verify", "identity and property checks");
  verify->add_option("--seed", verify_seed, "suite seed");
  verify->add_flag("--json", verify_json, "machine-readable report");
  verify->add_option("--out", verify_out, "also write the report here");
  verify->add_flag("--corrupt-reinmax", corrupt_reinmax)->group("");  // testing hook

  CommonFlags bench_flags;
  std::vector<std::string> bench_estimators{"st", "reinmax", "stgs"};
  int bench_steps = 20;
  int bench_warmup = 3;
  CLI::App* bench = app.add_subcommand("bench", "per-step estimation timings");
  add_common_flags(bench, bench_flags);
  bench->add_option("--estimators", bench_estimators,
                    "estimator specs; gr-mc:100 pins its inner samples")
      ->delimiter(',');
  bench->add_option("--steps", bench_steps, "measured steps");
  bench->add_option("--warmup", bench_warmup, "unmeasured warmup steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 2;
  }

  try {
    const auto load_config = [](CLI::App* cmd, CommonFlags& flags) {
      if (!flags.config_path.empty()) apply_config_file(cmd, flags.config_path);
    };
    if (train->parsed()) {
      load_config(train, train_flags);
      return cmd_train(train_flags);
    }
    if (sweep->parsed()) {
      load_config(sweep, sweep_flags);
      return cmd_sweep(sweep_flags, batch_sizes, variable_counts);
    }
    if (temp->parsed()) {
      load_config(temp, temp_flags);
      return cmd_temp_sweep(temp_flags, temp_estimators, taus);
    }
    if (bias->parsed()) {
      load_config(bias, bias_flags);
      return cmd_bias_eval(bias_flags, bias_estimators, bias_instances);
    }
    if (verify->parsed()) return cmd_verify(verify_seed, verify_json, corrupt_reinmax, verify_out);
    if (bench->parsed()) {
      load_config(bench, bench_flags);
      return cmd_bench(bench_flags, bench_estimators, bench_steps, bench_warmup);
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
