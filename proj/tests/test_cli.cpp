// End-to-end checks of the command-line surface. The binary path comes from
// the CATGRAD_CLI environment variable (set by the test harness).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string cli_path() {
  const char* path = std::getenv("CATGRAD_CLI");
  REQUIRE_MESSAGE(path != nullptr, "CATGRAD_CLI must point at the CLI binary");
  return path;
}

int run(const std::string& args, const std::string& env_prefix = "") {
  const std::string cmd = env_prefix + cli_path() + " " + args + " >/dev/null 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream stream(path, std::ios::binary);
  std::ostringstream out;
  out << stream.rdbuf();
  return out.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("catgrad_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

int count_lines(const std::string& text) {
  int lines = 0;
  for (char c : text) {
    if (c == '\n') ++lines;
  }
  return lines;
}

}  // namespace

TEST_CASE("train writes the requested rows and a summary sidecar") {
  TempDir tmp;
  const fs::path out = tmp.path / "run.csv";
  const int code = run("train --estimator reinmax --p 2 --L 4 --batch 16 --epochs 2 "
                       "--steps-per-epoch 10 --lr 0.001 --seed 0 --out " +
                       out.string());
  CHECK(code == 0);
  const std::string csv = slurp(out);
  CHECK(count_lines(csv) == 21);  // header + 20 step rows
  CHECK(csv.rfind("epoch,step,loss,wall_time_ms,cosine_vs_exact,cosine_mode\n", 0) == 0);
  CHECK(fs::exists(out.string() + ".summary.json"));
  const std::string summary = slurp(out.string() + ".summary.json");
  CHECK(summary.find("mean_loss_last_epoch") != std::string::npos);
  CHECK(summary.find("total_time_ms") == std::string::npos);  // timing off by default
}

TEST_CASE("zero-epoch training succeeds with an empty table and no summary") {
  TempDir tmp;
  const fs::path out = tmp.path / "empty.csv";
  CHECK(run("train --epochs 0 --L 2 --batch 1 --out " + out.string()) == 0);
  CHECK(count_lines(slurp(out)) == 1);  // header only
  CHECK_FALSE(fs::exists(out.string() + ".summary.json"));
}

TEST_CASE("invalid config exits 1 naming the field; usage errors exit 2") {
  CHECK(run("train --p 0.5") == 1);
  CHECK(run("train --no-such-flag 1") == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("") == 2);  // a subcommand is required
  CHECK(run("--help") == 0);
}

TEST_CASE("config files feed flags and the command line wins") {
  TempDir tmp;
  const fs::path config = tmp.path / "run.ini";
  {
    std::ofstream stream(config);
    stream << "p=2.0\nL=4\nbatch=8\nepochs=1\nsteps-per-epoch=5\nseed=3\n";
  }
  const fs::path out_a = tmp.path / "a.csv";
  const fs::path out_b = tmp.path / "b.csv";
  CHECK(run("train --config " + config.string() + " --out " + out_a.string()) == 0);
  CHECK(count_lines(slurp(out_a)) == 6);
  // --epochs on the command line overrides the file's value
  CHECK(run("train --config " + config.string() + " --epochs 2 --out " + out_b.string()) == 0);
  CHECK(count_lines(slurp(out_b)) == 11);
}

TEST_CASE("train and verify are byte-stable across reruns and worker counts") {
  TempDir tmp;
  const std::string train_args =
      "train --estimator stgs --p 2 --L 4 --batch 16 --epochs 1 --steps-per-epoch 20 --seed 5 ";
  const fs::path run1 = tmp.path / "run1.csv";
  const fs::path run2 = tmp.path / "run2.csv";
  CHECK(run(train_args + "--out " + run1.string(), "CATGRAD_WORKERS=1 ") == 0);
  CHECK(run(train_args + "--out " + run2.string(), "CATGRAD_WORKERS=4 ") == 0);
  CHECK(slurp(run1) == slurp(run2));

  const fs::path v1 = tmp.path / "v1.txt";
  const fs::path v2 = tmp.path / "v2.txt";
  CHECK(run("verify --out " + v1.string(), "CATGRAD_WORKERS=1 ") == 0);
  CHECK(run("verify --out " + v2.string(), "CATGRAD_WORKERS=4 ") == 0);
  CHECK(slurp(v1) == slurp(v2));
}

TEST_CASE("verify exits nonzero under the corruption hook") {
  CHECK(run("verify") == 0);
  CHECK(run("verify --corrupt-reinmax") == 1);
  CHECK(run("verify --json") == 0);
}

TEST_CASE("sweeps emit complete grids") {
  TempDir tmp;
  const fs::path out = tmp.path / "grid.csv";
  CHECK(run("sweep --batch-sizes 4,8 --variable-counts 2,3 --epochs 1 --steps-per-epoch 5 "
            "--estimator st --out " +
            out.string()) == 0);
  CHECK(count_lines(slurp(out)) == 5);  // header + 2x2 cells

  const fs::path temp_out = tmp.path / "temps.csv";
  CHECK(run("temp-sweep --estimators st,stgs --taus 0.5,1.0,2.0 --L 2 --epochs 1 "
            "--steps-per-epoch 5 --batch 8 --out " +
            temp_out.string()) == 0);
  const std::string temps = slurp(temp_out);
  CHECK(count_lines(temps) == 7);  // header + 6 rows
  CHECK(temps.find("0.5") != std::string::npos);
  CHECK(temps.find("2\n") != std::string::npos);
}

TEST_CASE("bias-eval and bench produce labeled tables") {
  TempDir tmp;
  const fs::path bias_out = tmp.path / "bias.csv";
  CHECK(run("bias-eval --estimators st,reinmax --instances 5 --L 2 --n 3 --batch 32 --out " +
            bias_out.string()) == 0);
  const std::string bias = slurp(bias_out);
  CHECK(count_lines(bias) == 11);
  CHECK(bias.rfind("instance,estimator,mode,cosine_vs_exact\n", 0) == 0);

  const fs::path bench_out = tmp.path / "bench.csv";
  CHECK(run("bench --estimators st,gr-mc:4 --steps 3 --warmup 1 --L 4 --batch 8 --out " +
            bench_out.string()) == 0);
  const std::string bench = slurp(bench_out);
  CHECK(count_lines(bench) == 3);
  CHECK(bench.find("gr-mc") != std::string::npos);
}

TEST_CASE("json format mirrors the csv rows") {
  TempDir tmp;
  const fs::path out = tmp.path / "run.json";
  CHECK(run("train --L 2 --batch 4 --epochs 1 --steps-per-epoch 3 --format json --out " +
            out.string()) == 0);
  const std::string json = slurp(out);
  CHECK(json.find("\"rows\"") != std::string::npos);
  CHECK(json.find("\"summary\"") != std::string::npos);
  CHECK(json.find("\"loss\"") != std::string::npos);
}
