// End-to-end checks of the mi_decode binary: verb dispatch, exit codes, and
// the on-disk artifacts. The binary path arrives via the MI_DECODE_BIN
// environment variable set by the test harness.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "mi/container.hpp"
#include "mi/recording.hpp"

namespace fs = std::filesystem;

namespace {

std::string binary() {
  const char* bin = std::getenv("MI_DECODE_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "MI_DECODE_BIN must point at mi_decode");
  return bin;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

RunResult run_cli(const std::string& args, const std::string& env = "") {
  const std::string out_file = "test_cli_stdout.txt";
  const std::string err_file = "test_cli_stderr.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + binary() +
                          "\" " + args + " >" + out_file + " 2>" + err_file;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WEXITSTATUS(status);
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  fs::remove(out_file);
  fs::remove(err_file);
  return r;
}

struct TempPath {
  std::string path;
  explicit TempPath(std::string p) : path(std::move(p)) {}
  ~TempPath() { fs::remove_all(path); }
};

std::string write_file(const std::string& name, const std::string& text) {
  std::ofstream out(name, std::ios::trunc);
  out << text;
  return name;
}

const char* kCspConfig = R"({
  "method": "csp_lda",
  "seed": 5,
  "csp": {"pairs": 1},
  "data": {
    "synthetic": {
      "subjects": 1,
      "trials_per_class": 6,
      "channels": 4,
      "erd_depth": 0.8,
      "erd_channels_left": [1],
      "erd_channels_right": [2],
      "noise_sigma": 0.05
    }
  }
})";

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("run --config x.json --frobnicate").exit_code == 2);
  CHECK(run_cli("").exit_code == 2);           // a subcommand is required
  CHECK(run_cli("run").exit_code == 2);        // --config is required
  CHECK(run_cli("no_such_verb").exit_code == 2);
}

TEST_CASE("validate reports diagnostics on stderr and exits 2") {
  TempPath good(write_file("test_cli_good.json", kCspConfig));
  const RunResult ok = run_cli("validate --config " + good.path);
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("ok") != std::string::npos);

  TempPath bad(write_file("test_cli_bad.json", R"({
    "method": "csp_lda",
    "grid": {"count": 16},
    "data": {"synthetic": {"trials_per_class": 4,
                            "erd_channels_left": [1],
                            "erd_channels_right": [2]}}
  })"));
  const RunResult fail = run_cli("validate --config " + bad.path);
  CHECK(fail.exit_code == 2);
  CHECK(fail.err.find("grid.count") != std::string::npos);
  CHECK(fail.err.find("single window") != std::string::npos);

  // Config errors from `run` carry the same exit code.
  CHECK(run_cli("run --config " + bad.path).exit_code == 2);
  CHECK(run_cli("run --config test_cli_missing.json").exit_code == 2);
}

TEST_CASE("run executes a baseline experiment and honors --out/--seed") {
  TempPath cfg(write_file("test_cli_run.json", kCspConfig));
  TempPath out("test_cli_out");
  const RunResult r = run_cli("run --config " + cfg.path + " --out " +
                              out.path + " --jobs 1");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("method csp_lda") != std::string::npos);
  CHECK(r.out.find("S01") != std::string::npos);
  CHECK(r.out.find("mean") != std::string::npos);
  REQUIRE(fs::exists(fs::path(out.path) / "report.csv"));
  const std::string report = slurp((fs::path(out.path) / "report.csv").string());
  CHECK(report.find("master_seed,5") != std::string::npos);

  // --seed overrides the file value in the report.
  TempPath out2("test_cli_out2");
  const RunResult r2 = run_cli("run --config " + cfg.path + " --out " +
                               out2.path + " --seed 99");
  CHECK(r2.exit_code == 0);
  const std::string report2 =
      slurp((fs::path(out2.path) / "report.csv").string());
  CHECK(report2.find("master_seed,99") != std::string::npos);
}

TEST_CASE("run on missing data files exits 3") {
  TempPath cfg(write_file("test_cli_files.json", R"({
    "method": "csp_lda",
    "data": {"subjects": [{"id": "A01",
                            "train": "test_cli_absent_train.eegt",
                            "test": "test_cli_absent_test.eegt"}]}
  })"));
  CHECK(run_cli("run --config " + cfg.path).exit_code == 3);
}

TEST_CASE("synth materializes subjects; convert-check inspects them") {
  TempPath cfg(write_file("test_cli_synth.json", kCspConfig));
  TempPath dir("test_cli_synth_out");
  const RunResult r =
      run_cli("synth --config " + cfg.path + " --out " + dir.path);
  CHECK(r.exit_code == 0);
  const std::string train = (fs::path(dir.path) / "S01_train.eegt").string();
  REQUIRE(fs::exists(train));
  REQUIRE(fs::exists(fs::path(dir.path) / "S01_test.eegt"));
  CHECK(r.out.find("S01_train.eegt") != std::string::npos);

  const RunResult check = run_cli("convert-check " + train);
  CHECK(check.exit_code == 0);
  CHECK(check.out.find("channels     4") != std::string::npos);
  CHECK(check.out.find("6 left, 6 right") != std::string::npos);
  CHECK(check.out.find("Cz") != std::string::npos);

  // A recording without Cz gets a warning note but still checks out.
  mi::RawRecording rec = mi::read_recording(train);
  rec.channel_labels[0] = "Fz";
  const std::string no_cz = (fs::path(dir.path) / "no_cz.eegt").string();
  mi::write_recording(no_cz, rec);
  const RunResult check2 = run_cli("convert-check " + no_cz);
  CHECK(check2.exit_code == 0);
  CHECK(check2.out.find("no 'Cz' channel") != std::string::npos);

  // Corrupt containers exit 3.
  const std::string bad = (fs::path(dir.path) / "bad.eegt").string();
  write_file(bad, "NOPEnot a container");
  CHECK(run_cli("convert-check " + bad).exit_code == 3);
  CHECK(run_cli("convert-check test_cli_definitely_absent.eegt").exit_code ==
        3);
}

TEST_CASE("ablate requires the cnn_only method") {
  TempPath cfg(write_file("test_cli_ablate.json", kCspConfig));
  CHECK(run_cli("ablate --config " + cfg.path).exit_code == 2);
}

TEST_CASE("MI_DECODE_LOG controls stderr verbosity") {
  TempPath cfg(write_file("test_cli_log.json", kCspConfig));
  const RunResult quiet =
      run_cli("run --config " + cfg.path, "MI_DECODE_LOG=off");
  CHECK(quiet.exit_code == 0);
  CHECK(quiet.err.empty());

  const RunResult loud =
      run_cli("run --config " + cfg.path, "MI_DECODE_LOG=debug");
  CHECK(loud.exit_code == 0);
  CHECK(loud.err.find("[mi_decode") != std::string::npos);
}
