#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mi/container.hpp"
#include "mi/errors.hpp"
#include "mi/experiment.hpp"
#include "mi/log.hpp"

namespace {

// Exit codes: 0 success, 1 unexpected, 2 configuration, 3 data/container,
// 4 numerical/runtime failures.
int exit_code_for(mi::Errc code) {
  switch (code) {
    case mi::Errc::invalid_config:
    case mi::Errc::invalid_band:
    case mi::Errc::invalid_probability:
      return 2;
    case mi::Errc::bad_magic:
    case mi::Errc::version_unsupported:
    case mi::Errc::truncated_payload:
    case mi::Errc::malformed_header:
    case mi::Errc::missing_session:
    case mi::Errc::io_error:
    case mi::Errc::out_of_range:
    case mi::Errc::empty_dataset:
      return 3;
    default:
      return 4;
  }
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int jobs = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* jobs_opt = nullptr;
};

void add_common(CLI::App* sub, CommonFlags* flags) {
  sub->add_option("--config", flags->config_path, "JSON experiment config")
      ->required();
  flags->seed_opt =
      sub->add_option("--seed", flags->seed, "override the master seed");
  flags->out_opt =
      sub->add_option("--out", flags->out_dir, "output directory override");
  flags->jobs_opt =
      sub->add_option("--jobs", flags->jobs, "parallel subject jobs override")
          ->check(CLI::PositiveNumber);
}

mi::ExperimentConfig load_with_overrides(const CommonFlags& flags) {
  mi::ExperimentConfig config = mi::load_config(flags.config_path);
  if (flags.seed_opt->count() > 0) config.seed = flags.seed;
  if (flags.out_opt->count() > 0) config.out_dir = flags.out_dir;
  if (flags.jobs_opt->count() > 0) config.jobs = flags.jobs;
  return config;
}

void print_report(const mi::ResultReport& report, const std::string& out_dir) {
  std::printf("method %s  config %s  seed %llu\n", report.method.c_str(),
              report.config_digest.c_str(),
              static_cast<unsigned long long>(report.master_seed));
  for (const mi::SubjectResult& s : report.subjects) {
    std::printf("%-8s accuracy %.4f  (%d/%d)\n", s.id.c_str(), s.accuracy,
                s.n_correct, s.n_test);
  }
  std::printf("mean %.4f  stddev %.4f\n", report.mean, report.stddev);
  if (!out_dir.empty()) {
    std::printf("outputs written to %s\n", out_dir.c_str());
  }
}

void print_ablation(const mi::ResultReport& report, const std::string& out_dir) {
  std::printf("method %s  config %s  seed %llu\n", report.method.c_str(),
              report.config_digest.c_str(),
              static_cast<unsigned long long>(report.master_seed));
  std::printf("%-4s %-10s", "band", "window_s");
  for (const mi::SubjectResult& s : report.subjects) {
    std::printf(" %-8s", s.id.c_str());
  }
  std::printf(" %-8s\n", "mean");
  for (std::size_t b = 0; b < report.band_accuracy.size(); ++b) {
    std::printf("%-4zu %-10s", b, report.band_labels[b].c_str());
    for (double a : report.band_accuracy[b]) std::printf(" %-8.4f", a);
    std::printf(" %-8.4f\n", report.band_mean[b]);
  }
  if (!out_dir.empty()) {
    std::printf("outputs written to %s\n", out_dir.c_str());
  }
}

int convert_check(const std::string& path) {
  const mi::RawRecording rec = mi::read_recording(path);
  int n_left = 0;
  int n_right = 0;
  int n_other = 0;
  for (const mi::CueEvent& ev : rec.events) {
    if (ev.label == mi::ClassLabel::left) ++n_left;
    else if (ev.label == mi::ClassLabel::right) ++n_right;
    else ++n_other;
  }
  std::printf("%s: ok\n", path.c_str());
  std::printf("  channels     %d\n", rec.channels());
  std::printf("  samples      %lld (%.3f s at %g Hz)\n",
              static_cast<long long>(rec.n_samples()),
              static_cast<double>(rec.n_samples()) / rec.fs, rec.fs);
  std::printf("  cues         %d left, %d right, %d other\n", n_left, n_right,
              n_other);
  std::string labels;
  for (std::size_t i = 0; i < rec.channel_labels.size(); ++i) {
    if (i > 0) labels += " ";
    labels += rec.channel_labels[i];
  }
  std::printf("  labels       %s\n", labels.c_str());
  if (rec.channel_index("Cz") < 0) {
    std::printf("  note: no 'Cz' channel; local average referencing will "
                "reject this file\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  mi::set_log_level(mi::log_level_from_env());

  CLI::App app{"motor-imagery EEG decoding harness"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  CLI::App* run_cmd =
      app.add_subcommand("run", "train and evaluate the configured method");
  add_common(run_cmd, &run_flags);

  CommonFlags ablate_flags;
  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "per-band CNN-only sweep over the window grid");
  add_common(ablate_cmd, &ablate_flags);

  std::string validate_path;
  CLI::App* validate_cmd =
      app.add_subcommand("validate", "check a config file and report problems");
  validate_cmd->add_option("--config", validate_path, "JSON experiment config")
      ->required();

  CommonFlags synth_flags;
  CLI::App* synth_cmd = app.add_subcommand(
      "synth", "write the configured synthetic subjects as EEGT files");
  add_common(synth_cmd, &synth_flags);

  std::string check_path;
  CLI::App* check_cmd = app.add_subcommand(
      "convert-check", "validate an EEGT recording produced by a converter");
  check_cmd->add_option("file", check_path, "EEGT recording path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run_cmd->parsed()) {
      const mi::ExperimentConfig config = load_with_overrides(run_flags);
      const mi::ResultReport report = mi::run_experiment(config);
      print_report(report, config.out_dir);
      return 0;
    }
    if (ablate_cmd->parsed()) {
      const mi::ExperimentConfig config = load_with_overrides(ablate_flags);
      const mi::ResultReport report = mi::run_ablation_sweep(config);
      print_ablation(report, config.out_dir);
      return 0;
    }
    if (validate_cmd->parsed()) {
      const std::vector<std::string> diags =
          mi::validate_config_file(validate_path);
      if (diags.empty()) {
        std::printf("%s: ok\n", validate_path.c_str());
        return 0;
      }
      for (const std::string& d : diags) {
        std::fprintf(stderr, "%s\n", d.c_str());
      }
      return 2;
    }
    if (synth_cmd->parsed()) {
      mi::ExperimentConfig config = load_with_overrides(synth_flags);
      const std::vector<std::string> written =
          mi::write_synthetic_dataset(config, config.out_dir);
      for (const std::string& path : written) {
        std::printf("%s\n", path.c_str());
      }
      return 0;
    }
    if (check_cmd->parsed()) {
      return convert_check(check_path);
    }
  } catch (const mi::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
