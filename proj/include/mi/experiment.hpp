#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mi/data.hpp"
#include "mi/model.hpp"
#include "mi/signal.hpp"

namespace mi {

enum class Method { cnn_gru, cnn_only, csp_lda, cssp_lda };

const char* method_name(Method m);

struct SubjectFiles {
  std::string id;
  std::string train_path;
  std::string test_path;
};

// Everything one run needs, loadable from a JSON config file. Exactly one of
// {subjects, synthetic, sequence_synthetic} provides the data.
struct ExperimentConfig {
  Method method = Method::cnn_gru;
  std::uint64_t seed = 0;
  std::vector<SubjectFiles> subjects;
  std::optional<SyntheticSpec> synthetic;
  std::optional<SequenceSyntheticSpec> sequence_synthetic;
  int synthetic_subjects = 1;
  BandSpec band{8.0, 30.0, 4};
  WindowGrid grid{0.5, 2.0, 0.1, 16};
  CnnGruConfig model;
  bool local_average = true;  // Cz local-average reference (cnn methods)
  int csp_pairs = 3;
  int cssp_delay = 5;
  int cnn_only_band = 0;  // band trained when method == cnn_only under `run`
  std::string out_dir;
  int jobs = 1;
};

// Parses and fully validates; throws invalid_config listing every problem
// with its field path. Unknown keys are rejected.
ExperimentConfig load_config(const std::string& path);

// All diagnostics for a config file; empty means valid.
std::vector<std::string> validate_config_file(const std::string& path);

// Key-sorted canonical form used for hashing and the config echo.
nlohmann::json canonical_config(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

std::uint64_t subject_seed(std::uint64_t master, const std::string& subject_id);

struct SubjectResult {
  std::string id;
  double accuracy = 0.0;
  int n_test = 0;
  int n_correct = 0;
  std::uint64_t job_seed = 0;
};

struct ResultReport {
  std::string method;
  std::string config_digest;
  std::uint64_t master_seed = 0;
  std::vector<SubjectResult> subjects;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n-1)
  // Ablation sweep only: band x subject accuracy plus per-band means.
  std::vector<std::string> band_labels;
  std::vector<std::vector<double>> band_accuracy;
  std::vector<double> band_mean;
  double wall_time_s = 0.0;  // reported in run_meta.json, never in the CSV
};

// Preprocess -> features -> train -> evaluate for the configured method.
// Writes report.csv, config_echo.json, run_meta.json and per-subject
// checkpoints into config.out_dir when it is non-empty.
ResultReport run_experiment(const ExperimentConfig& config);

// Trains one CNN-only model per temporal band (method must be cnn_only) and
// emits the band x subject accuracy matrix.
ResultReport run_ablation_sweep(const ExperimentConfig& config);

void write_report_csv(const std::string& path, const ResultReport& report);
void write_ablation_csv(const std::string& path, const ResultReport& report);

// Feature pipeline shared by run/ablate: filter, segment, reference, NSCM.
std::vector<FeatureTensor> extract_feature_tensors(const RawRecording& rec,
                                                   const ExperimentConfig& config,
                                                   int trial_id_offset = 0);

// Materializes the configured synthetic subjects as <id>_train.eegt /
// <id>_test.eegt under out_dir, using the same per-subject seed derivation as
// run_experiment, and returns the written paths. Throws invalid_config when
// the config has no synthetic data source.
std::vector<std::string> write_synthetic_dataset(const ExperimentConfig& config,
                                                 const std::string& out_dir);

}  // namespace mi
