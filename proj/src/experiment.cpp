#include "mi/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <string>
#include <utility>

#include "mi/baselines.hpp"
#include "mi/container.hpp"
#include "mi/errors.hpp"
#include "mi/log.hpp"

namespace mi {

namespace fs = std::filesystem;

const char* method_name(Method m) {
  switch (m) {
    case Method::cnn_gru: return "cnn_gru";
    case Method::cnn_only: return "cnn_only";
    case Method::csp_lda: return "csp_lda";
    case Method::cssp_lda: return "cssp_lda";
  }
  return "unknown";
}

namespace {

constexpr std::uint64_t kTrainDataStream = 1;
constexpr std::uint64_t kTestDataStream = 2;
constexpr std::uint64_t kModelStream = 3;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_compact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

bool is_cnn_method(Method m) {
  return m == Method::cnn_gru || m == Method::cnn_only;
}

// ---------------------------------------------------------------------------
// Config parsing

class ConfigReader {
 public:
  std::vector<std::string> diags;

  void add(const std::string& path, const std::string& msg) {
    diags.push_back(path + ": " + msg);
  }

  void check_keys(const nlohmann::json& obj, const std::string& path,
                  const std::set<std::string>& allowed) {
    for (const auto& item : obj.items()) {
      if (allowed.find(item.key()) == allowed.end()) {
        add(path.empty() ? item.key() : path + "." + item.key(),
            "unknown key");
      }
    }
  }

  bool get_int(const nlohmann::json& obj, const std::string& path,
               const std::string& key, int* out, int min_value) {
    if (!obj.contains(key)) return false;
    const auto& v = obj[key];
    if (!v.is_number_integer()) {
      add(path + key, "must be an integer");
      return false;
    }
    const std::int64_t raw = v.get<std::int64_t>();
    if (raw < min_value) {
      add(path + key, "must be >= " + std::to_string(min_value));
      return false;
    }
    *out = static_cast<int>(raw);
    return true;
  }

  bool get_double(const nlohmann::json& obj, const std::string& path,
                  const std::string& key, double* out) {
    if (!obj.contains(key)) return false;
    const auto& v = obj[key];
    if (!v.is_number()) {
      add(path + key, "must be a number");
      return false;
    }
    *out = v.get<double>();
    return true;
  }

  bool get_bool(const nlohmann::json& obj, const std::string& path,
                const std::string& key, bool* out) {
    if (!obj.contains(key)) return false;
    const auto& v = obj[key];
    if (!v.is_boolean()) {
      add(path + key, "must be a boolean");
      return false;
    }
    *out = v.get<bool>();
    return true;
  }

  bool get_string(const nlohmann::json& obj, const std::string& path,
                  const std::string& key, std::string* out) {
    if (!obj.contains(key)) return false;
    const auto& v = obj[key];
    if (!v.is_string()) {
      add(path + key, "must be a string");
      return false;
    }
    *out = v.get<std::string>();
    return true;
  }

  bool get_channel_list(const nlohmann::json& obj, const std::string& path,
                        const std::string& key, std::vector<int>* out) {
    if (!obj.contains(key)) return false;
    const auto& v = obj[key];
    if (!v.is_array()) {
      add(path + key, "must be an array of channel indices");
      return false;
    }
    out->clear();
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<std::int64_t>() < 0) {
        add(path + key, "entries must be non-negative integers");
        return false;
      }
      out->push_back(e.get<int>());
    }
    return true;
  }
};

void parse_config(const std::string& path, ExperimentConfig* cfg,
                  std::vector<std::string>* diags) {
  ConfigReader r;
  *cfg = ExperimentConfig{};

  std::ifstream in(path);
  if (!in) {
    diags->push_back(path + ": cannot open config file");
    return;
  }
  nlohmann::json root = nlohmann::json::parse(in, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    diags->push_back(path + ": not a JSON object");
    return;
  }

  r.check_keys(root, "",
               {"method", "seed", "out", "jobs", "data", "band", "grid",
                "reference", "model", "csp", "cssp", "cnn_only_band"});

  // method
  std::string method_str = "cnn_gru";
  r.get_string(root, "", "method", &method_str);
  if (method_str == "cnn_gru") {
    cfg->method = Method::cnn_gru;
  } else if (method_str == "cnn_only") {
    cfg->method = Method::cnn_only;
  } else if (method_str == "csp_lda") {
    cfg->method = Method::csp_lda;
  } else if (method_str == "cssp_lda") {
    cfg->method = Method::cssp_lda;
  } else {
    r.add("method", "must be one of cnn_gru, cnn_only, csp_lda, cssp_lda");
  }

  if (root.contains("seed")) {
    const auto& v = root["seed"];
    if (v.is_number_unsigned()) {
      cfg->seed = v.get<std::uint64_t>();
    } else if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      cfg->seed = static_cast<std::uint64_t>(v.get<std::int64_t>());
    } else {
      r.add("seed", "must be a non-negative integer");
    }
  }

  r.get_string(root, "", "out", &cfg->out_dir);
  r.get_int(root, "", "jobs", &cfg->jobs, 1);

  // data
  if (!root.contains("data") || !root["data"].is_object()) {
    r.add("data", "required object with one of subjects/synthetic/"
                  "sequence_synthetic");
  } else {
    const nlohmann::json& data = root["data"];
    r.check_keys(data, "data", {"subjects", "synthetic", "sequence_synthetic"});
    int sources = 0;
    if (data.contains("subjects")) ++sources;
    if (data.contains("synthetic")) ++sources;
    if (data.contains("sequence_synthetic")) ++sources;
    if (sources != 1) {
      r.add("data", "exactly one of subjects, synthetic, sequence_synthetic "
                    "must be present");
    }

    if (data.contains("subjects")) {
      if (!data["subjects"].is_array() || data["subjects"].empty()) {
        r.add("data.subjects", "must be a non-empty array");
      } else {
        std::set<std::string> seen;
        int idx = 0;
        for (const auto& s : data["subjects"]) {
          const std::string p = "data.subjects[" + std::to_string(idx) + "]";
          if (!s.is_object()) {
            r.add(p, "must be an object with id/train/test");
            ++idx;
            continue;
          }
          r.check_keys(s, p, {"id", "train", "test"});
          SubjectFiles files;
          if (!r.get_string(s, p + ".", "id", &files.id) || files.id.empty()) {
            r.add(p + ".id", "required non-empty string");
          }
          if (!r.get_string(s, p + ".", "train", &files.train_path) ||
              files.train_path.empty()) {
            r.add(p + ".train", "required non-empty path");
          }
          if (!r.get_string(s, p + ".", "test", &files.test_path) ||
              files.test_path.empty()) {
            r.add(p + ".test", "required non-empty path");
          }
          if (!files.id.empty() && !seen.insert(files.id).second) {
            r.add(p + ".id", "duplicate subject id '" + files.id + "'");
          }
          cfg->subjects.push_back(std::move(files));
          ++idx;
        }
      }
    }

    if (data.contains("synthetic")) {
      const nlohmann::json& syn = data["synthetic"];
      if (!syn.is_object()) {
        r.add("data.synthetic", "must be an object");
      } else {
        r.check_keys(syn, "data.synthetic",
                     {"subjects", "trials_per_class", "fs", "channels",
                      "trial_len_s", "mu_freq_hz", "erd_depth",
                      "erd_channels_left", "erd_channels_right", "noise_sigma"});
        SyntheticSpec spec;
        r.get_int(syn, "data.synthetic.", "subjects", &cfg->synthetic_subjects, 1);
        r.get_int(syn, "data.synthetic.", "trials_per_class",
                  &spec.n_trials_per_class, 1);
        r.get_double(syn, "data.synthetic.", "fs", &spec.fs);
        r.get_int(syn, "data.synthetic.", "channels", &spec.channels, 2);
        r.get_double(syn, "data.synthetic.", "trial_len_s", &spec.trial_len_s);
        r.get_double(syn, "data.synthetic.", "mu_freq_hz", &spec.mu_freq_hz);
        r.get_double(syn, "data.synthetic.", "erd_depth", &spec.erd_depth);
        if (!r.get_channel_list(syn, "data.synthetic.", "erd_channels_left",
                                &spec.erd_channels_left)) {
          spec.erd_channels_left = {1, 2};
        }
        if (!r.get_channel_list(syn, "data.synthetic.", "erd_channels_right",
                                &spec.erd_channels_right)) {
          spec.erd_channels_right = {spec.channels - 3, spec.channels - 2};
        }
        r.get_double(syn, "data.synthetic.", "noise_sigma", &spec.noise_sigma);
        if (!(spec.erd_depth >= 0.0) || !(spec.erd_depth <= 1.0)) {
          r.add("data.synthetic.erd_depth", "must lie in [0, 1]");
        }
        if (!(spec.fs > 0.0)) r.add("data.synthetic.fs", "must be positive");
        if (!(spec.trial_len_s > kSyntheticCueLatencyS)) {
          r.add("data.synthetic.trial_len_s",
                "must exceed the cue latency of " +
                    fmt_compact(kSyntheticCueLatencyS) + " s");
        }
        cfg->synthetic = spec;
      }
    }

    if (data.contains("sequence_synthetic")) {
      const nlohmann::json& syn = data["sequence_synthetic"];
      if (!syn.is_object()) {
        r.add("data.sequence_synthetic", "must be an object");
      } else {
        r.check_keys(syn, "data.sequence_synthetic",
                     {"subjects", "trials_per_class", "fs", "channels",
                      "segments", "segment_len_s", "mu_freq_hz", "pattern_a",
                      "pattern_b", "noise_sigma"});
        SequenceSyntheticSpec spec;
        r.get_int(syn, "data.sequence_synthetic.", "subjects",
                  &cfg->synthetic_subjects, 1);
        r.get_int(syn, "data.sequence_synthetic.", "trials_per_class",
                  &spec.n_trials_per_class, 1);
        r.get_double(syn, "data.sequence_synthetic.", "fs", &spec.fs);
        r.get_int(syn, "data.sequence_synthetic.", "channels", &spec.channels, 2);
        r.get_int(syn, "data.sequence_synthetic.", "segments", &spec.n_segments,
                  2);
        r.get_double(syn, "data.sequence_synthetic.", "segment_len_s",
                     &spec.segment_len_s);
        r.get_double(syn, "data.sequence_synthetic.", "mu_freq_hz",
                     &spec.mu_freq_hz);
        if (!r.get_channel_list(syn, "data.sequence_synthetic.", "pattern_a",
                                &spec.pattern_a)) {
          spec.pattern_a = {1, 2};
        }
        if (!r.get_channel_list(syn, "data.sequence_synthetic.", "pattern_b",
                                &spec.pattern_b)) {
          spec.pattern_b = {3, 4};
        }
        r.get_double(syn, "data.sequence_synthetic.", "noise_sigma",
                     &spec.noise_sigma);
        if (!(spec.fs > 0.0)) {
          r.add("data.sequence_synthetic.fs", "must be positive");
        }
        if (!(spec.segment_len_s > 0.0)) {
          r.add("data.sequence_synthetic.segment_len_s", "must be positive");
        }
        cfg->sequence_synthetic = spec;
      }
    }
  }

  // band (defaults depend on the method)
  if (is_cnn_method(cfg->method)) {
    cfg->band = BandSpec{8.0, 30.0, 4};
  } else {
    cfg->band = BandSpec{8.0, 13.0, 4};
  }
  if (root.contains("band")) {
    const nlohmann::json& band = root["band"];
    if (!band.is_object()) {
      r.add("band", "must be an object");
    } else {
      r.check_keys(band, "band", {"low_hz", "high_hz", "order"});
      r.get_double(band, "band.", "low_hz", &cfg->band.low_hz);
      r.get_double(band, "band.", "high_hz", &cfg->band.high_hz);
      r.get_int(band, "band.", "order", &cfg->band.order, 2);
    }
  }
  if (!(cfg->band.low_hz > 0.0)) r.add("band.low_hz", "must be positive");
  if (!(cfg->band.high_hz > cfg->band.low_hz)) {
    r.add("band.high_hz", "must exceed band.low_hz");
  }
  if (cfg->band.order % 2 != 0 || cfg->band.order < 2) {
    r.add("band.order", "must be an even integer >= 2");
  }

  // grid (defaults: paper grid for cnn methods, a single window for csp
  // methods, the generator-aligned grid for sequence data)
  if (is_cnn_method(cfg->method)) {
    cfg->grid = WindowGrid{0.5, 2.0, 0.1, 16};
  } else {
    cfg->grid = WindowGrid{0.5, 2.0, 0.0, 1};
  }
  if (cfg->sequence_synthetic.has_value()) {
    cfg->grid = sequence_grid(*cfg->sequence_synthetic);
  }
  if (root.contains("grid")) {
    const nlohmann::json& grid = root["grid"];
    if (!grid.is_object()) {
      r.add("grid", "must be an object");
    } else {
      r.check_keys(grid, "grid",
                   {"start_offset_s", "window_len_s", "step_s", "count"});
      r.get_double(grid, "grid.", "start_offset_s", &cfg->grid.start_offset_s);
      r.get_double(grid, "grid.", "window_len_s", &cfg->grid.window_len_s);
      r.get_double(grid, "grid.", "step_s", &cfg->grid.step_s);
      r.get_int(grid, "grid.", "count", &cfg->grid.count, 1);
    }
  }
  if (!(cfg->grid.window_len_s > 0.0)) {
    r.add("grid.window_len_s", "must be positive");
  }
  if (cfg->grid.count < 1) r.add("grid.count", "must be >= 1");
  if (cfg->grid.count > 1 && !(cfg->grid.step_s > 0.0)) {
    r.add("grid.step_s", "must be positive when count > 1");
  }
  if (!is_cnn_method(cfg->method) && cfg->grid.count != 1) {
    r.add("grid.count", "csp_lda/cssp_lda operate on a single window");
  }

  // reference
  cfg->local_average = is_cnn_method(cfg->method);
  std::string reference;
  if (r.get_string(root, "", "reference", &reference)) {
    if (reference == "local_average") {
      cfg->local_average = true;
    } else if (reference == "none") {
      cfg->local_average = false;
    } else {
      r.add("reference", "must be 'local_average' or 'none'");
    }
  }

  // model
  if (root.contains("model")) {
    const nlohmann::json& model = root["model"];
    if (!model.is_object()) {
      r.add("model", "must be an object");
    } else {
      r.check_keys(model, "model",
                   {"kernel", "conv1_filters", "gru_hidden", "gru_readout",
                    "p_drop", "lr", "epochs"});
      r.get_int(model, "model.", "kernel", &cfg->model.kernel, 1);
      r.get_int(model, "model.", "conv1_filters", &cfg->model.conv1_filters, 1);
      r.get_int(model, "model.", "gru_hidden", &cfg->model.gru_hidden, 1);
      r.get_bool(model, "model.", "gru_readout", &cfg->model.gru_readout);
      r.get_double(model, "model.", "p_drop", &cfg->model.p_drop);
      r.get_double(model, "model.", "lr", &cfg->model.lr);
      r.get_int(model, "model.", "epochs", &cfg->model.epochs, 1);
    }
  }
  if (!(cfg->model.p_drop >= 0.0) || !(cfg->model.p_drop < 1.0)) {
    r.add("model.p_drop", "must lie in [0, 1)");
  }
  if (!(cfg->model.lr > 0.0)) r.add("model.lr", "must be positive");
  if (!cfg->model.gru_readout && cfg->model.gru_hidden != cfg->model.n_classes) {
    r.add("model.gru_hidden",
          "must equal the class count when gru_readout is false");
  }

  // csp / cssp
  if (root.contains("csp")) {
    const nlohmann::json& csp = root["csp"];
    if (!csp.is_object()) {
      r.add("csp", "must be an object");
    } else {
      r.check_keys(csp, "csp", {"pairs"});
      r.get_int(csp, "csp.", "pairs", &cfg->csp_pairs, 1);
    }
  }
  if (root.contains("cssp")) {
    const nlohmann::json& cssp = root["cssp"];
    if (!cssp.is_object()) {
      r.add("cssp", "must be an object");
    } else {
      r.check_keys(cssp, "cssp", {"delay_samples"});
      r.get_int(cssp, "cssp.", "delay_samples", &cfg->cssp_delay, 1);
    }
  }

  if (cfg->method == Method::cssp_lda && !root.contains("cssp")) {
    r.add("cssp.delay_samples", "required when method is cssp_lda");
  }

  r.get_int(root, "", "cnn_only_band", &cfg->cnn_only_band, 0);
  if (cfg->cnn_only_band < 0 || cfg->cnn_only_band >= cfg->grid.count) {
    r.add("cnn_only_band", "must lie in [0, grid.count)");
  }

  // Cross-checks that need the channel count are possible at load time only
  // for synthetic data; file-backed subjects are checked when data is read.
  int known_channels = 0;
  if (cfg->synthetic.has_value()) known_channels = cfg->synthetic->channels;
  if (cfg->sequence_synthetic.has_value()) {
    known_channels = cfg->sequence_synthetic->channels;
  }
  if (known_channels > 0) {
    if (is_cnn_method(cfg->method) && cfg->model.kernel > known_channels) {
      r.add("model.kernel", "kernel exceeds channels (" +
                                std::to_string(cfg->model.kernel) + " > " +
                                std::to_string(known_channels) + ")");
    }
    const int csp_space = cfg->method == Method::cssp_lda ? 2 * known_channels
                                                          : known_channels;
    if (!is_cnn_method(cfg->method) && 2 * cfg->csp_pairs > csp_space) {
      r.add("csp.pairs", "needs 2*pairs <= filter space of " +
                             std::to_string(csp_space) + " channels");
    }
  }

  *diags = std::move(r.diags);
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg;
  std::vector<std::string> diags;
  parse_config(path, &cfg, &diags);
  if (!diags.empty()) {
    std::string msg = "config '" + path + "' is invalid:";
    for (const std::string& d : diags) msg += "\n  " + d;
    fail(Errc::invalid_config, msg);
  }
  return cfg;
}

std::vector<std::string> validate_config_file(const std::string& path) {
  ExperimentConfig cfg;
  std::vector<std::string> diags;
  parse_config(path, &cfg, &diags);
  return diags;
}

nlohmann::json canonical_config(const ExperimentConfig& config) {
  nlohmann::json j;
  j["method"] = method_name(config.method);
  j["seed"] = config.seed;

  nlohmann::json data;
  if (!config.subjects.empty()) {
    nlohmann::json subjects = nlohmann::json::array();
    for (const SubjectFiles& s : config.subjects) {
      subjects.push_back(
          {{"id", s.id}, {"train", s.train_path}, {"test", s.test_path}});
    }
    data["subjects"] = subjects;
  }
  if (config.synthetic.has_value()) {
    const SyntheticSpec& s = *config.synthetic;
    data["synthetic"] = {{"subjects", config.synthetic_subjects},
                         {"trials_per_class", s.n_trials_per_class},
                         {"fs", s.fs},
                         {"channels", s.channels},
                         {"trial_len_s", s.trial_len_s},
                         {"mu_freq_hz", s.mu_freq_hz},
                         {"erd_depth", s.erd_depth},
                         {"erd_channels_left", s.erd_channels_left},
                         {"erd_channels_right", s.erd_channels_right},
                         {"noise_sigma", s.noise_sigma}};
  }
  if (config.sequence_synthetic.has_value()) {
    const SequenceSyntheticSpec& s = *config.sequence_synthetic;
    data["sequence_synthetic"] = {{"subjects", config.synthetic_subjects},
                                  {"trials_per_class", s.n_trials_per_class},
                                  {"fs", s.fs},
                                  {"channels", s.channels},
                                  {"segments", s.n_segments},
                                  {"segment_len_s", s.segment_len_s},
                                  {"mu_freq_hz", s.mu_freq_hz},
                                  {"pattern_a", s.pattern_a},
                                  {"pattern_b", s.pattern_b},
                                  {"noise_sigma", s.noise_sigma}};
  }
  j["data"] = data;
  j["band"] = {{"low_hz", config.band.low_hz},
               {"high_hz", config.band.high_hz},
               {"order", config.band.order}};
  j["grid"] = {{"start_offset_s", config.grid.start_offset_s},
               {"window_len_s", config.grid.window_len_s},
               {"step_s", config.grid.step_s},
               {"count", config.grid.count}};
  j["reference"] = config.local_average ? "local_average" : "none";
  j["model"] = {{"kernel", config.model.kernel},
                {"conv1_filters", config.model.conv1_filters},
                {"gru_hidden", config.model.gru_hidden},
                {"gru_readout", config.model.gru_readout},
                {"p_drop", config.model.p_drop},
                {"lr", config.model.lr},
                {"epochs", config.model.epochs}};
  j["csp"] = {{"pairs", config.csp_pairs}};
  j["cssp"] = {{"delay_samples", config.cssp_delay}};
  j["cnn_only_band"] = config.cnn_only_band;
  return j;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string canonical = canonical_config(config).dump();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

std::uint64_t subject_seed(std::uint64_t master, const std::string& subject_id) {
  return derive_seed(master, fnv1a64(subject_id));
}

// ---------------------------------------------------------------------------
// Feature pipeline

std::vector<FeatureTensor> extract_feature_tensors(const RawRecording& rec,
                                                   const ExperimentConfig& config,
                                                   int trial_id_offset) {
  const FilterCoefficients coeffs = design_bandpass(config.band, rec.fs);
  const RawRecording filtered = apply_filter(rec, coeffs);
  auto trials = segment(filtered, config.grid, trial_id_offset);

  int ref = -1;
  if (config.local_average) {
    int count = 0;
    for (std::size_t i = 0; i < rec.channel_labels.size(); ++i) {
      if (rec.channel_labels[i] == "Cz") {
        ref = static_cast<int>(i);
        ++count;
      }
    }
    if (count != 1) {
      fail(Errc::invalid_config,
           "local average referencing needs exactly one channel labeled 'Cz', "
           "found " + std::to_string(count));
    }
  }

  std::vector<FeatureTensor> out;
  out.reserve(trials.size());
  for (auto& windows : trials) {
    if (ref >= 0) {
      for (EpochWindow& w : windows) {
        w.samples = local_average_reference(w.samples, ref);
      }
    }
    out.push_back(build_feature_tensor(windows));
  }
  return out;
}

namespace {

// Raw (non-NSCM) single-window epochs for the CSP/CSSP baselines.
std::vector<EpochWindow> extract_epochs(const RawRecording& rec,
                                        const ExperimentConfig& config,
                                        int trial_id_offset) {
  const FilterCoefficients coeffs = design_bandpass(config.band, rec.fs);
  const RawRecording filtered = apply_filter(rec, coeffs);
  auto trials = segment(filtered, config.grid, trial_id_offset);

  int ref = -1;
  if (config.local_average) {
    ref = rec.channel_index("Cz");
    if (ref < 0) {
      fail(Errc::invalid_config,
           "local average referencing needs a channel labeled 'Cz'");
    }
  }
  std::vector<EpochWindow> out;
  out.reserve(trials.size());
  for (auto& windows : trials) {
    EpochWindow w = std::move(windows.front());
    if (ref >= 0) w.samples = local_average_reference(w.samples, ref);
    out.push_back(std::move(w));
  }
  return out;
}

FeatureTensor select_band(const FeatureTensor& t, int band) {
  FeatureTensor out;
  out.trial_id = t.trial_id;
  out.label = t.label;
  out.slices = {t.slices[static_cast<std::size_t>(band)]};
  return out;
}

struct SubjectTask {
  std::string id;
  std::uint64_t job_seed = 0;
  // exactly one source: files or a synthetic/sequence index
  const SubjectFiles* files = nullptr;
};

std::vector<SubjectTask> plan_subjects(const ExperimentConfig& config) {
  std::vector<SubjectTask> tasks;
  if (!config.subjects.empty()) {
    for (const SubjectFiles& s : config.subjects) {
      tasks.push_back({s.id, subject_seed(config.seed, s.id), &s});
    }
  } else {
    for (int i = 0; i < config.synthetic_subjects; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "S%02d", i + 1);
      tasks.push_back({buf, subject_seed(config.seed, buf), nullptr});
    }
  }
  return tasks;
}

// Generates the train (which == 0) or test (which == 1) recording of one
// synthetic subject. The stream split keeps the two halves independent.
RawRecording generate_subject_recording(const SubjectTask& task,
                                        const ExperimentConfig& config,
                                        int which) {
  const std::uint64_t stream = which == 0 ? kTrainDataStream : kTestDataStream;
  if (config.synthetic.has_value()) {
    SyntheticSpec spec = *config.synthetic;
    spec.seed = derive_seed(task.job_seed, stream);
    return generate_synthetic(spec);
  }
  if (config.sequence_synthetic.has_value()) {
    SequenceSyntheticSpec spec = *config.sequence_synthetic;
    spec.seed = derive_seed(task.job_seed, stream);
    return generate_sequence_synthetic(spec);
  }
  fail(Errc::invalid_config, "no synthetic data source configured");
}

SubjectSplit load_subject_data(const SubjectTask& task,
                               const ExperimentConfig& config) {
  if (task.files != nullptr) {
    const RawRecording train = read_recording(task.files->train_path);
    const RawRecording test = read_recording(task.files->test_path);
    return make_split(train, test);
  }
  return make_split(generate_subject_recording(task, config, 0),
                    generate_subject_recording(task, config, 1));
}

CnnGruConfig resolve_model_config(const ExperimentConfig& config, int channels,
                                  std::uint64_t seed) {
  CnnGruConfig model = config.model;
  model.kind = config.method == Method::cnn_only ? ModelKind::cnn_only
                                                 : ModelKind::cnn_gru;
  model.channels = channels;
  model.bands = model.kind == ModelKind::cnn_gru ? config.grid.count : 1;
  model.seed = seed;
  return model;
}

SubjectResult run_nn_subject(const SubjectTask& task,
                             const ExperimentConfig& config) {
  const SubjectSplit split = load_subject_data(task, config);
  std::vector<FeatureTensor> train = extract_feature_tensors(split.train, config, 0);
  std::vector<FeatureTensor> test = extract_feature_tensors(
      split.test, config, static_cast<int>(train.size()));
  if (config.method == Method::cnn_only) {
    for (FeatureTensor& t : train) t = select_band(t, config.cnn_only_band);
    for (FeatureTensor& t : test) t = select_band(t, config.cnn_only_band);
  }
  const int channels = train.empty() ? 0 : train.front().channels();
  const CnnGruConfig model_config =
      resolve_model_config(config, channels, derive_seed(task.job_seed, kModelStream));

  const TrainedModel model = train_model(train, model_config);
  const EvalResult eval = evaluate_model(model, test);

  if (!config.out_dir.empty()) {
    const fs::path dir(config.out_dir);
    save_checkpoint((dir / (task.id + "_model.eegt")).string(), model);
    write_training_curve_csv((dir / (task.id + "_curve.csv")).string(),
                             model.training_curve);
  }

  SubjectResult result;
  result.id = task.id;
  result.accuracy = eval.accuracy;
  result.n_test = eval.n_total;
  result.n_correct = eval.n_correct;
  result.job_seed = task.job_seed;
  return result;
}

SubjectResult run_baseline_subject(const SubjectTask& task,
                                   const ExperimentConfig& config) {
  const SubjectSplit split = load_subject_data(task, config);
  const std::vector<EpochWindow> train = extract_epochs(split.train, config, 0);
  const std::vector<EpochWindow> test =
      extract_epochs(split.test, config, static_cast<int>(train.size()));

  std::vector<Eigen::MatrixXd> class1, class2;
  for (const EpochWindow& w : train) {
    (w.label == ClassLabel::left ? class1 : class2).push_back(w.samples);
  }
  const int delay = config.method == Method::cssp_lda ? config.cssp_delay : 0;
  const CspLdaModel model = fit_csp_lda(class1, class2, config.csp_pairs, delay);

  SubjectResult result;
  result.id = task.id;
  result.n_test = static_cast<int>(test.size());
  result.job_seed = task.job_seed;
  for (const EpochWindow& w : test) {
    const int predicted = predict_csp_lda(model, w.samples);
    const int truth = w.label == ClassLabel::left ? 0 : 1;
    if (predicted == truth) ++result.n_correct;
  }
  if (result.n_test == 0) fail(Errc::empty_dataset, "no evaluation trials");
  result.accuracy = static_cast<double>(result.n_correct) / result.n_test;

  if (!config.out_dir.empty()) {
    const fs::path dir(config.out_dir);
    save_csp_lda((dir / (task.id + "_csp_lda.eegt")).string(), model);
  }
  return result;
}

// Runs f(0..n-1) in batches of `jobs` async tasks, joining in a fixed order.
template <typename F>
void run_jobs(int jobs, int n, F&& f) {
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  for (int start = 0; start < n; start += jobs) {
    const int end = std::min(n, start + jobs);
    std::vector<std::future<void>> futures;
    futures.reserve(static_cast<std::size_t>(end - start));
    for (int i = start; i < end; ++i) {
      futures.push_back(std::async(std::launch::async, f, i));
    }
    for (auto& fut : futures) fut.get();
  }
}

void summarize(ResultReport* report) {
  const std::size_t n = report->subjects.size();
  if (n == 0) return;
  double sum = 0.0;
  for (const SubjectResult& s : report->subjects) sum += s.accuracy;
  report->mean = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (const SubjectResult& s : report->subjects) {
      const double d = s.accuracy - report->mean;
      ss += d * d;
    }
    report->stddev = std::sqrt(ss / static_cast<double>(n - 1));
  }
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) fail(Errc::io_error, "short write to '" + path + "'");
}

void write_run_outputs(const ExperimentConfig& config, const ResultReport& report,
                       bool ablation) {
  if (config.out_dir.empty()) return;
  const fs::path dir(config.out_dir);
  if (ablation) {
    write_ablation_csv((dir / "ablation_report.csv").string(), report);
  } else {
    write_report_csv((dir / "report.csv").string(), report);
  }
  nlohmann::json echo = canonical_config(config);
  echo["config_hash"] = report.config_digest;
  write_json((dir / "config_echo.json").string(), echo);

  nlohmann::json meta;
  meta["config_hash"] = report.config_digest;
  meta["method"] = report.method;
  meta["subjects"] = report.subjects.size();
  meta["mean_accuracy"] = report.mean;
  meta["wall_time_s"] = report.wall_time_s;
  write_json((dir / "run_meta.json").string(), meta);
}

std::string band_label(const WindowGrid& grid, int band) {
  const double start = grid.start_offset_s + band * grid.step_s;
  return fmt_compact(start) + "-" + fmt_compact(start + grid.window_len_s);
}

}  // namespace

ResultReport run_experiment(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!config.out_dir.empty()) fs::create_directories(config.out_dir);

  ResultReport report;
  report.method = method_name(config.method);
  report.config_digest = config_hash(config);
  report.master_seed = config.seed;

  const std::vector<SubjectTask> tasks = plan_subjects(config);
  report.subjects.resize(tasks.size());
  run_jobs(config.jobs, static_cast<int>(tasks.size()), [&](int i) {
    const SubjectTask& task = tasks[static_cast<std::size_t>(i)];
    log_info("subject " + task.id + ": starting " + report.method);
    SubjectResult result = is_cnn_method(config.method)
                               ? run_nn_subject(task, config)
                               : run_baseline_subject(task, config);
    log_info("subject " + task.id + ": accuracy " + fmt_compact(result.accuracy));
    report.subjects[static_cast<std::size_t>(i)] = std::move(result);
  });

  summarize(&report);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_run_outputs(config, report, /*ablation=*/false);
  return report;
}

ResultReport run_ablation_sweep(const ExperimentConfig& config) {
  if (config.method != Method::cnn_only) {
    fail(Errc::invalid_config, "the ablation sweep requires method cnn_only");
  }
  const auto t0 = std::chrono::steady_clock::now();
  if (!config.out_dir.empty()) fs::create_directories(config.out_dir);

  ResultReport report;
  report.method = method_name(config.method);
  report.config_digest = config_hash(config);
  report.master_seed = config.seed;

  const std::vector<SubjectTask> tasks = plan_subjects(config);
  const int bands = config.grid.count;
  report.band_labels.resize(static_cast<std::size_t>(bands));
  for (int b = 0; b < bands; ++b) {
    report.band_labels[static_cast<std::size_t>(b)] = band_label(config.grid, b);
  }
  report.band_accuracy.assign(
      static_cast<std::size_t>(bands),
      std::vector<double>(tasks.size(), 0.0));
  report.subjects.resize(tasks.size());

  run_jobs(config.jobs, static_cast<int>(tasks.size()), [&](int i) {
    const SubjectTask& task = tasks[static_cast<std::size_t>(i)];
    const SubjectSplit split = load_subject_data(task, config);
    const std::vector<FeatureTensor> train_full =
        extract_feature_tensors(split.train, config, 0);
    const std::vector<FeatureTensor> test_full = extract_feature_tensors(
        split.test, config, static_cast<int>(train_full.size()));
    const int channels = train_full.empty() ? 0 : train_full.front().channels();

    double acc_sum = 0.0;
    for (int b = 0; b < bands; ++b) {
      std::vector<FeatureTensor> train, test;
      train.reserve(train_full.size());
      test.reserve(test_full.size());
      for (const FeatureTensor& t : train_full) train.push_back(select_band(t, b));
      for (const FeatureTensor& t : test_full) test.push_back(select_band(t, b));

      CnnGruConfig model_config = resolve_model_config(
          config, channels,
          derive_seed(task.job_seed, kModelStream,
                      static_cast<std::uint64_t>(b)));
      const TrainedModel model = train_model(train, model_config);
      const EvalResult eval = evaluate_model(model, test);
      report.band_accuracy[static_cast<std::size_t>(b)]
                          [static_cast<std::size_t>(i)] = eval.accuracy;
      acc_sum += eval.accuracy;
      log_info("subject " + task.id + " band " + std::to_string(b) + " (" +
               report.band_labels[static_cast<std::size_t>(b)] + " s): accuracy " +
               fmt_compact(eval.accuracy));
    }
    SubjectResult& result = report.subjects[static_cast<std::size_t>(i)];
    result.id = task.id;
    result.accuracy = acc_sum / bands;
    result.job_seed = task.job_seed;
  });

  report.band_mean.assign(static_cast<std::size_t>(bands), 0.0);
  for (int b = 0; b < bands; ++b) {
    double sum = 0.0;
    for (double a : report.band_accuracy[static_cast<std::size_t>(b)]) sum += a;
    report.band_mean[static_cast<std::size_t>(b)] =
        sum / static_cast<double>(tasks.size());
  }
  summarize(&report);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_run_outputs(config, report, /*ablation=*/true);
  return report;
}

std::vector<std::string> write_synthetic_dataset(const ExperimentConfig& config,
                                                 const std::string& out_dir) {
  if (!config.synthetic.has_value() && !config.sequence_synthetic.has_value()) {
    fail(Errc::invalid_config,
         "synth needs a config with data.synthetic or data.sequence_synthetic");
  }
  if (out_dir.empty()) fail(Errc::invalid_config, "synth needs an output directory");
  fs::create_directories(out_dir);

  std::vector<std::string> written;
  for (const SubjectTask& task : plan_subjects(config)) {
    const fs::path dir(out_dir);
    const std::string train_path = (dir / (task.id + "_train.eegt")).string();
    const std::string test_path = (dir / (task.id + "_test.eegt")).string();
    write_recording(train_path, generate_subject_recording(task, config, 0));
    write_recording(test_path, generate_subject_recording(task, config, 1));
    written.push_back(train_path);
    written.push_back(test_path);
  }
  return written;
}

void write_report_csv(const std::string& path, const ResultReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot open '" + path + "' for writing");
  out << "mi_decode_report,v1\n";
  out << "method," << report.method << "\n";
  out << "config," << report.config_digest << "\n";
  out << "master_seed," << report.master_seed << "\n";
  out << "subject,accuracy,n_test,n_correct,job_seed\n";
  for (const SubjectResult& s : report.subjects) {
    out << s.id << "," << fmt_double(s.accuracy) << "," << s.n_test << ","
        << s.n_correct << "," << s.job_seed << "\n";
  }
  out << "summary,mean," << fmt_double(report.mean) << "\n";
  out << "summary,stddev," << fmt_double(report.stddev) << "\n";
  if (!out) fail(Errc::io_error, "short write to '" + path + "'");
}

void write_ablation_csv(const std::string& path, const ResultReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot open '" + path + "' for writing");
  out << "mi_decode_ablation,v1\n";
  out << "method," << report.method << "\n";
  out << "config," << report.config_digest << "\n";
  out << "master_seed," << report.master_seed << "\n";
  out << "band,label";
  for (const SubjectResult& s : report.subjects) out << "," << s.id;
  out << ",mean\n";
  for (std::size_t b = 0; b < report.band_accuracy.size(); ++b) {
    out << b << "," << report.band_labels[b];
    for (double a : report.band_accuracy[b]) out << "," << fmt_double(a);
    out << "," << fmt_double(report.band_mean[b]) << "\n";
  }
  if (!out) fail(Errc::io_error, "short write to '" + path + "'");
}

}  // namespace mi
