#include "mi/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mi/errors.hpp"
#include "mi/log.hpp"
#include "mi/rng.hpp"

namespace mi {

namespace {

RawRecording keep_hand_cues(const RawRecording& rec, const char* which,
                            int* dropped_total) {
  RawRecording out = rec;
  out.events.clear();
  int n_left = 0;
  int n_right = 0;
  int dropped = 0;
  for (const CueEvent& ev : rec.events) {
    if (ev.label == ClassLabel::left) {
      ++n_left;
      out.events.push_back(ev);
    } else if (ev.label == ClassLabel::right) {
      ++n_right;
      out.events.push_back(ev);
    } else {
      ++dropped;
    }
  }
  *dropped_total += dropped;
  if (n_left + n_right == 0) {
    fail(Errc::missing_session,
         std::string(which) + " session has no left/right cues");
  }
  if (n_left != n_right) {
    log_warn(std::string(which) + " session is class-imbalanced: " +
             std::to_string(n_left) + " left vs " + std::to_string(n_right) +
             " right");
  }
  return out;
}

// Adds white Gaussian noise band-limited to 1-40 Hz to every channel.
void add_background_noise(Eigen::MatrixXd& samples, double fs, double sigma,
                          Rng& rng) {
  if (sigma <= 0.0) return;
  const FilterCoefficients noise_band = design_bandpass({1.0, 40.0, 4}, fs);
  Eigen::VectorXd white(samples.cols());
  for (Eigen::Index ch = 0; ch < samples.rows(); ++ch) {
    for (Eigen::Index t = 0; t < samples.cols(); ++t) {
      white[t] = sigma * rng.normal();
    }
    samples.row(ch) += filtfilt(noise_band, white).transpose();
  }
}

void check_channel_set(const std::vector<int>& set, int channels,
                       const char* name) {
  if (set.empty()) {
    fail(Errc::invalid_config, std::string(name) + " must not be empty");
  }
  for (int ch : set) {
    if (ch < 0 || ch >= channels) {
      fail(Errc::invalid_config, std::string(name) + " contains channel " +
                                     std::to_string(ch) + " outside [0, " +
                                     std::to_string(channels) + ")");
    }
  }
}

std::vector<std::string> synthetic_channel_labels(int channels) {
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(channels));
  labels.push_back("Cz");
  for (int ch = 1; ch < channels; ++ch) {
    labels.push_back("C" + std::to_string(ch));
  }
  return labels;
}

}  // namespace

SubjectSplit make_split(const RawRecording& train_session,
                        const RawRecording& test_session) {
  if (train_session.channels() != test_session.channels()) {
    fail(Errc::shape_mismatch, "sessions disagree on channel count");
  }
  if (train_session.fs != test_session.fs) {
    fail(Errc::shape_mismatch, "sessions disagree on sampling rate");
  }
  int dropped = 0;
  SubjectSplit split;
  split.train = keep_hand_cues(train_session, "training", &dropped);
  split.test = keep_hand_cues(test_session, "evaluation", &dropped);
  if (dropped > 0) {
    log_info("dropped " + std::to_string(dropped) +
             " cue(s) with non left/right labels");
  }
  return split;
}

RawRecording generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_trials_per_class < 1) {
    fail(Errc::invalid_config, "n_trials_per_class must be >= 1");
  }
  if (!(spec.fs > 0.0)) fail(Errc::invalid_config, "fs must be positive");
  if (spec.channels < 2) fail(Errc::invalid_config, "channels must be >= 2");
  if (!(spec.trial_len_s > kSyntheticCueLatencyS)) {
    fail(Errc::invalid_config, "trial_len_s must exceed the cue latency of " +
                                   std::to_string(kSyntheticCueLatencyS) + " s");
  }
  if (!(spec.erd_depth >= 0.0) || !(spec.erd_depth <= 1.0)) {
    fail(Errc::invalid_config, "erd_depth must lie in [0, 1]");
  }
  if (!(spec.mu_freq_hz > 0.0) || !(spec.mu_freq_hz < 0.5 * spec.fs)) {
    fail(Errc::invalid_config, "mu_freq_hz must lie in (0, fs/2)");
  }
  check_channel_set(spec.erd_channels_left, spec.channels, "erd_channels_left");
  check_channel_set(spec.erd_channels_right, spec.channels, "erd_channels_right");

  const std::int64_t trial_len = std::llround(spec.trial_len_s * spec.fs);
  const std::int64_t cue_offset = std::llround(kSyntheticCueLatencyS * spec.fs);
  const int n_trials = 2 * spec.n_trials_per_class;
  const std::int64_t total = static_cast<std::int64_t>(n_trials) * trial_len;

  RawRecording rec;
  rec.fs = spec.fs;
  rec.channel_labels = synthetic_channel_labels(spec.channels);
  rec.samples = Eigen::MatrixXd::Zero(spec.channels, total);

  Rng rng(spec.seed);
  add_background_noise(rec.samples, spec.fs, spec.noise_sigma, rng);

  // The mu rhythm runs on both ERD channel sets during every MI period; the
  // set contralateral to the imagined hand is attenuated by (1 - erd_depth).
  for (int trial = 0; trial < n_trials; ++trial) {
    const ClassLabel label = trial % 2 == 0 ? ClassLabel::left : ClassLabel::right;
    const std::int64_t trial_start = static_cast<std::int64_t>(trial) * trial_len;
    const std::int64_t cue = trial_start + cue_offset;
    rec.events.push_back({cue, label});

    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const std::vector<int>& attenuated = label == ClassLabel::left
                                             ? spec.erd_channels_left
                                             : spec.erd_channels_right;
    const std::vector<int>& full = label == ClassLabel::left
                                       ? spec.erd_channels_right
                                       : spec.erd_channels_left;
    const double attenuated_amp = 1.0 - spec.erd_depth;
    for (std::int64_t t = cue; t < trial_start + trial_len; ++t) {
      const double osc = std::sin(
          2.0 * M_PI * spec.mu_freq_hz * static_cast<double>(t - cue) / spec.fs +
          phase);
      for (int ch : attenuated) rec.samples(ch, t) += attenuated_amp * osc;
      for (int ch : full) rec.samples(ch, t) += osc;
    }
  }
  return rec;
}

RawRecording generate_sequence_synthetic(const SequenceSyntheticSpec& spec) {
  if (spec.n_trials_per_class < 1) {
    fail(Errc::invalid_config, "n_trials_per_class must be >= 1");
  }
  if (!(spec.fs > 0.0)) fail(Errc::invalid_config, "fs must be positive");
  if (spec.channels < 2) fail(Errc::invalid_config, "channels must be >= 2");
  if (spec.n_segments < 2) {
    fail(Errc::invalid_config, "n_segments must be >= 2 to carry any ordering");
  }
  if (!(spec.segment_len_s > 0.0)) {
    fail(Errc::invalid_config, "segment_len_s must be positive");
  }
  check_channel_set(spec.pattern_a, spec.channels, "pattern_a");
  check_channel_set(spec.pattern_b, spec.channels, "pattern_b");
  for (int ch : spec.pattern_a) {
    for (int other : spec.pattern_b) {
      if (ch == other) {
        fail(Errc::invalid_config,
             "pattern_a and pattern_b must be disjoint channel sets");
      }
    }
  }

  const double pad_s = 0.5;
  const std::int64_t pad = std::llround(pad_s * spec.fs);
  const std::int64_t seg_len = std::llround(spec.segment_len_s * spec.fs);
  if (seg_len < 2) fail(Errc::invalid_config, "segments shorter than two samples");
  const std::int64_t trial_len = 2 * pad + spec.n_segments * seg_len;
  const int n_trials = 2 * spec.n_trials_per_class;
  const std::int64_t total = static_cast<std::int64_t>(n_trials) * trial_len;

  RawRecording rec;
  rec.fs = spec.fs;
  rec.channel_labels = synthetic_channel_labels(spec.channels);
  rec.samples = Eigen::MatrixXd::Zero(spec.channels, total);

  Rng rng(spec.seed);
  add_background_noise(rec.samples, spec.fs, spec.noise_sigma, rng);

  // Left trials alternate the active pattern each segment (random starting
  // pattern); Right trials hold one random pattern. Per-segment marginals are
  // identical across classes, so only the ordering separates them.
  for (int trial = 0; trial < n_trials; ++trial) {
    const ClassLabel label = trial % 2 == 0 ? ClassLabel::left : ClassLabel::right;
    const std::int64_t trial_start = static_cast<std::int64_t>(trial) * trial_len;
    const std::int64_t cue = trial_start + pad;
    rec.events.push_back({cue, label});

    const bool start_with_a = rng.bernoulli(0.5);
    for (int seg = 0; seg < spec.n_segments; ++seg) {
      const bool use_a = label == ClassLabel::left
                             ? (seg % 2 == 0 ? start_with_a : !start_with_a)
                             : start_with_a;
      const std::vector<int>& active = use_a ? spec.pattern_a : spec.pattern_b;
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      const std::int64_t seg_start = cue + static_cast<std::int64_t>(seg) * seg_len;
      for (std::int64_t t = seg_start; t < seg_start + seg_len; ++t) {
        const double osc = std::sin(2.0 * M_PI * spec.mu_freq_hz *
                                        static_cast<double>(t - seg_start) /
                                        spec.fs +
                                    phase);
        for (int ch : active) rec.samples(ch, t) += osc;
      }
    }
  }
  return rec;
}

WindowGrid sequence_grid(const SequenceSyntheticSpec& spec) {
  WindowGrid grid;
  grid.start_offset_s = 0.0;
  grid.window_len_s = spec.segment_len_s;
  grid.step_s = spec.segment_len_s;
  grid.count = spec.n_segments;
  return grid;
}

}  // namespace mi
