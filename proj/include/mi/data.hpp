#pragma once

#include <cstdint>
#include <vector>

#include "mi/recording.hpp"
#include "mi/signal.hpp"

namespace mi {

struct SubjectSplit {
  RawRecording train;
  RawRecording test;
};

// Training session -> train half, evaluation session -> test half. Only Left
// and Right cues are kept; dropped cues are counted in the log, and a class
// imbalance inside either half logs a warning (non-fatal).
SubjectSplit make_split(const RawRecording& train_session,
                        const RawRecording& test_session);

// Synthetic sensorimotor-rhythm recording: 1-40 Hz Gaussian background noise
// plus a mu oscillation on the ERD channels whose amplitude drops by
// (1 - erd_depth) on the contralateral set during each trial's MI period.
// Trials are laid out back to back, cue at kSyntheticCueLatencyS into each
// trial, MI period from the cue to the trial end. Channel 0 is labeled "Cz".
struct SyntheticSpec {
  int n_trials_per_class = 20;
  double fs = 250.0;
  int channels = 8;
  double trial_len_s = 6.0;
  double mu_freq_hz = 10.0;
  double erd_depth = 0.8;  // in [0, 1]
  std::vector<int> erd_channels_left;   // attenuated during Left trials
  std::vector<int> erd_channels_right;  // attenuated during Right trials
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;
};

inline constexpr double kSyntheticCueLatencyS = 2.0;

RawRecording generate_synthetic(const SyntheticSpec& spec);

// Order-only synthetic set: every trial plays mu bursts on one of two spatial
// patterns per segment. Left trials alternate the pattern each segment, Right
// trials hold a (randomly chosen) pattern for the whole trial, so per-segment
// statistics match across classes and only the temporal ordering differs.
struct SequenceSyntheticSpec {
  int n_trials_per_class = 20;
  double fs = 250.0;
  int channels = 6;
  int n_segments = 6;  // T of the matching window grid
  double segment_len_s = 0.5;
  double mu_freq_hz = 10.0;
  std::vector<int> pattern_a;
  std::vector<int> pattern_b;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
};

RawRecording generate_sequence_synthetic(const SequenceSyntheticSpec& spec);

// Non-overlapping grid aligned with the generator's segments.
WindowGrid sequence_grid(const SequenceSyntheticSpec& spec);

}  // namespace mi
