#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace mi {

enum class ClassLabel { left = 0, right = 1, other = 2 };

const char* class_label_name(ClassLabel label);
ClassLabel class_label_from_string(const std::string& s);

struct CueEvent {
  std::int64_t onset_sample = 0;
  ClassLabel label = ClassLabel::other;
};

// Continuous multichannel EEG. Rows are channels, columns are samples.
struct RawRecording {
  Eigen::MatrixXd samples;
  double fs = 0.0;
  std::vector<std::string> channel_labels;
  std::vector<CueEvent> events;

  int channels() const { return static_cast<int>(samples.rows()); }
  std::int64_t n_samples() const { return samples.cols(); }

  // Index of the first channel with this label, or -1.
  int channel_index(const std::string& label) const;
};

}  // namespace mi
