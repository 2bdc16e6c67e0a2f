#include "mi/recording.hpp"

#include "mi/errors.hpp"

namespace mi {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_band: return "invalid_band";
    case Errc::numerical_instability: return "numerical_instability";
    case Errc::out_of_range: return "out_of_range";
    case Errc::degenerate_window: return "degenerate_window";
    case Errc::missing_band: return "missing_band";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::invalid_probability: return "invalid_probability";
    case Errc::graph_consumed: return "graph_consumed";
    case Errc::non_finite_loss: return "non_finite_loss";
    case Errc::empty_dataset: return "empty_dataset";
    case Errc::singular_covariance: return "singular_covariance";
    case Errc::bad_magic: return "bad_magic";
    case Errc::version_unsupported: return "version_unsupported";
    case Errc::truncated_payload: return "truncated_payload";
    case Errc::malformed_header: return "malformed_header";
    case Errc::missing_session: return "missing_session";
    case Errc::invalid_config: return "invalid_config";
    case Errc::io_error: return "io_error";
  }
  return "unknown";
}

const char* class_label_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::left: return "left";
    case ClassLabel::right: return "right";
    case ClassLabel::other: return "other";
  }
  return "other";
}

ClassLabel class_label_from_string(const std::string& s) {
  if (s == "left") return ClassLabel::left;
  if (s == "right") return ClassLabel::right;
  if (s == "other") return ClassLabel::other;
  fail(Errc::malformed_header, "unknown class label '" + s + "'");
}

int RawRecording::channel_index(const std::string& label) const {
  for (std::size_t i = 0; i < channel_labels.size(); ++i) {
    if (channel_labels[i] == label) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace mi
