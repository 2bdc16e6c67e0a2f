#include "mi/features.hpp"

#include <string>

#include "mi/errors.hpp"

namespace mi {

NscmMatrix nscm(const EpochWindow& window) {
  const Eigen::MatrixXd& x = window.samples;
  const int channels = static_cast<int>(x.rows());
  if (channels < 1 || x.cols() < 2) {
    fail(Errc::shape_mismatch,
         "covariance needs >= 1 channel and >= 2 samples, got " +
             std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
  const Eigen::VectorXd row_mean = x.rowwise().mean();
  const Eigen::MatrixXd centered = x.colwise() - row_mean;
  Eigen::MatrixXd gram = centered * centered.transpose();
  // Enforce exact symmetry so downstream symmetry checks see zero residual.
  gram = 0.5 * (gram + gram.transpose()).eval();
  const double trace = gram.trace();
  if (!(trace >= 1e-300)) {
    fail(Errc::degenerate_window,
         "window is constant or all-zero (covariance trace " +
             std::to_string(trace) + ")");
  }
  NscmMatrix out;
  out.values = (static_cast<double>(channels) / trace) * gram;
  out.band_index = window.band_index;
  return out;
}

FeatureTensor build_feature_tensor(const std::vector<EpochWindow>& windows) {
  if (windows.empty()) {
    fail(Errc::missing_band, "feature tensor needs at least one window");
  }
  const int channels = static_cast<int>(windows.front().samples.rows());
  const int trial_id = windows.front().trial_id;
  FeatureTensor out;
  out.trial_id = trial_id;
  out.label = windows.front().label;
  out.slices.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const EpochWindow& w = windows[i];
    if (w.band_index != static_cast<int>(i)) {
      fail(Errc::missing_band,
           "expected band " + std::to_string(i) + " at position " +
               std::to_string(i) + ", got " + std::to_string(w.band_index));
    }
    if (static_cast<int>(w.samples.rows()) != channels) {
      fail(Errc::shape_mismatch, "windows of one trial disagree on channel count");
    }
    if (w.trial_id != trial_id) {
      fail(Errc::shape_mismatch, "windows mix trials " + std::to_string(trial_id) +
                                     " and " + std::to_string(w.trial_id));
    }
    out.slices.push_back(nscm(w).values);
  }
  return out;
}

}  // namespace mi
