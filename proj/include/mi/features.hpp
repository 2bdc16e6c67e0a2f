#pragma once

#include <Eigen/Core>
#include <vector>

#include "mi/signal.hpp"

namespace mi {

// Trace-normalized sample covariance of one window: symmetric, PSD,
// trace == C.
struct NscmMatrix {
  Eigen::MatrixXd values;
  int band_index = 0;
};

// C x C x T stack of per-band NSCM matrices for one trial.
struct FeatureTensor {
  std::vector<Eigen::MatrixXd> slices;  // T matrices, each C x C
  int trial_id = 0;
  ClassLabel label = ClassLabel::other;

  int channels() const {
    return slices.empty() ? 0 : static_cast<int>(slices.front().rows());
  }
  int bands() const { return static_cast<int>(slices.size()); }
};

// M = C * (X X^T) / trace(X X^T) with per-window row means removed first.
// Throws degenerate_window when trace(X X^T) < 1e-300.
NscmMatrix nscm(const EpochWindow& window);

// Stacks the T windows of one trial, which must arrive sorted by band_index
// and complete 0..T-1. Throws missing_band / shape_mismatch.
FeatureTensor build_feature_tensor(const std::vector<EpochWindow>& windows);

}  // namespace mi
