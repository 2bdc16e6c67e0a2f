#pragma once

#include <Eigen/Core>
#include <vector>

#include "mi/recording.hpp"

namespace mi {

// Bandpass specification. `order` is the analog Butterworth prototype order
// per pass; the resulting digital bandpass has 2*order poles. Must be even
// and >= 2.
struct BandSpec {
  double low_hz = 0.0;
  double high_hz = 0.0;
  int order = 4;
};

// b/a coefficients of a digital IIR filter, a[0] == 1.
struct FilterCoefficients {
  std::vector<double> b;
  std::vector<double> a;
};

// Cue-locked sliding-window grid. Window b spans
// [cue + start_offset_s + b*step_s, ... + window_len_s), b in [0, count).
struct WindowGrid {
  double start_offset_s = 0.0;
  double window_len_s = 0.0;
  double step_s = 0.0;
  int count = 0;
};

// One segmented, referenced, filtered C x S block for one trial and one
// temporal band.
struct EpochWindow {
  Eigen::MatrixXd samples;
  int band_index = 0;
  int trial_id = 0;
  ClassLabel label = ClassLabel::other;
};

// Butterworth bandpass via bilinear transform with pre-warped edges.
// Throws invalid_band when edges violate Nyquist or the order is invalid,
// numerical_instability when any pole magnitude reaches 1 - 1e-10.
FilterCoefficients design_bandpass(const BandSpec& band, double fs);

// Single-pass direct form II transposed, zero initial conditions.
Eigen::VectorXd lfilter(const FilterCoefficients& coeffs,
                        const Eigen::VectorXd& x);

// Forward-backward (zero phase) filtering; output length equals input length.
Eigen::VectorXd filtfilt(const FilterCoefficients& coeffs,
                         const Eigen::VectorXd& x);

// Applies filtfilt to every channel independently.
RawRecording apply_filter(const RawRecording& x, const FilterCoefficients& coeffs);

// Cz re-referencing followed by common-average subtraction. After this the
// mean across channels is zero at every timepoint, and the operation is
// idempotent.
Eigen::MatrixXd local_average_reference(const Eigen::MatrixXd& epoch,
                                        int ref_channel);

// Cue-locked segmentation: returns, per trial, the `count` windows of the
// grid in band order. trial_id runs from trial_id_offset upward in event
// order. Throws out_of_range when a window exceeds the recording.
std::vector<std::vector<EpochWindow>> segment(const RawRecording& x,
                                              const WindowGrid& grid,
                                              int trial_id_offset = 0);

}  // namespace mi
