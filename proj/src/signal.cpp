#include "mi/signal.hpp"

#include <cmath>
#include <complex>
#include <cstdlib>
#include <string>
#include <utility>

#include "mi/errors.hpp"

namespace mi {

namespace {

using cd = std::complex<double>;

// Expands a monic polynomial from its roots: prod_i (z - r_i).
// Coefficients are returned highest power first, length roots.size() + 1.
std::vector<cd> poly_from_roots(const std::vector<cd>& roots) {
  std::vector<cd> c{cd(1.0, 0.0)};
  for (const cd& r : roots) {
    std::vector<cd> next(c.size() + 1, cd(0.0, 0.0));
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= c[i] * r;
    }
    c = std::move(next);
  }
  return c;
}

std::vector<double> realify(const std::vector<cd>& c, double scale_hint) {
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (std::abs(c[i].imag()) > 1e-8 * (std::abs(scale_hint) + 1.0)) {
      fail(Errc::numerical_instability,
           "polynomial expansion produced a non-real coefficient");
    }
    out[i] = c[i].real();
  }
  return out;
}

}  // namespace

FilterCoefficients design_bandpass(const BandSpec& band, double fs) {
  if (!(fs > 0.0)) fail(Errc::invalid_band, "sampling rate must be positive");
  if (!(band.low_hz > 0.0)) {
    fail(Errc::invalid_band, "low edge must be positive, got " +
                                 std::to_string(band.low_hz));
  }
  if (!(band.high_hz > band.low_hz)) {
    fail(Errc::invalid_band, "band edges must satisfy low < high");
  }
  if (!(band.high_hz < 0.5 * fs)) {
    fail(Errc::invalid_band, "high edge " + std::to_string(band.high_hz) +
                                 " violates the Nyquist limit " +
                                 std::to_string(0.5 * fs));
  }
  if (band.order < 2 || band.order % 2 != 0) {
    fail(Errc::invalid_band,
         "filter order must be an even integer >= 2, got " +
             std::to_string(band.order));
  }

  const int n = band.order;

  // Analog Butterworth lowpass prototype: n poles on the unit circle in the
  // left half-plane, unit cutoff, no finite zeros.
  std::vector<cd> proto;
  proto.reserve(n);
  for (int k = 1; k <= n; ++k) {
    const double theta = M_PI * (2.0 * k + n - 1.0) / (2.0 * n);
    proto.emplace_back(std::cos(theta), std::sin(theta));
  }

  // Pre-warp the band edges so the bilinear transform lands them exactly.
  const double fs2 = 2.0 * fs;
  const double w1 = fs2 * std::tan(M_PI * band.low_hz / fs);
  const double w2 = fs2 * std::tan(M_PI * band.high_hz / fs);
  const double bw = w2 - w1;
  const double w0 = std::sqrt(w1 * w2);

  // Lowpass -> bandpass: each prototype pole splits into a pair; the n
  // transformed zeros sit at s = 0 and the gain picks up bw^n.
  std::vector<cd> apoles;
  apoles.reserve(2 * n);
  for (const cd& p : proto) {
    const cd ps = p * (0.5 * bw);
    const cd disc = std::sqrt(ps * ps - cd(w0 * w0, 0.0));
    apoles.push_back(ps + disc);
    apoles.push_back(ps - disc);
  }
  const double gain_analog = std::pow(bw, n);

  // Bilinear transform z = (2fs + s) / (2fs - s). Analog zeros at the origin
  // map to z = +1; the n-fold degree deficit contributes zeros at z = -1.
  std::vector<cd> zpoles(apoles.size());
  cd denom(1.0, 0.0);
  for (std::size_t i = 0; i < apoles.size(); ++i) {
    zpoles[i] = (cd(fs2, 0.0) + apoles[i]) / (cd(fs2, 0.0) - apoles[i]);
    denom *= cd(fs2, 0.0) - apoles[i];
  }
  const cd gain_z = cd(gain_analog * std::pow(fs2, n), 0.0) / denom;

  for (const cd& p : zpoles) {
    if (std::abs(p) >= 1.0 - 1e-10) {
      fail(Errc::numerical_instability,
           "digital pole magnitude " + std::to_string(std::abs(p)) +
               " reaches the unit circle; band (" + std::to_string(band.low_hz) +
               ", " + std::to_string(band.high_hz) + ") Hz at fs " +
               std::to_string(fs) + " is not realizable at this order");
    }
  }

  std::vector<cd> zzeros;
  zzeros.reserve(2 * n);
  for (int i = 0; i < n; ++i) {
    zzeros.emplace_back(1.0, 0.0);
    zzeros.emplace_back(-1.0, 0.0);
  }

  const std::vector<cd> bpoly = poly_from_roots(zzeros);
  const std::vector<cd> apoly = poly_from_roots(zpoles);

  FilterCoefficients out;
  out.a = realify(apoly, 1.0);
  out.b.resize(bpoly.size());
  const double k = gain_z.real();
  if (std::abs(gain_z.imag()) > 1e-8 * (std::abs(k) + 1.0)) {
    fail(Errc::numerical_instability, "filter gain is not real");
  }
  for (std::size_t i = 0; i < bpoly.size(); ++i) {
    if (std::abs(bpoly[i].imag()) > 1e-8) {
      fail(Errc::numerical_instability, "numerator coefficient is not real");
    }
    out.b[i] = k * bpoly[i].real();
  }
  return out;
}

Eigen::VectorXd lfilter(const FilterCoefficients& coeffs,
                        const Eigen::VectorXd& x) {
  if (coeffs.b.empty() || coeffs.a.empty()) {
    fail(Errc::shape_mismatch, "filter coefficients must be non-empty");
  }
  if (coeffs.a[0] == 0.0) {
    fail(Errc::numerical_instability, "a[0] must be non-zero");
  }
  const std::size_t order = std::max(coeffs.b.size(), coeffs.a.size()) - 1;
  std::vector<double> b(order + 1, 0.0);
  std::vector<double> a(order + 1, 0.0);
  for (std::size_t i = 0; i < coeffs.b.size(); ++i) b[i] = coeffs.b[i] / coeffs.a[0];
  for (std::size_t i = 0; i < coeffs.a.size(); ++i) a[i] = coeffs.a[i] / coeffs.a[0];

  // Direct form II transposed with zero initial conditions.
  std::vector<double> w(order, 0.0);
  Eigen::VectorXd y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double yi = b[0] * xi + (order > 0 ? w[0] : 0.0);
    for (std::size_t j = 0; j < order; ++j) {
      const double carry = (j + 1 < order) ? w[j + 1] : 0.0;
      w[j] = b[j + 1] * xi + carry - a[j + 1] * yi;
    }
    y[i] = yi;
  }
  return y;
}

Eigen::VectorXd filtfilt(const FilterCoefficients& coeffs,
                         const Eigen::VectorXd& x) {
  const Eigen::VectorXd fwd = lfilter(coeffs, x);
  const Eigen::VectorXd bwd = lfilter(coeffs, fwd.reverse());
  return bwd.reverse();
}

RawRecording apply_filter(const RawRecording& x,
                          const FilterCoefficients& coeffs) {
  RawRecording out = x;
  for (int c = 0; c < x.channels(); ++c) {
    out.samples.row(c) = filtfilt(coeffs, x.samples.row(c).transpose()).transpose();
  }
  return out;
}

Eigen::MatrixXd local_average_reference(const Eigen::MatrixXd& epoch,
                                        int ref_channel) {
  const int channels = static_cast<int>(epoch.rows());
  if (channels < 2) {
    fail(Errc::shape_mismatch, "local average reference needs >= 2 channels");
  }
  if (ref_channel < 0 || ref_channel >= channels) {
    fail(Errc::out_of_range, "reference channel " + std::to_string(ref_channel) +
                                 " outside [0, " + std::to_string(channels) + ")");
  }
  const Eigen::RowVectorXd ref_row = epoch.row(ref_channel);
  Eigen::MatrixXd y = epoch.rowwise() - ref_row;
  const Eigen::RowVectorXd channel_mean = y.colwise().mean();
  y.rowwise() -= channel_mean;
  return y;
}

std::vector<std::vector<EpochWindow>> segment(const RawRecording& x,
                                              const WindowGrid& grid,
                                              int trial_id_offset) {
  if (grid.count < 1) {
    fail(Errc::invalid_config, "window grid needs count >= 1");
  }
  if (!(grid.window_len_s > 0.0)) {
    fail(Errc::invalid_config, "window length must be positive");
  }
  if (grid.count > 1 && !(grid.step_s > 0.0)) {
    fail(Errc::invalid_config, "window step must be positive");
  }
  if (!(x.fs > 0.0)) {
    fail(Errc::invalid_config, "recording sampling rate must be positive");
  }
  const std::int64_t win_len = std::llround(grid.window_len_s * x.fs);
  if (win_len < 2) {
    fail(Errc::degenerate_window, "window shorter than two samples");
  }

  std::vector<std::vector<EpochWindow>> out;
  out.reserve(x.events.size());
  for (std::size_t e = 0; e < x.events.size(); ++e) {
    const CueEvent& ev = x.events[e];
    std::vector<EpochWindow> windows;
    windows.reserve(grid.count);
    for (int b = 0; b < grid.count; ++b) {
      const std::int64_t start =
          ev.onset_sample +
          std::llround((grid.start_offset_s + b * grid.step_s) * x.fs);
      if (start < 0 || start + win_len > x.n_samples()) {
        fail(Errc::out_of_range,
             "window " + std::to_string(b) + " of trial " + std::to_string(e) +
                 " spans [" + std::to_string(start) + ", " +
                 std::to_string(start + win_len) + ") outside the recording of " +
                 std::to_string(x.n_samples()) + " samples");
      }
      EpochWindow w;
      w.samples = x.samples.middleCols(start, win_len);
      if (!w.samples.allFinite()) {
        fail(Errc::numerical_instability,
             "non-finite sample inside window " + std::to_string(b) +
                 " of trial " + std::to_string(e));
      }
      w.band_index = b;
      w.trial_id = trial_id_offset + static_cast<int>(e);
      w.label = ev.label;
      windows.push_back(std::move(w));
    }
    out.push_back(std::move(windows));
  }
  return out;
}

}  // namespace mi
