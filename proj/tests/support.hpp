#pragma once

// Test-side oracles, implemented independently of the library under test:
// frequency responses are evaluated directly from coefficients, pole locations
// come from a companion matrix, gradients from central finite differences,
// covariances from naive loops, generalized eigenpairs from a hand-rolled
// Cholesky-whitening + Jacobi solver, and band powers from a Welch estimate.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <vector>

#include "mi/nn.hpp"
#include "mi/recording.hpp"
#include "mi/rng.hpp"
#include "mi/signal.hpp"

namespace oracle {

// |H(e^{j 2 pi f / fs})| evaluated directly from the coefficient arrays.
inline double freq_response_mag(const mi::FilterCoefficients& c, double f,
                                double fs) {
  const std::complex<double> j(0.0, 1.0);
  const double w = 2.0 * M_PI * f / fs;
  std::complex<double> num(0.0, 0.0), den(0.0, 0.0);
  for (std::size_t k = 0; k < c.b.size(); ++k) {
    num += c.b[k] * std::exp(-j * (w * static_cast<double>(k)));
  }
  for (std::size_t k = 0; k < c.a.size(); ++k) {
    den += c.a[k] * std::exp(-j * (w * static_cast<double>(k)));
  }
  return std::abs(num / den);
}

// Magnitudes of the denominator roots via the companion matrix.
inline std::vector<double> pole_magnitudes(const std::vector<double>& a) {
  const int n = static_cast<int>(a.size()) - 1;
  if (n < 1) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) companion(0, i) = -a[static_cast<std::size_t>(i + 1)] / a[0];
  for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<double> mags;
  for (int i = 0; i < n; ++i) mags.push_back(std::abs(solver.eigenvalues()[i]));
  return mags;
}

inline double rms(const Eigen::VectorXd& x) {
  return std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

// Phase (radians) of a sinusoidal signal at frequency f, by projection onto
// the quadrature pair. Zero for sin(2 pi f t / fs).
inline double phase_at(const Eigen::VectorXd& x, double f, double fs) {
  double s = 0.0, c = 0.0;
  for (Eigen::Index t = 0; t < x.size(); ++t) {
    const double w = 2.0 * M_PI * f * static_cast<double>(t) / fs;
    s += x[t] * std::sin(w);
    c += x[t] * std::cos(w);
  }
  return std::atan2(c, s);
}

// Naive two-loop sample covariance with row-mean removal (no normalization).
inline Eigen::MatrixXd naive_covariance(const Eigen::MatrixXd& x) {
  const Eigen::Index channels = x.rows();
  const Eigen::Index samples = x.cols();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(channels, channels);
  std::vector<double> mean(static_cast<std::size_t>(channels), 0.0);
  for (Eigen::Index i = 0; i < channels; ++i) {
    for (Eigen::Index t = 0; t < samples; ++t) mean[static_cast<std::size_t>(i)] += x(i, t);
    mean[static_cast<std::size_t>(i)] /= static_cast<double>(samples);
  }
  for (Eigen::Index i = 0; i < channels; ++i) {
    for (Eigen::Index k = 0; k < channels; ++k) {
      double acc = 0.0;
      for (Eigen::Index t = 0; t < samples; ++t) {
        acc += (x(i, t) - mean[static_cast<std::size_t>(i)]) *
               (x(k, t) - mean[static_cast<std::size_t>(k)]);
      }
      cov(i, k) = acc;
    }
  }
  return cov;
}

// Max relative error between the analytic gradients already accumulated in
// params' .g buffers and central finite differences of loss_fn.
template <typename LossFn>
double max_grad_rel_error(const std::vector<mi::nn::Tensor*>& params,
                          LossFn&& loss_fn, double step, double floor) {
  double worst = 0.0;
  for (mi::nn::Tensor* t : params) {
    for (std::size_t i = 0; i < t->v.size(); ++i) {
      const double keep = t->v[i];
      t->v[i] = keep + step;
      const double up = loss_fn();
      t->v[i] = keep - step;
      const double down = loss_fn();
      t->v[i] = keep;
      const double fd = (up - down) / (2.0 * step);
      const double an = t->g[i];
      const double denom = std::max({std::abs(fd), std::abs(an), floor});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

struct GenEig {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns, w^T B w = 1, first large entry positive
};

inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

// Cyclic Jacobi sweeps; fine for the tiny matrices the oracle handles.
inline void jacobi_eig(Eigen::MatrixXd a, Eigen::VectorXd* values,
                       Eigen::MatrixXd* vectors) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double phi = 0.5 * std::atan2(2.0 * a(p, q), a(q, q) - a(p, p));
        Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(n, n);
        rot(p, p) = std::cos(phi);
        rot(q, q) = std::cos(phi);
        rot(p, q) = std::sin(phi);
        rot(q, p) = -std::sin(phi);
        a = rot.transpose() * a * rot;
        v = v * rot;
      }
    }
  }
  *values = a.diagonal();
  *vectors = v;
}

// Solves A w = lambda B w for symmetric A and SPD B by whitening with a
// hand-rolled Cholesky factor and diagonalizing with Jacobi rotations.
inline GenEig brute_force_gen_eig(const Eigen::MatrixXd& a,
                                  const Eigen::MatrixXd& b) {
  const Eigen::Index n = a.rows();
  const Eigen::MatrixXd l = cholesky_lower(b);
  const Eigen::MatrixXd linv = l.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd white = linv * a * linv.transpose();
  Eigen::VectorXd values;
  Eigen::MatrixXd u;
  jacobi_eig(0.5 * (white + white.transpose()), &values, &u);
  Eigen::MatrixXd vectors = linv.transpose() * u;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index x, Eigen::Index y) { return values[x] < values[y]; });
  GenEig out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = values[order[static_cast<std::size_t>(i)]];
    Eigen::VectorXd col = vectors.col(order[static_cast<std::size_t>(i)]);
    for (Eigen::Index r = 0; r < n; ++r) {
      if (std::abs(col[r]) > 1e-12) {
        if (col[r] < 0.0) col = -col;
        break;
      }
    }
    out.vectors.col(i) = col;
  }
  return out;
}

// Welch band power: Hann-windowed 50%-overlap segments, naive DFT, power
// summed over the bins inside [f_lo, f_hi].
inline double welch_band_power(const Eigen::VectorXd& x, double fs, double f_lo,
                               double f_hi) {
  const Eigen::Index seg = std::min<Eigen::Index>(256, x.size());
  const Eigen::Index hop = seg / 2;
  const Eigen::Index k_lo =
      static_cast<Eigen::Index>(std::ceil(f_lo * static_cast<double>(seg) / fs));
  const Eigen::Index k_hi = static_cast<Eigen::Index>(
      std::floor(f_hi * static_cast<double>(seg) / fs));
  std::vector<double> window(static_cast<std::size_t>(seg));
  for (Eigen::Index i = 0; i < seg; ++i) {
    window[static_cast<std::size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) /
                              static_cast<double>(seg - 1)));
  }
  double power = 0.0;
  int n_segments = 0;
  for (Eigen::Index start = 0; start + seg <= x.size(); start += hop) {
    for (Eigen::Index k = k_lo; k <= k_hi; ++k) {
      double re = 0.0, im = 0.0;
      for (Eigen::Index i = 0; i < seg; ++i) {
        const double w = 2.0 * M_PI * static_cast<double>(k) *
                         static_cast<double>(i) / static_cast<double>(seg);
        const double v = x[start + i] * window[static_cast<std::size_t>(i)];
        re += v * std::cos(w);
        im -= v * std::sin(w);
      }
      power += (re * re + im * im) / static_cast<double>(seg);
    }
    ++n_segments;
  }
  return n_segments > 0 ? power / n_segments : 0.0;
}

// Bitwise equality of two dense matrices (distinguishes -0.0 from +0.0).
inline bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(),
                     sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

// Deterministic random helpers for test data.
inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                                     mi::Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

inline mi::RawRecording random_recording(mi::Rng& rng) {
  mi::RawRecording rec;
  const int channels = 1 + static_cast<int>(rng.uniform() * 8);
  const int samples = 1 + static_cast<int>(rng.uniform() * 400);
  rec.fs = 100.0 + rng.uniform() * 400.0;
  rec.samples = random_matrix(channels, samples, rng);
  for (int c = 0; c < channels; ++c) {
    rec.channel_labels.push_back(c == 0 ? "Cz" : "C" + std::to_string(c));
  }
  std::int64_t onset = 0;
  const int n_events = static_cast<int>(rng.uniform() * 5);
  for (int e = 0; e < n_events; ++e) {
    onset += static_cast<std::int64_t>(rng.uniform() * samples / 4);
    const double u = rng.uniform();
    rec.events.push_back({onset, u < 0.4 ? mi::ClassLabel::left
                                 : u < 0.8 ? mi::ClassLabel::right
                                           : mi::ClassLabel::other});
  }
  return rec;
}

}  // namespace oracle
