#include "mi/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mi/errors.hpp"

namespace mi::nn {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_vec(const std::vector<double>& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    fail(Errc::shape_mismatch, std::string(what) + " has length " +
                                   std::to_string(v.size()) + ", expected " +
                                   std::to_string(n));
  }
}

}  // namespace

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) fail(Errc::shape_mismatch, "tensor dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return shape.empty() ? 0 : n;
}

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  const std::size_t n = shape_size(shape);
  t.shape = std::move(shape);
  t.v.assign(n, 0.0);
  return t;
}

void Tensor::ensure_grad() {
  if (g.size() != v.size()) g.assign(v.size(), 0.0);
}

void Tensor::zero_grad() {
  if (g.size() != v.size()) g.assign(v.size(), 0.0);
  else std::fill(g.begin(), g.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Convolution

void conv2d_forward(const Tensor& x, const Conv2dLayer& layer, Tensor& y) {
  if (x.shape.size() != 3 || layer.kernels.shape.size() != 4) {
    fail(Errc::shape_mismatch, "conv2d expects x [C,H,W] and kernels [O,C,K,K]");
  }
  const int in_ch = x.shape[0];
  const int height = x.shape[1];
  const int width = x.shape[2];
  const int out_ch = layer.kernels.shape[0];
  const int ksize = layer.kernels.shape[2];
  if (layer.kernels.shape[1] != in_ch || layer.kernels.shape[3] != ksize) {
    fail(Errc::shape_mismatch, "conv2d kernel/input channel mismatch");
  }
  if (layer.bias.shape.size() != 1 || layer.bias.shape[0] != out_ch) {
    fail(Errc::shape_mismatch, "conv2d bias must be [out_channels]");
  }
  if (height < ksize || width < ksize) {
    fail(Errc::shape_mismatch, "conv2d input smaller than the kernel");
  }
  const int out_h = height - ksize + 1;
  const int out_w = width - ksize + 1;
  if (y.shape != std::vector<int>{out_ch, out_h, out_w}) {
    y = Tensor::zeros({out_ch, out_h, out_w});
  }

  const double* xv = x.v.data();
  const double* kv = layer.kernels.v.data();
  double* yv = y.v.data();
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t in_plane = static_cast<std::size_t>(height) * width;
  const std::size_t k_plane = static_cast<std::size_t>(ksize) * ksize;

  for (int oc = 0; oc < out_ch; ++oc) {
    std::fill(yv + oc * out_plane, yv + (oc + 1) * out_plane,
              layer.bias.v[static_cast<std::size_t>(oc)]);
    for (int ic = 0; ic < in_ch; ++ic) {
      const double* kbase = kv + (oc * in_ch + ic) * k_plane;
      const double* xbase = xv + ic * in_plane;
      for (int u = 0; u < ksize; ++u) {
        for (int v = 0; v < ksize; ++v) {
          const double kval = kbase[u * ksize + v];
          for (int i = 0; i < out_h; ++i) {
            const double* xrow = xbase + (i + u) * width + v;
            double* yrow = yv + oc * out_plane + i * out_w;
            for (int j = 0; j < out_w; ++j) yrow[j] += kval * xrow[j];
          }
        }
      }
    }
  }
}

Tensor conv2d_forward(const Tensor& x, const Conv2dLayer& layer) {
  Tensor y;
  conv2d_forward(x, layer, y);
  return y;
}

void conv2d_backward(const Tensor& x, Conv2dLayer& layer, const Tensor& dy,
                     Tensor* dx) {
  const int in_ch = x.shape[0];
  const int height = x.shape[1];
  const int width = x.shape[2];
  const int out_ch = layer.kernels.shape[0];
  const int ksize = layer.kernels.shape[2];
  const int out_h = height - ksize + 1;
  const int out_w = width - ksize + 1;
  if (dy.shape != std::vector<int>{out_ch, out_h, out_w}) {
    fail(Errc::shape_mismatch, "conv2d_backward upstream gradient shape mismatch");
  }
  layer.kernels.ensure_grad();
  layer.bias.ensure_grad();
  if (dx != nullptr && dx->shape != x.shape) {
    *dx = Tensor::zeros(x.shape);
  } else if (dx != nullptr) {
    std::fill(dx->v.begin(), dx->v.end(), 0.0);
  }

  const double* xv = x.v.data();
  const double* dyv = dy.v.data();
  const double* kv = layer.kernels.v.data();
  double* kg = layer.kernels.g.data();
  double* bg = layer.bias.g.data();
  double* dxv = dx != nullptr ? dx->v.data() : nullptr;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t in_plane = static_cast<std::size_t>(height) * width;
  const std::size_t k_plane = static_cast<std::size_t>(ksize) * ksize;

  for (int oc = 0; oc < out_ch; ++oc) {
    const double* dybase = dyv + oc * out_plane;
    double bias_sum = 0.0;
    for (std::size_t i = 0; i < out_plane; ++i) bias_sum += dybase[i];
    bg[oc] += bias_sum;

    for (int ic = 0; ic < in_ch; ++ic) {
      const double* xbase = xv + ic * in_plane;
      const std::size_t koff = (oc * in_ch + ic) * k_plane;
      for (int u = 0; u < ksize; ++u) {
        for (int v = 0; v < ksize; ++v) {
          double acc = 0.0;
          for (int i = 0; i < out_h; ++i) {
            const double* xrow = xbase + (i + u) * width + v;
            const double* dyrow = dybase + i * out_w;
            for (int j = 0; j < out_w; ++j) acc += dyrow[j] * xrow[j];
          }
          kg[koff + u * ksize + v] += acc;
          if (dxv != nullptr) {
            const double kval = kv[koff + u * ksize + v];
            for (int i = 0; i < out_h; ++i) {
              double* dxrow = dxv + ic * in_plane + (i + u) * width + v;
              const double* dyrow = dybase + i * out_w;
              for (int j = 0; j < out_w; ++j) dxrow[j] += kval * dyrow[j];
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// ReLU

void relu(const Tensor& x, Tensor& y) {
  if (y.shape != x.shape) y = Tensor::zeros(x.shape);
  for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
}

Tensor relu(const Tensor& x) {
  Tensor y;
  relu(x, y);
  return y;
}

void relu_backward(const Tensor& x_pre, const Tensor& dy, Tensor& dx) {
  if (x_pre.shape != dy.shape) {
    fail(Errc::shape_mismatch, "relu_backward shape mismatch");
  }
  if (dx.shape != x_pre.shape) dx = Tensor::zeros(x_pre.shape);
  for (std::size_t i = 0; i < dy.v.size(); ++i) {
    dx.v[i] = x_pre.v[i] > 0.0 ? dy.v[i] : 0.0;
  }
}

// ---------------------------------------------------------------------------
// Dropout

DropoutMask make_dropout_mask(std::size_t n, double p_drop, Rng& rng) {
  if (!(p_drop >= 0.0) || !(p_drop < 1.0)) {
    fail(Errc::invalid_probability,
         "dropout probability must lie in [0, 1), got " + std::to_string(p_drop));
  }
  DropoutMask mask;
  mask.scale.resize(n);
  const double keep_scale = 1.0 / (1.0 - p_drop);
  for (std::size_t i = 0; i < n; ++i) {
    mask.scale[i] = (rng.uniform() < p_drop) ? 0.0 : keep_scale;
  }
  return mask;
}

std::vector<double> apply_mask(const DropoutMask& mask,
                               const std::vector<double>& x) {
  check_vec(x, mask.scale.size(), "dropout input");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask.scale[i];
  return y;
}

std::vector<double> dropout(const std::vector<double>& x, double p_drop,
                            Rng& rng, bool training) {
  if (!training) {
    if (!(p_drop >= 0.0) || !(p_drop < 1.0)) {
      fail(Errc::invalid_probability,
           "dropout probability must lie in [0, 1), got " + std::to_string(p_drop));
    }
    return x;
  }
  return apply_mask(make_dropout_mask(x.size(), p_drop, rng), x);
}

// ---------------------------------------------------------------------------
// GRU

std::vector<double> gru_step(const GruCell& cell, const std::vector<double>& x,
                             const std::vector<double>& h, GruStepCache* cache) {
  const int hidden = cell.hidden_dim();
  const int input = cell.input_dim();
  check_vec(x, static_cast<std::size_t>(input), "gru input");
  check_vec(h, static_cast<std::size_t>(hidden), "gru state");

  std::vector<double> z(hidden), r(hidden), hcand(hidden), h_new(hidden);
  auto affine = [&](const Tensor& w, const Tensor& u, const Tensor& b,
                    const std::vector<double>& hvec, int i) {
    double acc = b.v[static_cast<std::size_t>(i)];
    const double* wrow = w.v.data() + static_cast<std::size_t>(i) * input;
    for (int j = 0; j < input; ++j) acc += wrow[j] * x[static_cast<std::size_t>(j)];
    const double* urow = u.v.data() + static_cast<std::size_t>(i) * hidden;
    for (int j = 0; j < hidden; ++j) acc += urow[j] * hvec[static_cast<std::size_t>(j)];
    return acc;
  };

  for (int i = 0; i < hidden; ++i) {
    z[static_cast<std::size_t>(i)] = sigmoid(affine(cell.wz, cell.uz, cell.bz, h, i));
    r[static_cast<std::size_t>(i)] = sigmoid(affine(cell.wr, cell.ur, cell.br, h, i));
  }
  std::vector<double> rh(hidden);
  for (int i = 0; i < hidden; ++i) {
    rh[static_cast<std::size_t>(i)] =
        r[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < hidden; ++i) {
    hcand[static_cast<std::size_t>(i)] =
        std::tanh(affine(cell.wh, cell.uh, cell.bh, rh, i));
  }
  for (int i = 0; i < hidden; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    h_new[k] = (1.0 - z[k]) * h[k] + z[k] * hcand[k];
  }
  if (cache != nullptr) {
    cache->x = x;
    cache->h_prev = h;
    cache->z = z;
    cache->r = r;
    cache->hcand = hcand;
  }
  return h_new;
}

void gru_step_backward(GruCell& cell, const GruStepCache& cache,
                       const std::vector<double>& dh_new,
                       std::vector<double>& dh_prev, std::vector<double>& dx) {
  const int hidden = cell.hidden_dim();
  const int input = cell.input_dim();
  check_vec(dh_new, static_cast<std::size_t>(hidden), "gru upstream gradient");
  for (Tensor* t : {&cell.wz, &cell.wr, &cell.wh, &cell.uz, &cell.ur, &cell.uh,
                    &cell.bz, &cell.br, &cell.bh}) {
    t->ensure_grad();
  }
  dh_prev.assign(static_cast<std::size_t>(hidden), 0.0);
  dx.assign(static_cast<std::size_t>(input), 0.0);

  const std::vector<double>& h = cache.h_prev;
  std::vector<double> da_z(hidden), da_r(hidden), da_h(hidden);

  // h' = (1-z) h + z hcand
  for (int i = 0; i < hidden; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    const double dz = dh_new[k] * (cache.hcand[k] - h[k]);
    const double dhc = dh_new[k] * cache.z[k];
    dh_prev[k] += dh_new[k] * (1.0 - cache.z[k]);
    da_h[k] = dhc * (1.0 - cache.hcand[k] * cache.hcand[k]);
    da_z[k] = dz * cache.z[k] * (1.0 - cache.z[k]);
  }

  // Candidate path: d(r.h) = Uh^T da_h, then split into dr and dh_prev.
  std::vector<double> drh(hidden, 0.0);
  for (int i = 0; i < hidden; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    const double* uhrow = cell.uh.v.data() + k * static_cast<std::size_t>(hidden);
    double* uhg = cell.uh.g.data() + k * static_cast<std::size_t>(hidden);
    double* whg = cell.wh.g.data() + k * static_cast<std::size_t>(input);
    const double g = da_h[k];
    cell.bh.g[k] += g;
    for (int j = 0; j < input; ++j) whg[j] += g * cache.x[static_cast<std::size_t>(j)];
    for (int j = 0; j < hidden; ++j) {
      const std::size_t kj = static_cast<std::size_t>(j);
      uhg[j] += g * cache.r[kj] * h[kj];
      drh[kj] += uhrow[j] * g;
    }
    const double* whrow = cell.wh.v.data() + k * static_cast<std::size_t>(input);
    for (int j = 0; j < input; ++j) dx[static_cast<std::size_t>(j)] += whrow[j] * g;
  }
  for (int i = 0; i < hidden; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    const double dr = drh[k] * h[k];
    dh_prev[k] += drh[k] * cache.r[k];
    da_r[k] = dr * cache.r[k] * (1.0 - cache.r[k]);
  }

  // Gate paths.
  auto gate_backward = [&](Tensor& w, Tensor& u, Tensor& b,
                           const std::vector<double>& da) {
    for (int i = 0; i < hidden; ++i) {
      const std::size_t k = static_cast<std::size_t>(i);
      const double g = da[k];
      b.g[k] += g;
      double* wg = w.g.data() + k * static_cast<std::size_t>(input);
      const double* wrow = w.v.data() + k * static_cast<std::size_t>(input);
      for (int j = 0; j < input; ++j) {
        wg[j] += g * cache.x[static_cast<std::size_t>(j)];
        dx[static_cast<std::size_t>(j)] += wrow[j] * g;
      }
      double* ug = u.g.data() + k * static_cast<std::size_t>(hidden);
      const double* urow = u.v.data() + k * static_cast<std::size_t>(hidden);
      for (int j = 0; j < hidden; ++j) {
        const std::size_t kj = static_cast<std::size_t>(j);
        ug[j] += g * h[kj];
        dh_prev[kj] += urow[j] * g;
      }
    }
  };
  gate_backward(cell.wz, cell.uz, cell.bz, da_z);
  gate_backward(cell.wr, cell.ur, cell.br, da_r);
}

// ---------------------------------------------------------------------------
// Dense / softmax

std::vector<double> dense_forward(const DenseLayer& layer,
                                  const std::vector<double>& x) {
  const int out = layer.w.shape[0];
  const int in = layer.w.shape[1];
  check_vec(x, static_cast<std::size_t>(in), "dense input");
  std::vector<double> y(static_cast<std::size_t>(out));
  for (int i = 0; i < out; ++i) {
    const double* wrow = layer.w.v.data() + static_cast<std::size_t>(i) * in;
    double acc = layer.b.v[static_cast<std::size_t>(i)];
    for (int j = 0; j < in; ++j) acc += wrow[j] * x[static_cast<std::size_t>(j)];
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

void dense_backward(DenseLayer& layer, const std::vector<double>& x,
                    const std::vector<double>& dy, std::vector<double>* dx) {
  const int out = layer.w.shape[0];
  const int in = layer.w.shape[1];
  check_vec(x, static_cast<std::size_t>(in), "dense input");
  check_vec(dy, static_cast<std::size_t>(out), "dense upstream gradient");
  layer.w.ensure_grad();
  layer.b.ensure_grad();
  if (dx != nullptr) dx->assign(static_cast<std::size_t>(in), 0.0);
  for (int i = 0; i < out; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    const double g = dy[k];
    layer.b.g[k] += g;
    double* wg = layer.w.g.data() + k * static_cast<std::size_t>(in);
    const double* wrow = layer.w.v.data() + k * static_cast<std::size_t>(in);
    for (int j = 0; j < in; ++j) {
      const std::size_t kj = static_cast<std::size_t>(j);
      wg[j] += g * x[kj];
      if (dx != nullptr) (*dx)[kj] += wrow[j] * g;
    }
  }
}

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) fail(Errc::shape_mismatch, "softmax of an empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

XentResult softmax_cross_entropy(const std::vector<double>& logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    fail(Errc::out_of_range, "class label " + std::to_string(label) +
                                 " outside [0, " + std::to_string(logits.size()) +
                                 ")");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  XentResult out;
  out.loss = -(logits[static_cast<std::size_t>(label)] - mx - std::log(sum));
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.grad[i] = std::exp(logits[i] - mx) / sum;
  }
  out.grad[static_cast<std::size_t>(label)] -= 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Adam

void AdamState::init(const std::vector<Tensor*>& params) {
  t = 0;
  m.clear();
  v.clear();
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor* p : params) {
    m.emplace_back(p->v.size(), 0.0);
    v.emplace_back(p->v.size(), 0.0);
  }
}

void AdamState::step(const std::vector<Tensor*>& params) {
  if (params.size() != m.size()) {
    fail(Errc::shape_mismatch, "Adam state does not match the parameter list");
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = *params[p];
    if (param.g.size() != param.v.size() || m[p].size() != param.v.size()) {
      fail(Errc::shape_mismatch, "Adam parameter/gradient size mismatch");
    }
    double* mv = m[p].data();
    double* vv = v[p].data();
    for (std::size_t i = 0; i < param.v.size(); ++i) {
      const double g = param.g[i];
      mv[i] = beta1 * mv[i] + (1.0 - beta1) * g;
      vv[i] = beta2 * vv[i] + (1.0 - beta2) * g * g;
      const double mhat = mv[i] / bc1;
      const double vhat = vv[i] / bc2;
      param.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void glorot_uniform(Tensor& t, int fan_in, int fan_out, Rng& rng) {
  if (fan_in <= 0 || fan_out <= 0) {
    fail(Errc::shape_mismatch, "glorot fan sizes must be positive");
  }
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.v) v = rng.uniform(-limit, limit);
}

}  // namespace mi::nn
