#pragma once

#include <cstddef>
#include <vector>

#include "mi/rng.hpp"

namespace mi::nn {

// Dense nd-array with an optional gradient buffer of the same shape.
// Parameters keep .g allocated; activations usually leave it empty.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;
  std::vector<double> g;

  static Tensor zeros(std::vector<int> shape);

  std::size_t size() const { return v.size(); }
  void ensure_grad();
  void zero_grad();
};

std::size_t shape_size(const std::vector<int>& shape);

// ---------------------------------------------------------------------------
// Layers (parameters only; activations are caller-owned so buffers can be
// reused across bands and trials).

struct Conv2dLayer {
  Tensor kernels;  // [out_ch, in_ch, K, K]
  Tensor bias;     // [out_ch]

  int out_channels() const { return kernels.shape[0]; }
  int in_channels() const { return kernels.shape[1]; }
  int kernel_size() const { return kernels.shape[2]; }
};

struct DenseLayer {
  Tensor w;  // [out, in]
  Tensor b;  // [out]
};

struct GruCell {
  Tensor wz, wr, wh;  // [hidden, input]
  Tensor uz, ur, uh;  // [hidden, hidden]
  Tensor bz, br, bh;  // [hidden]

  int input_dim() const { return wz.shape[1]; }
  int hidden_dim() const { return wz.shape[0]; }
};

// ---------------------------------------------------------------------------
// Forward / backward ops. Backward passes accumulate into the layer tensors'
// .g buffers; input gradients are written (not accumulated) where requested.

// Valid cross-correlation plus bias: x [in_ch, H, W] -> y [out_ch, H-K+1, W-K+1].
void conv2d_forward(const Tensor& x, const Conv2dLayer& layer, Tensor& y);
Tensor conv2d_forward(const Tensor& x, const Conv2dLayer& layer);

// dx may be null when the input is a leaf.
void conv2d_backward(const Tensor& x, Conv2dLayer& layer, const Tensor& dy,
                     Tensor* dx);

void relu(const Tensor& x, Tensor& y);
Tensor relu(const Tensor& x);
// dx = dy where x > 0, else 0. dx may alias dy.
void relu_backward(const Tensor& x_pre, const Tensor& dy, Tensor& dx);

// Inverted dropout: each element zeroed with probability p_drop, survivors
// scaled by 1/(1-p_drop). Masks are kept for replay in the backward pass.
struct DropoutMask {
  std::vector<double> scale;  // per element: 0 or 1/(1-p_drop)
};

DropoutMask make_dropout_mask(std::size_t n, double p_drop, Rng& rng);
std::vector<double> apply_mask(const DropoutMask& mask,
                               const std::vector<double>& x);

// Convenience wrapper: identity in evaluation mode.
std::vector<double> dropout(const std::vector<double>& x, double p_drop,
                            Rng& rng, bool training);

struct GruStepCache {
  std::vector<double> x, h_prev, z, r, hcand;
};

// z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br);
// hcand = tanh(Wh x + Uh (r.h) + bh); h' = (1-z).h + z.hcand
std::vector<double> gru_step(const GruCell& cell, const std::vector<double>& x,
                             const std::vector<double>& h,
                             GruStepCache* cache = nullptr);

// One step of backpropagation through time. dh_prev/dx are written.
void gru_step_backward(GruCell& cell, const GruStepCache& cache,
                       const std::vector<double>& dh_new,
                       std::vector<double>& dh_prev, std::vector<double>& dx);

std::vector<double> dense_forward(const DenseLayer& layer,
                                  const std::vector<double>& x);
void dense_backward(DenseLayer& layer, const std::vector<double>& x,
                    const std::vector<double>& dy, std::vector<double>* dx);

std::vector<double> softmax(const std::vector<double>& logits);

struct XentResult {
  double loss = 0.0;
  std::vector<double> grad;  // softmax - onehot
};

// Max-subtracted for stability; exact at logits ~ 1e3.
XentResult softmax_cross_entropy(const std::vector<double>& logits, int label);

// ---------------------------------------------------------------------------
// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m, v;

  void init(const std::vector<Tensor*>& params);
  // One update from the gradients in each tensor's .g.
  void step(const std::vector<Tensor*>& params);
};

// Uniform Glorot on [-sqrt(6/(fan_in+fan_out)), +...].
void glorot_uniform(Tensor& t, int fan_in, int fan_out, Rng& rng);

}  // namespace mi::nn
