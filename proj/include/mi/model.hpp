#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mi/features.hpp"
#include "mi/nn.hpp"

namespace mi {

enum class ModelKind { cnn_gru, cnn_only };

struct CnnGruConfig {
  ModelKind kind = ModelKind::cnn_gru;
  int channels = 22;  // C
  int bands = 16;     // T
  int kernel = 3;     // K
  int conv1_filters = 128;
  int gru_hidden = 16;
  int n_classes = 2;
  // Strict mode: no dense readout, last GRU state is the logit vector
  // (requires gru_hidden == n_classes).
  bool gru_readout = true;
  double p_drop = 0.8;
  double lr = 1e-4;
  int epochs = 500;
  std::uint64_t seed = 0;

  void validate() const;  // throws invalid_config
};

// All trainable weights. Per-band conv weights are shared across the T bands;
// the parameter count is independent of T.
struct ModelParams {
  nn::Conv2dLayer conv1;    // kernels [F, 1, K, K]
  nn::Conv2dLayer conv2;    // kernels [1, F, C-K+1, C-K+1]
  nn::GruCell gru;          // input dim 1 (cnn_gru only)
  nn::DenseLayer readout;   // [n_classes, hidden] or [n_classes, 1] (cnn_only)
  bool has_gru = true;
  bool has_readout = true;

  std::vector<nn::Tensor*> all_tensors();
  std::vector<const nn::Tensor*> all_tensors() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

// Glorot-initialized parameters from the config seed.
ModelParams init_params(const CnnGruConfig& config);

// Per band t: slice -> conv1/ReLU -> conv2/ReLU -> scalar; dropout over the
// T-length scalar sequence; GRU for T steps; dense readout on the last hidden
// state. Dropout masks come from `mask_rng` only when training.
std::vector<double> model_forward(const FeatureTensor& tensor,
                                  const ModelParams& params,
                                  const CnnGruConfig& config, bool training,
                                  Rng& mask_rng);

// Ablation path: conv1 -> conv2 -> dropout -> dense readout on one band slice.
std::vector<double> model_forward_cnn_only(const Eigen::MatrixXd& slice,
                                           const ModelParams& params,
                                           const CnnGruConfig& config,
                                           bool training, Rng& mask_rng);

// One trial's captured forward computation. backward() consumes the graph;
// calling it again without a fresh forward() throws graph_consumed.
class TrialStep {
 public:
  explicit TrialStep(const CnnGruConfig& config);

  const std::vector<double>& forward(const FeatureTensor& tensor,
                                     const ModelParams& params, bool training,
                                     Rng& mask_rng);
  // Accumulates all parameter gradients for dLoss/dlogits = dlogits.
  void backward(const std::vector<double>& dlogits, ModelParams& params);

 private:
  CnnGruConfig config_;
  bool graph_valid_ = false;
  // caches
  std::vector<nn::Tensor> slice_in_, a1_pre_, a1_;
  std::vector<double> s_pre_, s_, s_dropped_;
  nn::DropoutMask mask_;
  bool mask_active_ = false;
  std::vector<nn::GruStepCache> gru_cache_;
  std::vector<std::vector<double>> h_;
  std::vector<double> logits_;
  // scratch
  nn::Tensor da1_;
};

struct TrainedModel {
  ModelParams params;
  CnnGruConfig config;
  std::vector<double> training_curve;  // mean loss per epoch
};

// Full-batch Adam on mean cross-entropy for config.epochs steps, no early
// stopping. Deterministic given config.seed. Throws non_finite_loss with the
// epoch index in the message.
TrainedModel train_model(const std::vector<FeatureTensor>& dataset,
                         const CnnGruConfig& config);

struct EvalResult {
  double accuracy = 0.0;
  int n_correct = 0;
  int n_total = 0;
  std::vector<int> predictions;  // argmax per trial, dropout disabled
};

EvalResult evaluate_model(const TrainedModel& model,
                          const std::vector<FeatureTensor>& dataset);

// Checkpoints go through the EEGT container, one named payload per tensor.
void save_checkpoint(const std::string& path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::string& path);

void write_training_curve_csv(const std::string& path,
                              const std::vector<double>& curve);

}  // namespace mi
