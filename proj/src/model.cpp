#include "mi/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "mi/container.hpp"
#include "mi/errors.hpp"
#include "mi/log.hpp"

namespace mi {

namespace {

// Fixed stream tags so initialization and per-epoch dropout draws never
// collide even though they derive from the same master seed.
constexpr std::uint64_t kInitStream = 0x696e6974ULL;     // "init"
constexpr std::uint64_t kDropoutStream = 0x64726f70ULL;  // "drop"

int label_to_index(ClassLabel label) {
  switch (label) {
    case ClassLabel::left: return 0;
    case ClassLabel::right: return 1;
    default:
      fail(Errc::invalid_config,
           "model training handles left/right trials only; filter the dataset");
  }
}

void copy_slice(const Eigen::MatrixXd& slice, nn::Tensor& out) {
  const int channels = static_cast<int>(slice.rows());
  if (out.shape != std::vector<int>{1, channels, channels}) {
    out = nn::Tensor::zeros({1, channels, channels});
  }
  for (int i = 0; i < channels; ++i) {
    for (int j = 0; j < channels; ++j) {
      out.v[static_cast<std::size_t>(i) * channels + j] = slice(i, j);
    }
  }
}

}  // namespace

void CnnGruConfig::validate() const {
  std::string problems;
  auto add = [&](const std::string& p) {
    if (!problems.empty()) problems += "; ";
    problems += p;
  };
  if (channels < 2) add("channels must be >= 2");
  if (bands < 1) add("bands must be >= 1");
  if (kernel < 1) add("kernel must be >= 1");
  if (kernel > channels) add("kernel must not exceed channels");
  if (conv1_filters < 1) add("conv1_filters must be >= 1");
  if (n_classes < 2) add("n_classes must be >= 2");
  if (kind == ModelKind::cnn_gru) {
    if (gru_hidden < 1) add("gru_hidden must be >= 1");
    if (!gru_readout && gru_hidden != n_classes) {
      add("without a readout the GRU hidden size must equal n_classes");
    }
  } else if (bands != 1) {
    add("cnn_only models take exactly one band");
  }
  if (!(p_drop >= 0.0) || !(p_drop < 1.0)) add("p_drop must lie in [0, 1)");
  if (!(lr > 0.0)) add("lr must be positive");
  if (epochs < 1) add("epochs must be >= 1");
  if (!problems.empty()) fail(Errc::invalid_config, problems);
}

std::vector<nn::Tensor*> ModelParams::all_tensors() {
  std::vector<nn::Tensor*> out{&conv1.kernels, &conv1.bias, &conv2.kernels,
                               &conv2.bias};
  if (has_gru) {
    for (nn::Tensor* t : {&gru.wz, &gru.wr, &gru.wh, &gru.uz, &gru.ur, &gru.uh,
                          &gru.bz, &gru.br, &gru.bh}) {
      out.push_back(t);
    }
  }
  if (has_readout) {
    out.push_back(&readout.w);
    out.push_back(&readout.b);
  }
  return out;
}

std::vector<const nn::Tensor*> ModelParams::all_tensors() const {
  auto mutable_list = const_cast<ModelParams*>(this)->all_tensors();
  return {mutable_list.begin(), mutable_list.end()};
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const nn::Tensor* t : all_tensors()) n += t->v.size();
  return n;
}

void ModelParams::zero_grad() {
  for (nn::Tensor* t : all_tensors()) t->zero_grad();
}

ModelParams init_params(const CnnGruConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, kInitStream));
  const int reduced = config.channels - config.kernel + 1;

  ModelParams p;
  p.has_gru = config.kind == ModelKind::cnn_gru;
  p.has_readout = config.kind == ModelKind::cnn_only || config.gru_readout;

  // Weights are Glorot; ReLU biases start positive. The second conv collapses
  // to a single output unit, and a ReLU unit that starts dead stays dead (the
  // gate zeroes its gradient), so with zero biases roughly half of all inits
  // would never train. The first conv gets a small offset; the second needs a
  // larger one because its preactivation carries a random input-independent
  // offset (the signed weight sum over all first-conv activations) whose
  // spread is about 0.2 for these fan-ins — 1.0 clears it by several sigma.
  constexpr double kConv1BiasInit = 0.1;
  constexpr double kConv2BiasInit = 1.0;
  p.conv1.kernels =
      nn::Tensor::zeros({config.conv1_filters, 1, config.kernel, config.kernel});
  p.conv1.bias = nn::Tensor::zeros({config.conv1_filters});
  nn::glorot_uniform(p.conv1.kernels, config.kernel * config.kernel,
                     config.conv1_filters * config.kernel * config.kernel, rng);
  std::fill(p.conv1.bias.v.begin(), p.conv1.bias.v.end(), kConv1BiasInit);

  p.conv2.kernels = nn::Tensor::zeros({1, config.conv1_filters, reduced, reduced});
  p.conv2.bias = nn::Tensor::zeros({1});
  nn::glorot_uniform(p.conv2.kernels, config.conv1_filters * reduced * reduced,
                     reduced * reduced, rng);
  std::fill(p.conv2.bias.v.begin(), p.conv2.bias.v.end(), kConv2BiasInit);

  if (p.has_gru) {
    const int hidden = config.gru_hidden;
    for (nn::Tensor* t : {&p.gru.wz, &p.gru.wr, &p.gru.wh}) {
      *t = nn::Tensor::zeros({hidden, 1});
      nn::glorot_uniform(*t, 1, hidden, rng);
    }
    for (nn::Tensor* t : {&p.gru.uz, &p.gru.ur, &p.gru.uh}) {
      *t = nn::Tensor::zeros({hidden, hidden});
      nn::glorot_uniform(*t, hidden, hidden, rng);
    }
    p.gru.bz = nn::Tensor::zeros({hidden});
    p.gru.br = nn::Tensor::zeros({hidden});
    p.gru.bh = nn::Tensor::zeros({hidden});
  }
  if (p.has_readout) {
    const int in = p.has_gru ? config.gru_hidden : 1;
    p.readout.w = nn::Tensor::zeros({config.n_classes, in});
    nn::glorot_uniform(p.readout.w, in, config.n_classes, rng);
    p.readout.b = nn::Tensor::zeros({config.n_classes});
  }
  for (nn::Tensor* t : p.all_tensors()) t->ensure_grad();
  return p;
}

// ---------------------------------------------------------------------------
// TrialStep

TrialStep::TrialStep(const CnnGruConfig& config) : config_(config) {
  config_.validate();
}

const std::vector<double>& TrialStep::forward(const FeatureTensor& tensor,
                                              const ModelParams& params,
                                              bool training, Rng& mask_rng) {
  const int bands = config_.bands;
  if (tensor.bands() != bands) {
    fail(Errc::shape_mismatch, "tensor has " + std::to_string(tensor.bands()) +
                                   " bands, model expects " +
                                   std::to_string(bands));
  }
  if (tensor.channels() != config_.channels) {
    fail(Errc::shape_mismatch,
         "tensor has " + std::to_string(tensor.channels()) +
             " channels, model expects " + std::to_string(config_.channels));
  }

  slice_in_.resize(bands);
  a1_pre_.resize(bands);
  a1_.resize(bands);
  s_pre_.assign(bands, 0.0);
  s_.assign(bands, 0.0);

  nn::Tensor conv2_out;
  for (int t = 0; t < bands; ++t) {
    copy_slice(tensor.slices[static_cast<std::size_t>(t)], slice_in_[t]);
    nn::conv2d_forward(slice_in_[t], params.conv1, a1_pre_[t]);
    nn::relu(a1_pre_[t], a1_[t]);
    nn::conv2d_forward(a1_[t], params.conv2, conv2_out);
    s_pre_[t] = conv2_out.v[0];
    s_[t] = s_pre_[t] > 0.0 ? s_pre_[t] : 0.0;
  }

  mask_active_ = training && config_.p_drop > 0.0;
  if (mask_active_) {
    mask_ = nn::make_dropout_mask(static_cast<std::size_t>(bands), config_.p_drop,
                                  mask_rng);
    s_dropped_ = nn::apply_mask(mask_, s_);
  } else {
    s_dropped_ = s_;
  }

  if (params.has_gru) {
    gru_cache_.assign(bands, nn::GruStepCache{});
    h_.assign(bands + 1,
              std::vector<double>(static_cast<std::size_t>(config_.gru_hidden), 0.0));
    for (int t = 0; t < bands; ++t) {
      h_[t + 1] = nn::gru_step(params.gru, {s_dropped_[t]}, h_[t], &gru_cache_[t]);
    }
    logits_ = params.has_readout ? nn::dense_forward(params.readout, h_[bands])
                                 : h_[bands];
  } else {
    logits_ = nn::dense_forward(params.readout, {s_dropped_[0]});
  }
  graph_valid_ = true;
  return logits_;
}

void TrialStep::backward(const std::vector<double>& dlogits, ModelParams& params) {
  if (!graph_valid_) {
    fail(Errc::graph_consumed,
         "backward() without a matching forward(); the graph was already consumed");
  }
  graph_valid_ = false;
  const int bands = config_.bands;

  std::vector<double> ds(bands, 0.0);
  if (params.has_gru) {
    std::vector<double> dh;
    if (params.has_readout) {
      nn::dense_backward(params.readout, h_[bands], dlogits, &dh);
    } else {
      dh = dlogits;
    }
    std::vector<double> dh_prev, dx;
    for (int t = bands - 1; t >= 0; --t) {
      nn::gru_step_backward(params.gru, gru_cache_[t], dh, dh_prev, dx);
      ds[t] = dx[0];
      dh = dh_prev;
    }
  } else {
    std::vector<double> dx;
    nn::dense_backward(params.readout, {s_dropped_[0]}, dlogits, &dx);
    ds[0] = dx[0];
  }

  nn::Tensor dy = nn::Tensor::zeros({1, 1, 1});
  for (int t = 0; t < bands; ++t) {
    double g = ds[t];
    if (mask_active_) g *= mask_.scale[static_cast<std::size_t>(t)];
    if (s_pre_[t] <= 0.0) g = 0.0;
    if (g == 0.0) continue;  // dead ReLU or dropped band: nothing propagates
    dy.v[0] = g;
    nn::conv2d_backward(a1_[t], params.conv2, dy, &da1_);
    nn::relu_backward(a1_pre_[t], da1_, da1_);
    nn::conv2d_backward(slice_in_[t], params.conv1, da1_, nullptr);
  }
}

std::vector<double> model_forward(const FeatureTensor& tensor,
                                  const ModelParams& params,
                                  const CnnGruConfig& config, bool training,
                                  Rng& mask_rng) {
  TrialStep step(config);
  return step.forward(tensor, params, training, mask_rng);
}

std::vector<double> model_forward_cnn_only(const Eigen::MatrixXd& slice,
                                           const ModelParams& params,
                                           const CnnGruConfig& config,
                                           bool training, Rng& mask_rng) {
  FeatureTensor t;
  t.slices = {slice};
  TrialStep step(config);
  return step.forward(t, params, training, mask_rng);
}

// ---------------------------------------------------------------------------
// Training / evaluation

TrainedModel train_model(const std::vector<FeatureTensor>& dataset,
                         const CnnGruConfig& config) {
  config.validate();
  if (dataset.empty()) fail(Errc::empty_dataset, "training set is empty");
  std::vector<int> class_count(static_cast<std::size_t>(config.n_classes), 0);
  for (const FeatureTensor& t : dataset) {
    ++class_count[static_cast<std::size_t>(label_to_index(t.label))];
  }
  for (int c = 0; c < config.n_classes; ++c) {
    if (class_count[static_cast<std::size_t>(c)] == 0) {
      fail(Errc::empty_dataset,
           "training set has no examples of class " + std::to_string(c));
    }
  }

  TrainedModel model;
  model.config = config;
  model.params = init_params(config);
  nn::AdamState adam;
  adam.lr = config.lr;
  std::vector<nn::Tensor*> tensors = model.params.all_tensors();
  adam.init(tensors);

  TrialStep step(config);
  const double inv_n = 1.0 / static_cast<double>(dataset.size());
  model.training_curve.reserve(static_cast<std::size_t>(config.epochs));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    model.params.zero_grad();
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      // Masks depend only on (seed, epoch, trial), not on evaluation order.
      Rng mask_rng(derive_seed(derive_seed(config.seed, kDropoutStream),
                               static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(i)));
      const std::vector<double>& logits =
          step.forward(dataset[i], model.params, /*training=*/true, mask_rng);
      nn::XentResult xent =
          nn::softmax_cross_entropy(logits, label_to_index(dataset[i].label));
      loss_sum += xent.loss;
      for (double& g : xent.grad) g *= inv_n;
      step.backward(xent.grad, model.params);
    }
    const double mean_loss = loss_sum * inv_n;
    if (!std::isfinite(mean_loss)) {
      fail(Errc::non_finite_loss,
           "mean loss became non-finite at epoch " + std::to_string(epoch));
    }
    adam.step(tensors);
    model.training_curve.push_back(mean_loss);
    if ((epoch + 1) % 100 == 0) {
      log_debug("epoch " + std::to_string(epoch + 1) + "/" +
                std::to_string(config.epochs) + " mean loss " +
                std::to_string(mean_loss));
    }
  }
  return model;
}

EvalResult evaluate_model(const TrainedModel& model,
                          const std::vector<FeatureTensor>& dataset) {
  if (dataset.empty()) fail(Errc::empty_dataset, "evaluation set is empty");
  EvalResult out;
  out.n_total = static_cast<int>(dataset.size());
  out.predictions.reserve(dataset.size());
  TrialStep step(model.config);
  Rng unused_rng(0);
  for (const FeatureTensor& t : dataset) {
    const std::vector<double>& logits =
        step.forward(t, model.params, /*training=*/false, unused_rng);
    int best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k) {
      if (logits[k] > logits[static_cast<std::size_t>(best)]) {
        best = static_cast<int>(k);
      }
    }
    out.predictions.push_back(best);
    if (best == label_to_index(t.label)) ++out.n_correct;
  }
  out.accuracy = static_cast<double>(out.n_correct) / out.n_total;
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::vector<std::pair<std::string, nn::Tensor*>> named_tensors(ModelParams& p) {
  std::vector<std::pair<std::string, nn::Tensor*>> out{
      {"conv1.kernels", &p.conv1.kernels},
      {"conv1.bias", &p.conv1.bias},
      {"conv2.kernels", &p.conv2.kernels},
      {"conv2.bias", &p.conv2.bias},
  };
  if (p.has_gru) {
    out.insert(out.end(), {{"gru.wz", &p.gru.wz},
                           {"gru.wr", &p.gru.wr},
                           {"gru.wh", &p.gru.wh},
                           {"gru.uz", &p.gru.uz},
                           {"gru.ur", &p.gru.ur},
                           {"gru.uh", &p.gru.uh},
                           {"gru.bz", &p.gru.bz},
                           {"gru.br", &p.gru.br},
                           {"gru.bh", &p.gru.bh}});
  }
  if (p.has_readout) {
    out.insert(out.end(), {{"readout.w", &p.readout.w},
                           {"readout.b", &p.readout.b}});
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainedModel& model) {
  Container c;
  const CnnGruConfig& cfg = model.config;
  c.meta["kind"] = "checkpoint";
  c.meta["model"] = cfg.kind == ModelKind::cnn_gru ? "cnn_gru" : "cnn_only";
  c.meta["channels"] = cfg.channels;
  c.meta["bands"] = cfg.bands;
  c.meta["kernel"] = cfg.kernel;
  c.meta["conv1_filters"] = cfg.conv1_filters;
  c.meta["gru_hidden"] = cfg.gru_hidden;
  c.meta["n_classes"] = cfg.n_classes;
  c.meta["gru_readout"] = cfg.gru_readout;
  c.meta["p_drop"] = cfg.p_drop;
  c.meta["lr"] = cfg.lr;
  c.meta["epochs"] = cfg.epochs;
  c.meta["seed"] = cfg.seed;

  ModelParams params = model.params;  // named_tensors needs mutable access
  for (const auto& [name, tensor] : named_tensors(params)) {
    Payload p;
    p.name = name;
    for (int d : tensor->shape) p.shape.push_back(d);
    p.data = tensor->v;
    c.payloads.push_back(std::move(p));
  }
  if (!model.training_curve.empty()) {
    Payload curve;
    curve.name = "training_curve";
    curve.shape = {static_cast<std::int64_t>(model.training_curve.size())};
    curve.data = model.training_curve;
    c.payloads.push_back(std::move(curve));
  }
  write_container(path, c);
}

TrainedModel load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  if (!c.meta.contains("kind") || c.meta["kind"] != "checkpoint") {
    fail(Errc::malformed_header, "'" + path + "' is not a checkpoint container");
  }
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!c.meta.contains(key)) {
      fail(Errc::malformed_header,
           "'" + path + "' checkpoint lacks the '" + key + "' field");
    }
    return c.meta[key];
  };

  TrainedModel model;
  CnnGruConfig& cfg = model.config;
  const std::string kind = require("model").get<std::string>();
  if (kind == "cnn_gru") {
    cfg.kind = ModelKind::cnn_gru;
  } else if (kind == "cnn_only") {
    cfg.kind = ModelKind::cnn_only;
  } else {
    fail(Errc::malformed_header, "unknown model kind '" + kind + "'");
  }
  cfg.channels = require("channels").get<int>();
  cfg.bands = require("bands").get<int>();
  cfg.kernel = require("kernel").get<int>();
  cfg.conv1_filters = require("conv1_filters").get<int>();
  cfg.gru_hidden = require("gru_hidden").get<int>();
  cfg.n_classes = require("n_classes").get<int>();
  cfg.gru_readout = require("gru_readout").get<bool>();
  cfg.p_drop = require("p_drop").get<double>();
  cfg.lr = require("lr").get<double>();
  cfg.epochs = require("epochs").get<int>();
  cfg.seed = require("seed").get<std::uint64_t>();
  cfg.validate();

  model.params = init_params(cfg);
  for (auto& [name, tensor] : named_tensors(model.params)) {
    const Payload* found = nullptr;
    for (const Payload& p : c.payloads) {
      if (p.name == name) found = &p;
    }
    if (found == nullptr) {
      fail(Errc::malformed_header,
           "'" + path + "' checkpoint lacks tensor '" + name + "'");
    }
    std::vector<int> shape;
    for (std::int64_t d : found->shape) shape.push_back(static_cast<int>(d));
    if (shape != tensor->shape) {
      fail(Errc::shape_mismatch,
           "checkpoint tensor '" + name + "' has an unexpected shape");
    }
    tensor->v = found->data;
    tensor->zero_grad();
  }
  for (const Payload& p : c.payloads) {
    if (p.name == "training_curve") model.training_curve = p.data;
  }
  return model;
}

void write_training_curve_csv(const std::string& path,
                              const std::vector<double>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot open '" + path + "' for writing");
  out << "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, curve[i]);
    out << buf;
  }
  if (!out) fail(Errc::io_error, "short write to '" + path + "'");
}

}  // namespace mi
