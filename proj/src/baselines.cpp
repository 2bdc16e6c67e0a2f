#include "mi/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mi/container.hpp"
#include "mi/errors.hpp"

namespace mi {

namespace {

Eigen::MatrixXd mean_covariance(const std::vector<Eigen::MatrixXd>& epochs,
                                const char* which) {
  if (epochs.size() < 2) {
    fail(Errc::empty_dataset, std::string("CSP needs >= 2 epochs per class; ") +
                                  which + " has " + std::to_string(epochs.size()));
  }
  const Eigen::Index channels = epochs.front().rows();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(channels, channels);
  for (const Eigen::MatrixXd& e : epochs) {
    if (e.rows() != channels) {
      fail(Errc::shape_mismatch, "CSP epochs disagree on channel count");
    }
    if (e.cols() < 2) {
      fail(Errc::degenerate_window, "CSP epoch shorter than two samples");
    }
    const Eigen::VectorXd mean = e.rowwise().mean();
    const Eigen::MatrixXd centered = e.colwise() - mean;
    acc += centered * centered.transpose();
  }
  acc /= static_cast<double>(epochs.size());
  const double trace = acc.trace();
  if (!(trace > 0.0) || !std::isfinite(trace)) {
    fail(Errc::singular_covariance,
         std::string(which) + " class covariance has non-positive trace");
  }
  return acc / trace;
}

// Flips each column so its first entry of magnitude > 1e-12 is positive;
// eigenvector sign is otherwise arbitrary and would break reproducibility.
void normalize_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      const double v = vectors(r, c);
      if (std::abs(v) > 1e-12) {
        if (v < 0.0) vectors.col(c) = -vectors.col(c);
        break;
      }
    }
  }
}

}  // namespace

CspModel fit_csp(const std::vector<Eigen::MatrixXd>& class1_epochs,
                 const std::vector<Eigen::MatrixXd>& class2_epochs, int pairs) {
  const Eigen::MatrixXd sigma1 = mean_covariance(class1_epochs, "class 1");
  const Eigen::MatrixXd sigma2 = mean_covariance(class2_epochs, "class 2");
  if (sigma1.rows() != sigma2.rows()) {
    fail(Errc::shape_mismatch, "CSP classes disagree on channel count");
  }
  const Eigen::Index channels = sigma1.rows();
  if (pairs < 1 || 2 * pairs > channels) {
    fail(Errc::invalid_config, "CSP pairs must satisfy 1 <= pairs <= C/2, got " +
                                   std::to_string(pairs) + " with C = " +
                                   std::to_string(channels));
  }

  const Eigen::MatrixXd composite = sigma1 + sigma2;
  {
    Eigen::LLT<Eigen::MatrixXd> llt(composite);
    if (llt.info() != Eigen::Success) {
      fail(Errc::singular_covariance,
           "composite covariance is not positive definite; consider a ridge of "
           "1e-8 * trace / C on each class covariance");
    }
  }

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      sigma1, composite, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (solver.info() != Eigen::Success) {
    fail(Errc::singular_covariance, "generalized eigensolver did not converge");
  }
  Eigen::VectorXd lambda = solver.eigenvalues();   // ascending
  Eigen::MatrixXd vectors = solver.eigenvectors();  // w^T B w = 1 columns
  normalize_signs(vectors);

  // Deterministic order: eigenvalue descending, exact ties broken by the
  // lexicographic order of the sign-normalized eigenvector entries.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(channels));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (lambda[a] != lambda[b]) return lambda[a] > lambda[b];
    for (Eigen::Index r = 0; r < channels; ++r) {
      if (vectors(r, a) != vectors(r, b)) return vectors(r, a) < vectors(r, b);
    }
    return false;
  });

  CspModel model;
  model.filters.resize(2 * pairs, channels);
  model.eigenvalues.resize(2 * pairs);
  for (int i = 0; i < pairs; ++i) {
    model.filters.row(i) = vectors.col(order[static_cast<std::size_t>(i)]).transpose();
    model.eigenvalues[i] = lambda[order[static_cast<std::size_t>(i)]];
  }
  for (int i = 0; i < pairs; ++i) {
    const std::size_t src = static_cast<std::size_t>(channels - pairs + i);
    model.filters.row(pairs + i) = vectors.col(order[src]).transpose();
    model.eigenvalues[pairs + i] = lambda[order[src]];
  }
  return model;
}

Eigen::VectorXd csp_features(const Eigen::MatrixXd& epoch,
                             const CspModel& model) {
  if (epoch.rows() != model.filters.cols()) {
    fail(Errc::shape_mismatch, "epoch channel count does not match the filters");
  }
  if (epoch.cols() < 2) {
    fail(Errc::degenerate_window, "epoch shorter than two samples");
  }
  const Eigen::MatrixXd projected = model.filters * epoch;
  const Eigen::Index n_filters = projected.rows();
  Eigen::VectorXd variances(n_filters);
  for (Eigen::Index i = 0; i < n_filters; ++i) {
    const double mean = projected.row(i).mean();
    variances[i] =
        (projected.row(i).array() - mean).square().sum() /
        static_cast<double>(projected.cols() - 1);
  }
  const double total = variances.sum();
  if (!(total > 0.0)) {
    fail(Errc::degenerate_window, "all filtered variances vanish");
  }
  Eigen::VectorXd features(n_filters);
  for (Eigen::Index i = 0; i < n_filters; ++i) {
    if (!(variances[i] > 0.0)) {
      fail(Errc::degenerate_window, "a filtered variance vanishes");
    }
    features[i] = std::log(variances[i] / total);
  }
  return features;
}

Eigen::MatrixXd augment_delay(const Eigen::MatrixXd& epoch, int delay_samples) {
  if (delay_samples < 1) {
    fail(Errc::invalid_config, "delay must be >= 1 sample, got " +
                                   std::to_string(delay_samples));
  }
  if (epoch.cols() <= delay_samples) {
    fail(Errc::shape_mismatch, "epoch of " + std::to_string(epoch.cols()) +
                                   " samples cannot carry a delay of " +
                                   std::to_string(delay_samples));
  }
  const Eigen::Index channels = epoch.rows();
  const Eigen::Index span = epoch.cols() - delay_samples;
  Eigen::MatrixXd out(2 * channels, span);
  out.topRows(channels) = epoch.rightCols(span);   // x(t)
  out.bottomRows(channels) = epoch.leftCols(span);  // x(t - delay)
  return out;
}

CspModel fit_cssp(const std::vector<Eigen::MatrixXd>& class1_epochs,
                  const std::vector<Eigen::MatrixXd>& class2_epochs,
                  int delay_samples, int pairs) {
  std::vector<Eigen::MatrixXd> aug1, aug2;
  aug1.reserve(class1_epochs.size());
  aug2.reserve(class2_epochs.size());
  for (const Eigen::MatrixXd& e : class1_epochs) {
    aug1.push_back(augment_delay(e, delay_samples));
  }
  for (const Eigen::MatrixXd& e : class2_epochs) {
    aug2.push_back(augment_delay(e, delay_samples));
  }
  return fit_csp(aug1, aug2, pairs);
}

LdaModel fit_lda(const std::vector<Eigen::VectorXd>& class1,
                 const std::vector<Eigen::VectorXd>& class2) {
  if (class1.empty() || class2.empty()) {
    fail(Errc::empty_dataset, "LDA needs examples of both classes");
  }
  const Eigen::Index dim = class1.front().size();
  auto mean_of = [&](const std::vector<Eigen::VectorXd>& xs) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(dim);
    for (const Eigen::VectorXd& x : xs) {
      if (x.size() != dim) {
        fail(Errc::shape_mismatch, "LDA features disagree on dimension");
      }
      mu += x;
    }
    return Eigen::VectorXd(mu / static_cast<double>(xs.size()));
  };
  const Eigen::VectorXd mu1 = mean_of(class1);
  const Eigen::VectorXd mu2 = mean_of(class2);

  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(dim, dim);
  for (const Eigen::VectorXd& x : class1) {
    const Eigen::VectorXd d = x - mu1;
    scatter += d * d.transpose();
  }
  for (const Eigen::VectorXd& x : class2) {
    const Eigen::VectorXd d = x - mu2;
    scatter += d * d.transpose();
  }
  const std::size_t n = class1.size() + class2.size();
  Eigen::MatrixXd pooled =
      n > 2 ? Eigen::MatrixXd(scatter / static_cast<double>(n - 2))
            : Eigen::MatrixXd(scatter);
  const double ridge =
      1e-6 * (pooled.trace() > 0.0 ? pooled.trace() : 1.0) / static_cast<double>(dim);
  pooled += ridge * Eigen::MatrixXd::Identity(dim, dim);

  LdaModel model;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(pooled);
  if (ldlt.info() != Eigen::Success) {
    fail(Errc::singular_covariance, "pooled covariance factorization failed");
  }
  model.w = ldlt.solve(mu1 - mu2);
  if (!model.w.allFinite()) {
    fail(Errc::singular_covariance, "LDA weights are not finite");
  }
  model.b = -0.5 * model.w.dot(mu1 + mu2);
  model.majority_class = class1.size() >= class2.size() ? 0 : 1;
  return model;
}

int predict_lda(const LdaModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.w.size()) {
    fail(Errc::shape_mismatch, "LDA input dimension mismatch");
  }
  if (model.w.lpNorm<Eigen::Infinity>() == 0.0) return model.majority_class;
  const double score = model.w.dot(x) + model.b;
  return score > 0.0 ? 0 : 1;
}

CspLdaModel fit_csp_lda(const std::vector<Eigen::MatrixXd>& class1_epochs,
                        const std::vector<Eigen::MatrixXd>& class2_epochs,
                        int pairs, int delay_samples) {
  CspLdaModel model;
  model.pairs = pairs;
  model.delay_samples = delay_samples;
  model.csp = delay_samples > 0
                  ? fit_cssp(class1_epochs, class2_epochs, delay_samples, pairs)
                  : fit_csp(class1_epochs, class2_epochs, pairs);

  std::vector<Eigen::VectorXd> f1, f2;
  f1.reserve(class1_epochs.size());
  f2.reserve(class2_epochs.size());
  for (const Eigen::MatrixXd& e : class1_epochs) {
    f1.push_back(csp_features(
        model.delay_samples > 0 ? augment_delay(e, model.delay_samples) : e,
        model.csp));
  }
  for (const Eigen::MatrixXd& e : class2_epochs) {
    f2.push_back(csp_features(
        model.delay_samples > 0 ? augment_delay(e, model.delay_samples) : e,
        model.csp));
  }
  model.lda = fit_lda(f1, f2);
  return model;
}

int predict_csp_lda(const CspLdaModel& model, const Eigen::MatrixXd& epoch) {
  const Eigen::MatrixXd input =
      model.delay_samples > 0 ? augment_delay(epoch, model.delay_samples)
                              : epoch;
  return predict_lda(model.lda, csp_features(input, model.csp));
}

void save_csp_lda(const std::string& path, const CspLdaModel& model) {
  Container c;
  c.meta["kind"] = "csp_lda";
  c.meta["pairs"] = model.pairs;
  c.meta["delay_samples"] = model.delay_samples;
  c.meta["majority_class"] = model.lda.majority_class;
  c.meta["bias"] = model.lda.b;

  Payload filters;
  filters.name = "csp.filters";
  filters.shape = {model.csp.filters.rows(), model.csp.filters.cols()};
  filters.data.resize(static_cast<std::size_t>(model.csp.filters.size()));
  for (Eigen::Index i = 0; i < model.csp.filters.rows(); ++i) {
    for (Eigen::Index j = 0; j < model.csp.filters.cols(); ++j) {
      filters.data[static_cast<std::size_t>(i) * model.csp.filters.cols() + j] =
          model.csp.filters(i, j);
    }
  }
  c.payloads.push_back(std::move(filters));

  Payload lambda;
  lambda.name = "csp.eigenvalues";
  lambda.shape = {model.csp.eigenvalues.size()};
  lambda.data.assign(model.csp.eigenvalues.data(),
                     model.csp.eigenvalues.data() + model.csp.eigenvalues.size());
  c.payloads.push_back(std::move(lambda));

  Payload w;
  w.name = "lda.w";
  w.shape = {model.lda.w.size()};
  w.data.assign(model.lda.w.data(), model.lda.w.data() + model.lda.w.size());
  c.payloads.push_back(std::move(w));

  write_container(path, c);
}

CspLdaModel load_csp_lda(const std::string& path) {
  Container c = read_container(path);
  if (!c.meta.contains("kind") || c.meta["kind"] != "csp_lda") {
    fail(Errc::malformed_header, "'" + path + "' is not a csp_lda container");
  }
  CspLdaModel model;
  model.pairs = c.meta.value("pairs", 0);
  model.delay_samples = c.meta.value("delay_samples", 0);
  model.lda.majority_class = c.meta.value("majority_class", 0);
  model.lda.b = c.meta.value("bias", 0.0);

  const Payload* filters = nullptr;
  const Payload* lambda = nullptr;
  const Payload* w = nullptr;
  for (const Payload& p : c.payloads) {
    if (p.name == "csp.filters") filters = &p;
    if (p.name == "csp.eigenvalues") lambda = &p;
    if (p.name == "lda.w") w = &p;
  }
  if (filters == nullptr || filters->shape.size() != 2 || lambda == nullptr ||
      lambda->shape.size() != 1 || w == nullptr || w->shape.size() != 1) {
    fail(Errc::malformed_header, "'" + path + "' lacks csp_lda payloads");
  }
  model.csp.filters.resize(filters->shape[0], filters->shape[1]);
  for (Eigen::Index i = 0; i < model.csp.filters.rows(); ++i) {
    for (Eigen::Index j = 0; j < model.csp.filters.cols(); ++j) {
      model.csp.filters(i, j) =
          filters->data[static_cast<std::size_t>(i) * model.csp.filters.cols() + j];
    }
  }
  model.csp.eigenvalues =
      Eigen::Map<const Eigen::VectorXd>(lambda->data.data(),
                                        static_cast<Eigen::Index>(lambda->data.size()));
  model.lda.w = Eigen::Map<const Eigen::VectorXd>(
      w->data.data(), static_cast<Eigen::Index>(w->data.size()));
  return model;
}

}  // namespace mi
