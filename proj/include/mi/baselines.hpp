#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace mi {

// Spatial filters from the generalized eigenproblem
// Sigma1 w = lambda (Sigma1 + Sigma2) w, rows normalized so
// w (Sigma1+Sigma2) w^T = 1 and sorted by eigenvalue descending:
// first `pairs` rows are the top eigenvectors, last `pairs` the bottom.
struct CspModel {
  Eigen::MatrixXd filters;      // [2*pairs x C]
  Eigen::VectorXd eigenvalues;  // [2*pairs], in [0, 1]
};

// Per-class average covariances are trace-normalized before composition.
// Throws singular_covariance when Sigma1+Sigma2 is not positive definite
// (the message suggests a ridge of 1e-8 * trace / C).
CspModel fit_csp(const std::vector<Eigen::MatrixXd>& class1_epochs,
                 const std::vector<Eigen::MatrixXd>& class2_epochs, int pairs);

// Log of normalized filtered variances: f_j = log(var_j / sum_k var_k).
Eigen::VectorXd csp_features(const Eigen::MatrixXd& epoch,
                             const CspModel& model);

// Stacks each epoch with its delay-lagged copy: [x(t); x(t-delay)] over the
// overlapping range, giving 2C x (S-delay).
Eigen::MatrixXd augment_delay(const Eigen::MatrixXd& epoch, int delay_samples);

// CSP on the delay-augmented channel space (CSSP). delay_samples must be >= 1.
CspModel fit_cssp(const std::vector<Eigen::MatrixXd>& class1_epochs,
                  const std::vector<Eigen::MatrixXd>& class2_epochs,
                  int delay_samples, int pairs);

struct LdaModel {
  Eigen::VectorXd w;
  double b = 0.0;
  // Fallback when the class means coincide (w == 0): predict the majority
  // training class.
  int majority_class = 0;
};

// w = Sigma_pooled^-1 (mu1 - mu2), b = -w^T (mu1 + mu2) / 2, with ridge
// 1e-6 * trace / dim added to the pooled covariance.
LdaModel fit_lda(const std::vector<Eigen::VectorXd>& class1,
                 const std::vector<Eigen::VectorXd>& class2);

// 0 => class1, 1 => class2 (sign of w^T x + b).
int predict_lda(const LdaModel& model, const Eigen::VectorXd& x);

// CSP/CSSP feature extraction plus LDA in one unit, as used by the harness.
struct CspLdaModel {
  CspModel csp;
  LdaModel lda;
  int delay_samples = 0;  // 0 => plain CSP
  int pairs = 0;
};

CspLdaModel fit_csp_lda(const std::vector<Eigen::MatrixXd>& class1_epochs,
                        const std::vector<Eigen::MatrixXd>& class2_epochs,
                        int pairs, int delay_samples);
int predict_csp_lda(const CspLdaModel& model, const Eigen::MatrixXd& epoch);

void save_csp_lda(const std::string& path, const CspLdaModel& model);
CspLdaModel load_csp_lda(const std::string& path);

}  // namespace mi
