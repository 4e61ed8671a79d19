#pragma once

#include <Eigen/Dense>
#include <vector>

#include "s2p/tensor.hpp"

namespace s2p {

// Gaussian fit of an embedding set, the ingredients of the Frechet distance.
struct ActivationStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // unbiased, symmetrized
  long count = 0;

  static ActivationStats from_embeddings(const Eigen::MatrixXd& rows);  // N x d
};

// Symmetric PSD square root via eigendecomposition, eigenvalues floored at 0.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m);

// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}); clamped at 0 against
// rounding. Symmetric in its arguments.
double fid(const ActivationStats& a, const ActivationStats& b);

// Windowed SSIM, 11x11 Gaussian window (sigma 1.5), C1=(0.01 L)^2,
// C2=(0.03 L)^2 with L = 2 for [-1,1] images, valid windows only, channel
// mean. Exactly 1 for identical images and exactly symmetric.
double ssim(const Tensor& a, const Tensor& b);

// exp(mean_n KL(p_n || mean marginal)); rows must sum to 1 within 1e-6.
double inception_score(const std::vector<std::vector<double>>& class_probs);

struct EmbeddingEntry {
  int id = 0;
  std::vector<float> embedding;  // unit norm
};

// Rank-k identification rates, cosine similarity, ties broken by gallery
// order (stable sort on descending score).
std::vector<double> cmc_curve(const std::vector<EmbeddingEntry>& gallery,
                              const std::vector<EmbeddingEntry>& probes, int max_rank);

struct MatchScoreSet {
  std::vector<double> genuine_scores;
  std::vector<double> impostor_scores;
};

struct RocPoint {
  double far = 0;  // false accept rate
  double tar = 0;  // true accept rate
};

// Threshold sweep from above the maximum to below the minimum score;
// includes the (0,0) and (1,1) endpoints.
std::vector<RocPoint> roc_curve(const MatchScoreSet& scores, int num_thresholds);

double roc_auc(const std::vector<RocPoint>& curve);

}  // namespace s2p
