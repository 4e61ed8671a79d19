#include "s2p/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace s2p {

ActivationStats ActivationStats::from_embeddings(const Eigen::MatrixXd& rows) {
  check_arg(rows.rows() >= 2, "need at least 2 embeddings for covariance, got ",
            rows.rows());
  ActivationStats s;
  s.count = rows.rows();
  s.mean = rows.colwise().mean();
  Eigen::MatrixXd centered = rows.rowwise() - s.mean.transpose();
  s.covariance = (centered.transpose() * centered) / double(rows.rows() - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
  return s;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
  check_arg(m.rows() == m.cols(), "sqrtm_psd: matrix must be square");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  check_arg(es.info() == Eigen::Success, "sqrtm_psd: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::sqrt(std::max(0.0, ev[i]));
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double fid(const ActivationStats& a, const ActivationStats& b) {
  check_arg(a.mean.size() == b.mean.size(), "fid: dimension mismatch: ", a.mean.size(),
            " vs ", b.mean.size());
  check_arg(a.covariance.rows() == a.mean.size() && b.covariance.rows() == b.mean.size(),
            "fid: covariance dimension mismatch");
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd sqrt_a = sqrtm_psd(a.covariance);
  const Eigen::MatrixXd cross = sqrtm_psd(sqrt_a * b.covariance * sqrt_a);
  const double trace_term =
      a.covariance.trace() + b.covariance.trace() - 2.0 * cross.trace();
  return std::max(0.0, mean_term + trace_term);
}

namespace {

std::vector<double> gaussian_window(int radius, double sigma) {
  std::vector<double> w(size_t(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    w[size_t(i + radius)] = std::exp(-double(i) * i / (2 * sigma * sigma));
    sum += w[size_t(i + radius)];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// separable valid-mode windowed mean of one channel plane
void window_mean(const std::vector<double>& src, int h, int w,
                 const std::vector<double>& win, std::vector<double>& dst) {
  const int r = int(win.size() / 2);
  const int oh = h - 2 * r, ow = w - 2 * r;
  std::vector<double> tmp(size_t(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < int(win.size()); ++i) acc += win[size_t(i)] * src[size_t(y) * w + x + i];
      tmp[size_t(y) * ow + x] = acc;
    }
  dst.assign(size_t(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < int(win.size()); ++i) acc += win[size_t(i)] * tmp[size_t(y + i) * ow + x];
      dst[size_t(y) * ow + x] = acc;
    }
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  const Shape& s = a.shape();
  check_arg(s == b.shape(), "ssim: shape mismatch ", s.str(), " vs ", b.shape().str());
  check_arg(s.n == 1, "ssim: expects single images");
  check_arg(s.h >= 11 && s.w >= 11, "ssim: images must be at least 11x11");
  const double L = 2.0;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  const auto win = gaussian_window(5, 1.5);
  const std::int64_t plane = std::int64_t(s.h) * s.w;

  double total = 0;
  for (int c = 0; c < s.c; ++c) {
    const size_t np = static_cast<size_t>(plane);
    std::vector<double> pa(np), pb(np), paa(np), pbb(np), pab(np);
    for (std::int64_t i = 0; i < plane; ++i) {
      const double va = double(a.data()[c * plane + i]);
      const double vb = double(b.data()[c * plane + i]);
      pa[size_t(i)] = va;
      pb[size_t(i)] = vb;
      paa[size_t(i)] = va * va;
      pbb[size_t(i)] = vb * vb;
      pab[size_t(i)] = va * vb;
    }
    std::vector<double> mu_a, mu_b, m_aa, m_bb, m_ab;
    window_mean(pa, s.h, s.w, win, mu_a);
    window_mean(pb, s.h, s.w, win, mu_b);
    window_mean(paa, s.h, s.w, win, m_aa);
    window_mean(pbb, s.h, s.w, win, m_bb);
    window_mean(pab, s.h, s.w, win, m_ab);
    double acc = 0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double va = m_aa[i] - mu_a[i] * mu_a[i];
      const double vb = m_bb[i] - mu_b[i] * mu_b[i];
      const double vab = m_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * vab + c2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
      acc += num / den;
    }
    total += acc / double(mu_a.size());
  }
  return total / double(s.c);
}

double inception_score(const std::vector<std::vector<double>>& class_probs) {
  check_arg(!class_probs.empty(), "inception_score: no probability rows");
  const size_t k = class_probs.front().size();
  check_arg(k >= 1, "inception_score: empty rows");
  std::vector<double> marginal(k, 0.0);
  for (const auto& row : class_probs) {
    check_arg(row.size() == k, "inception_score: ragged rows");
    double sum = 0;
    for (double p : row) {
      check_arg(p >= -1e-12, "inception_score: negative probability");
      sum += p;
    }
    check_arg(std::abs(sum - 1.0) <= 1e-6, "inception_score: row does not sum to 1: ", sum);
    for (size_t i = 0; i < k; ++i) marginal[i] += row[i];
  }
  for (auto& m : marginal) m /= double(class_probs.size());
  double mean_kl = 0;
  for (const auto& row : class_probs) {
    double kl = 0;
    for (size_t i = 0; i < k; ++i)
      if (row[i] > 0) kl += row[i] * std::log(row[i] / std::max(marginal[i], 1e-300));
    mean_kl += kl;
  }
  mean_kl /= double(class_probs.size());
  return std::exp(mean_kl);
}

std::vector<double> cmc_curve(const std::vector<EmbeddingEntry>& gallery,
                              const std::vector<EmbeddingEntry>& probes, int max_rank) {
  check_arg(!gallery.empty() && !probes.empty(), "cmc_curve: empty gallery or probe set");
  check_arg(max_rank >= 1, "cmc_curve: max_rank must be >= 1");
  max_rank = std::min<int>(max_rank, int(gallery.size()));
  std::set<int> gallery_ids;
  for (const auto& g : gallery) gallery_ids.insert(g.id);
  for (const auto& p : probes)
    if (!gallery_ids.count(p.id))
      throw DataError(cat("probe id ", p.id, " absent from gallery"));

  std::vector<long> hits(static_cast<size_t>(max_rank), 0);
  for (const auto& p : probes) {
    std::vector<std::pair<double, int>> scored;  // (-score, gallery index)
    for (size_t gi = 0; gi < gallery.size(); ++gi) {
      check_arg(gallery[gi].embedding.size() == p.embedding.size(),
                "cmc_curve: embedding dimension mismatch");
      double dot = 0;
      for (size_t d = 0; d < p.embedding.size(); ++d)
        dot += double(gallery[gi].embedding[d]) * double(p.embedding[d]);
      scored.emplace_back(-dot, int(gi));
    }
    std::stable_sort(scored.begin(), scored.end());
    int rank = -1;
    for (size_t pos = 0; pos < scored.size(); ++pos)
      if (gallery[size_t(scored[pos].second)].id == p.id) {
        rank = int(pos);
        break;
      }
    for (int k = rank; k < max_rank; ++k)
      if (k >= 0) ++hits[size_t(k)];
  }
  std::vector<double> rates(static_cast<size_t>(max_rank));
  for (int k = 0; k < max_rank; ++k) rates[size_t(k)] = double(hits[size_t(k)]) / double(probes.size());
  return rates;
}

std::vector<RocPoint> roc_curve(const MatchScoreSet& scores, int num_thresholds) {
  check_arg(!scores.genuine_scores.empty() && !scores.impostor_scores.empty(),
            "roc_curve: both score lists must be non-empty");
  check_arg(num_thresholds >= 1, "roc_curve: need at least one threshold");

  std::vector<double> genuine = scores.genuine_scores;
  std::vector<double> impostor = scores.impostor_scores;
  std::sort(genuine.begin(), genuine.end());
  std::sort(impostor.begin(), impostor.end());

  std::vector<double> pool;
  pool.reserve(genuine.size() + impostor.size());
  pool.insert(pool.end(), genuine.begin(), genuine.end());
  pool.insert(pool.end(), impostor.begin(), impostor.end());
  std::sort(pool.begin(), pool.end(), std::greater<double>());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

  std::vector<double> thresholds;
  if (int(pool.size()) <= num_thresholds) {
    thresholds = pool;
  } else {
    for (int i = 0; i < num_thresholds; ++i) {
      const size_t idx = size_t(std::llround(double(i) * double(pool.size() - 1) /
                                             double(num_thresholds - 1)));
      thresholds.push_back(pool[idx]);
    }
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  }

  auto frac_at_least = [](const std::vector<double>& sorted, double t) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
    return double(sorted.end() - it) / double(sorted.size());
  };

  std::vector<RocPoint> curve;
  curve.push_back({0.0, 0.0});  // threshold above every score
  for (double t : thresholds)
    curve.push_back({frac_at_least(impostor, t), frac_at_least(genuine, t)});
  curve.push_back({1.0, 1.0});  // threshold below every score
  return curve;
}

double roc_auc(const std::vector<RocPoint>& curve) {
  check_arg(curve.size() >= 2, "roc_auc: need at least two points");
  double auc = 0;
  for (size_t i = 1; i < curve.size(); ++i)
    auc += (curve[i].far - curve[i - 1].far) * (curve[i].tar + curve[i - 1].tar) * 0.5;
  return auc;
}

}  // namespace s2p
