#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "s2p/metrics.hpp"
#include "test_util.hpp"

using namespace s2p;

namespace {

Tensor constant_image(float v, int size = 16) {
  return Tensor(Shape(1, 1, size, size), v);
}

std::vector<EmbeddingEntry> unit2d(const std::vector<std::pair<int, double>>& id_angle) {
  std::vector<EmbeddingEntry> out;
  for (const auto& [id, ang] : id_angle)
    out.push_back({id, {float(std::cos(ang)), float(std::sin(ang))}});
  return out;
}

// Mann-Whitney AUC oracle: P(genuine > impostor) + 0.5 P(tie)
double auc_oracle(const MatchScoreSet& s) {
  double acc = 0;
  for (double g : s.genuine_scores)
    for (double i : s.impostor_scores) acc += g > i ? 1.0 : (g == i ? 0.5 : 0.0);
  return acc / (double(s.genuine_scores.size()) * double(s.impostor_scores.size()));
}

}  // namespace

TEST_CASE("ssim identities and symmetry are exact") {
  Rng rng(1);
  Tensor img = testutil::random_ftensor(Shape(1, 3, 16, 16), rng, 0.3f);
  CHECK(ssim(img, img) == 1.0);

  Tensor other = testutil::random_ftensor(Shape(1, 3, 16, 16), rng, 0.3f);
  CHECK(ssim(img, other) == ssim(other, img));
  CHECK(ssim(img, other) < 1.0);
  CHECK(ssim(img, other) >= -1.0);

  CHECK_THROWS_AS(ssim(img, Tensor(Shape(1, 3, 32, 32))), ArgumentError);
}

TEST_CASE("ssim constant images match the closed-form luminance term") {
  // constant fields: variance terms vanish, only luminance remains
  const double mu_a = 0.2, mu_b = 0.4, L = 2.0;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double expected = (2 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
  const double got = ssim(constant_image(0.2f), constant_image(0.4f));
  CHECK(got == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("fid oracles") {
  Rng rng(2);
  Eigen::MatrixXd rows(8, 3);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 3; ++j) rows(i, j) = rng.normal();
  const ActivationStats s = ActivationStats::from_embeddings(rows);
  CHECK(fid(s, s) == doctest::Approx(0.0).epsilon(1e-10));

  // 1-D case: means 0 and 1, equal unit variances -> exactly 1
  ActivationStats a, b;
  a.mean = Eigen::VectorXd::Zero(1);
  b.mean = Eigen::VectorXd::Ones(1);
  a.covariance = Eigen::MatrixXd::Ones(1, 1);
  b.covariance = Eigen::MatrixXd::Ones(1, 1);
  a.count = b.count = 10;
  CHECK(fid(a, b) == doctest::Approx(1.0).epsilon(1e-12));

  // symmetry within 1e-8 and non-negativity on random stats
  Eigen::MatrixXd rows2(9, 3);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 3; ++j) rows2(i, j) = rng.normal() * 2 + 1;
  const ActivationStats s2 = ActivationStats::from_embeddings(rows2);
  CHECK(std::abs(fid(s, s2) - fid(s2, s)) < 1e-8);
  CHECK(fid(s, s2) >= 0.0);

  ActivationStats wrong = s2;
  wrong.mean = Eigen::VectorXd::Zero(5);
  wrong.covariance = Eigen::MatrixXd::Identity(5, 5);
  CHECK_THROWS_AS(fid(s, wrong), ArgumentError);
}

TEST_CASE("matrix square root squares back to the input") {
  Rng rng(3);
  for (int dim : {2, 8, 64}) {
    Eigen::MatrixXd m(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) m(i, j) = rng.normal();
    Eigen::MatrixXd psd = m * m.transpose();  // PSD by construction
    const Eigen::MatrixXd r = sqrtm_psd(psd);
    const double err = (r * r - psd).cwiseAbs().maxCoeff() /
                       std::max(1.0, psd.cwiseAbs().maxCoeff());
    CHECK(err < 1e-6);
  }
}

TEST_CASE("inception score oracles") {
  // uniform rows -> exactly 1
  std::vector<std::vector<double>> uniform(6, std::vector<double>(4, 0.25));
  CHECK(inception_score(uniform) == doctest::Approx(1.0).epsilon(1e-12));

  // K distinct one-hot rows -> K
  const int k = 5;
  std::vector<std::vector<double>> onehot;
  for (int i = 0; i < k; ++i) {
    std::vector<double> row(k, 0.0);
    row[size_t(i)] = 1.0;
    onehot.push_back(row);
  }
  CHECK(inception_score(onehot) == doctest::Approx(double(k)).epsilon(1e-9));

  std::vector<std::vector<double>> bad = {{0.5, 0.4}};
  CHECK_THROWS_AS(inception_score(bad), ArgumentError);
}

TEST_CASE("cmc oracles") {
  // perfect probes -> rank-1 rate 1
  auto gallery = unit2d({{0, 0.0}, {1, 1.0}, {2, 2.0}});
  CHECK(cmc_curve(gallery, gallery, 3)[0] == doctest::Approx(1.0));

  // hand-placed 3-identity case: probe 0 lands nearest to gallery 1
  auto probes = unit2d({{0, 0.9}, {1, 1.05}, {2, 2.0}});
  const auto rates = cmc_curve(gallery, probes, 3);
  CHECK(rates[0] == doctest::Approx(2.0 / 3.0));
  CHECK(rates[1] == doctest::Approx(1.0));

  // brute-force ranking oracle on random embeddings
  Rng rng(4);
  std::vector<EmbeddingEntry> g2, p2;
  for (int i = 0; i < 6; ++i) {
    const double ang = rng.uniform(0, 6.28);
    g2.push_back({i, {float(std::cos(ang)), float(std::sin(ang))}});
    const double pang = ang + rng.uniform(-0.9, 0.9);
    p2.push_back({i, {float(std::cos(pang)), float(std::sin(pang))}});
  }
  const auto curve = cmc_curve(g2, p2, 6);
  for (size_t k = 1; k < curve.size(); ++k) CHECK(curve[k] >= curve[k - 1]);
  CHECK(curve[5] == doctest::Approx(1.0));  // rank-G with every id present
  // oracle: exhaustive sort per probe
  std::vector<double> oracle(6, 0.0);
  for (const auto& p : p2) {
    std::vector<std::pair<double, int>> scored;
    for (size_t gi = 0; gi < g2.size(); ++gi) {
      double dot = 0;
      for (int d = 0; d < 2; ++d) dot += double(g2[gi].embedding[size_t(d)]) * p.embedding[size_t(d)];
      scored.push_back({-dot, int(gi)});
    }
    std::stable_sort(scored.begin(), scored.end());
    for (size_t pos = 0; pos < scored.size(); ++pos)
      if (g2[size_t(scored[pos].second)].id == p.id) {
        for (size_t k = pos; k < 6; ++k) oracle[k] += 1.0 / 6.0;
        break;
      }
  }
  for (int k = 0; k < 6; ++k) CHECK(curve[size_t(k)] == doctest::Approx(oracle[size_t(k)]));

  // probe id missing from the gallery
  std::vector<EmbeddingEntry> stray = {{42, {1.0f, 0.0f}}};
  CHECK_THROWS_AS(cmc_curve(g2, stray, 3), DataError);
}

TEST_CASE("roc endpoints, separation, and diagonal behaviour") {
  // perfectly separated scores pass through (0, 1)
  MatchScoreSet sep;
  sep.genuine_scores = {0.9, 0.8, 0.95};
  sep.impostor_scores = {0.1, 0.2, 0.05};
  const auto curve = sep.genuine_scores.empty() ? std::vector<RocPoint>{}
                                                : roc_curve(sep, 100);
  bool through_01 = false;
  for (const auto& p : curve)
    if (p.far == 0.0 && p.tar == 1.0) through_01 = true;
  CHECK(through_01);
  CHECK(curve.front().far == 0.0);
  CHECK(curve.back().far == 1.0);
  CHECK(curve.back().tar == 1.0);
  for (size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].far >= curve[i - 1].far);
    CHECK(curve[i].tar >= curve[i - 1].tar);
  }

  // identical distributions -> area about 0.5 (Monte-Carlo oracle, 10k scores)
  Rng rng(5);
  MatchScoreSet same;
  for (int i = 0; i < 10000; ++i) {
    same.genuine_scores.push_back(rng.normal());
    same.impostor_scores.push_back(rng.normal());
  }
  const double area = roc_auc(roc_curve(same, 20001));
  CHECK(std::abs(area - 0.5) < 0.02);

  CHECK_THROWS_AS(roc_curve(MatchScoreSet{}, 10), ArgumentError);
}

TEST_CASE("reversing score sign maps area A to 1 - A") {
  Rng rng(6);
  MatchScoreSet s;
  for (int i = 0; i < 5; ++i) s.genuine_scores.push_back(rng.uniform(-1, 1));
  for (int i = 0; i < 5; ++i) s.impostor_scores.push_back(rng.uniform(-1, 1));

  const double a = roc_auc(roc_curve(s, 1000));
  CHECK(a == doctest::Approx(auc_oracle(s)).epsilon(1e-9));  // exact step curve

  MatchScoreSet neg;
  for (double v : s.genuine_scores) neg.genuine_scores.push_back(-v);
  for (double v : s.impostor_scores) neg.impostor_scores.push_back(-v);
  const double an = roc_auc(roc_curve(neg, 1000));
  CHECK(an == doctest::Approx(1.0 - a).epsilon(1e-9));
}
