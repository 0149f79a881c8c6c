#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "gotham/losses.hpp"
#include "gotham/tape.hpp"
#include "helpers.hpp"

using namespace gotham;
using testutil::random_matrix;

namespace {

// Straight per-term restatements of each loss.
double oracle_cluster(const Matrix& e, const std::vector<int>& owner, const Matrix& p, double gamma, bool squared) {
  std::map<int, std::vector<double>> h;
  for (std::size_t i = 0; i < owner.size(); ++i) {
    double d = 0;
    for (Eigen::Index k = 0; k < e.cols(); ++k) d += (e(i, k) - p(owner[i], k)) * (e(i, k) - p(owner[i], k));
    h[owner[i]].push_back(std::max(std::sqrt(d) - gamma, 0.0));
  }
  double total = 0;
  for (const auto& [c, hs] : h) {
    double s = 0, s2 = 0;
    for (double v : hs) s += v, s2 += v * v;
    if (squared)
      total += s > 0 ? s2 / s : 0;
    else
      total += s / hs.size();
  }
  return total / h.size();
}

double oracle_seg(const Matrix& p, double eps) {
  double s = 0;
  for (Eigen::Index j = 0; j < p.rows(); ++j)
    for (Eigen::Index q = 0; q < p.rows(); ++q)
      if (j != q) s += std::log(std::max((p.row(j) - p.row(q)).norm(), eps));
  return -s / p.rows();
}

double oracle_align(const Matrix& t, const Matrix& s) {
  double total = 0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    double dot = 0, nt = 0, ns = 0;
    for (Eigen::Index k = 0; k < t.cols(); ++k) {
      dot += t(i, k) * s(i, k);
      nt += t(i, k) * t(i, k);
      ns += s(i, k) * s(i, k);
    }
    total += 1 - dot / std::sqrt(nt * ns);
  }
  return total / t.rows();
}

Matrix rows2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST(LossCluster, ZeroInsideBoundary) {
  Matrix p(2, 3);
  p << 0, 0, 0, 5, 5, 5;
  Matrix e = p;
  e(0, 0) += 0.005;
  e(1, 2) -= 0.01;
  const std::vector<int> owner{0, 1};
  EXPECT_EQ(loss_cluster(e, owner, p, 0.01), 0.0);
  EXPECT_EQ(loss_cluster(e, owner, p, 0.01, ClusterVariant::self_normalized), 0.0);
}

TEST(LossCluster, OneSampleAtGammaPlusOne) {
  const double gamma = 0.01;
  Matrix p = Matrix::Zero(1, 2);
  Matrix e(1, 2);
  e << 0, gamma + 1;
  EXPECT_NEAR(loss_cluster(e, {0}, p, gamma), 1.0, 1e-15);
}

TEST(LossCluster, MatchesPerTermOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix p = random_matrix(2, 4, seed);
    const Matrix e = random_matrix(6, 4, seed + 100);
    const std::vector<int> owner{0, 0, 0, 1, 1, 1};
    EXPECT_NEAR(loss_cluster(e, owner, p, 0.3), oracle_cluster(e, owner, p, 0.3, false), 1e-12);
    EXPECT_NEAR(loss_cluster(e, owner, p, 0.3, ClusterVariant::self_normalized),
                oracle_cluster(e, owner, p, 0.3, true), 1e-12);
  }
}

TEST(LossCluster, LiteralFormSumsToOnePerClass) {
  const Matrix p = random_matrix(3, 4, 1);
  const Matrix e = random_matrix(7, 4, 2);
  const std::vector<int> owner{0, 0, 1, 1, 1, 2, 2};
  for (double s : literal_cluster_class_sums(e, owner, p, 0.01)) EXPECT_NEAR(s, 1.0, 1e-12);
  // A class whose samples all sit inside the boundary sums to 0.
  Matrix inside = e;
  inside.row(0) = p.row(0);
  inside.row(1) = p.row(0);
  EXPECT_EQ(literal_cluster_class_sums(inside, owner, p, 0.01)[0], 0.0);
}

TEST(LossSeg, AnalyticValues) {
  const double e = std::exp(1.0);
  EXPECT_NEAR(loss_seg(rows2(0, 0, e, 0), 1e-8), -1.0, 1e-12);
  EXPECT_NEAR(loss_seg(rows2(0, 0, 0.6, 0.8), 1e-8), 0.0, 1e-15);
  const double eps = 1e-8;
  const double coincident = loss_seg(rows2(1, 2, 1, 2), eps);
  EXPECT_TRUE(std::isfinite(coincident));
  EXPECT_NEAR(coincident, -std::log(eps) * 2 / 2, 1e-9);
  bool warned = false;
  EXPECT_EQ(loss_seg(Matrix::Ones(1, 3), eps, &warned), 0.0);
  EXPECT_TRUE(warned);
}

TEST(LossSeg, MatchesOracleAndDecreasesWithDistance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix p = random_matrix(4, 3, seed);
    EXPECT_NEAR(loss_seg(p, 1e-8), oracle_seg(p, 1e-8), 1e-12);
  }
  double prev = loss_seg(rows2(0, 0, 0.01, 0), 1e-8);
  for (double d = 0.02; d < 50; d *= 1.7) {
    const double cur = loss_seg(rows2(0, 0, d, 0), 1e-8);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(LossSem, Values) {
  const Matrix p = random_matrix(3, 2, 4);
  EXPECT_EQ(loss_sem(p, p), 0.0);
  Matrix one = Matrix::Zero(1, 2), off(1, 2);
  off << 3, 4;
  EXPECT_DOUBLE_EQ(loss_sem(off, one), 5.0);
  const Matrix a = random_matrix(4, 6, 5), b = random_matrix(4, 6, 6);
  double want = 0;
  for (int j = 0; j < 4; ++j) {
    double s = 0;
    for (int k = 0; k < 6; ++k) s += (a(j, k) - b(j, k)) * (a(j, k) - b(j, k));
    want += std::sqrt(s);
  }
  EXPECT_NEAR(loss_sem(a, b), want, 1e-12);
}

TEST(LossKdEmb, Values) {
  const Matrix t = random_matrix(5, 3, 1);
  EXPECT_EQ(loss_kd_emb(t, t), 0.0);
  Matrix s = Matrix::Zero(2, 2), u(2, 2);
  u << 1, 0, 0, 1;
  EXPECT_DOUBLE_EQ(loss_kd_emb(u, s), 1.0);
  const Matrix a = random_matrix(6, 4, 2), b = random_matrix(6, 4, 3);
  double want = 0;
  for (int i = 0; i < 6; ++i) {
    double d = 0;
    for (int k = 0; k < 4; ++k) d += (a(i, k) - b(i, k)) * (a(i, k) - b(i, k));
    want += std::sqrt(d);
  }
  EXPECT_NEAR(loss_kd_emb(a, b), want / 6, 1e-12);
  EXPECT_EQ(loss_kd_emb(Matrix(0, 3), Matrix(0, 3)), 0.0);
}

TEST(LossKdAlign, AnalyticValues) {
  Matrix v(1, 2), w(1, 2), neg(1, 2);
  v << 0.3, 0.4;
  w << -4, 3;
  neg = -v;
  EXPECT_NEAR(loss_kd_align(v, v, 1e-8), 0.0, 1e-12);
  EXPECT_NEAR(loss_kd_align(v, w, 1e-8), 1.0, 1e-12);
  EXPECT_NEAR(loss_kd_align(v, neg, 1e-8), 2.0, 1e-12);
  EXPECT_EQ(loss_kd_align(v, Matrix::Zero(1, 2), 1e-8), 1.0);
  const Matrix a = random_matrix(5, 3, 7), b = random_matrix(5, 3, 8);
  EXPECT_NEAR(loss_kd_align(a, b, 1e-8), oracle_align(a, b), 1e-12);
}

TEST(LossTotals, WeightsAndComposition) {
  const LossWeights w;
  EXPECT_EQ(w.alpha1, 1.0);
  EXPECT_EQ(w.alpha2, 0.25);
  EXPECT_EQ(w.alpha3, 1.0);
  EXPECT_EQ(w.lambda1, 1.0);
  EXPECT_EQ(w.lambda2, 1.0);
  EXPECT_EQ(w.gamma, 0.01);
  EXPECT_EQ(loss_train_total(LossValues{}, w, true), 0.0);
  EXPECT_EQ(loss_finetune_total(LossValues{}, w, true), 0.0);

  LossWeights r;
  r.alpha1 = 0.7;
  r.alpha2 = 1.3;
  r.alpha3 = 0.2;
  r.alpha4 = 2.5;
  r.lambda1 = 0.4;
  r.lambda2 = 1.1;
  const LossValues v{1.5, -2.0, 0.75, 3.0, 0.5};
  const double train = 0.7 * 1.5 + 1.3 * -2.0 + 0.2 * 0.75;
  EXPECT_DOUBLE_EQ(loss_train_total(v, r, true), train);
  EXPECT_DOUBLE_EQ(loss_train_total(v, r, false), 0.7 * 1.5 + 1.3 * -2.0);
  EXPECT_DOUBLE_EQ(loss_finetune_total(v, r, true), train + 2.5 * (0.4 * 3.0 + 1.1 * 0.5));
  EXPECT_DOUBLE_EQ(loss_finetune_total(v, r, false), 0.7 * 1.5 + 1.3 * -2.0 + 2.5 * 0.4 * 3.0);
  r.alpha4 = 0;
  EXPECT_EQ(loss_finetune_total(v, r, true), loss_train_total(v, r, true));
}

TEST(LossTotals, TapeRouteMatchesValues) {
  ad::Tape tape;
  const Matrix p = random_matrix(3, 4, 1), e = random_matrix(6, 4, 2), enc = random_matrix(3, 4, 3);
  const Matrix t = random_matrix(5, 4, 4), s = random_matrix(5, 4, 5);
  const std::vector<int> owner{0, 0, 1, 1, 2, 2};
  LossParts parts;
  parts.cls = loss_cluster(tape, tape.constant(e), owner, tape.constant(p), 0.01);
  parts.seg = loss_seg(tape, tape.constant(p), 1e-8);
  parts.sem = loss_sem(tape, tape.constant(enc), tape.constant(p));
  parts.emb = loss_kd_emb(tape, t, tape.constant(s));
  parts.align = loss_kd_align(tape, t, tape.constant(s), 1e-8);
  const LossValues v{loss_cluster(e, owner, p, 0.01), loss_seg(p, 1e-8), loss_sem(enc, p), loss_kd_emb(t, s),
                     loss_kd_align(t, s, 1e-8)};
  LossWeights w;
  EXPECT_NEAR(loss_train_total(tape, parts, w, true).scalar(), loss_train_total(v, w, true), 1e-12);
  EXPECT_NEAR(loss_finetune_total(tape, parts, w, true).scalar(), loss_finetune_total(v, w, true), 1e-12);
  EXPECT_NEAR(loss_finetune_total(tape, parts, w, false).scalar(), loss_finetune_total(v, w, false), 1e-12);
}

TEST(LossProperties, BoundsOverRandomInputs) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Matrix p = random_matrix(3, 4, seed), e = random_matrix(9, 4, seed + 50);
    const std::vector<int> owner{0, 0, 0, 1, 1, 1, 2, 2, 2};
    EXPECT_GE(loss_cluster(e, owner, p, 0.01), 0.0);
    EXPECT_GE(loss_cluster(e, owner, p, 0.01, ClusterVariant::self_normalized), 0.0);
    EXPECT_GE(loss_sem(e.topRows(3), p), 0.0);
    EXPECT_GE(loss_kd_emb(e, e.reverse()), 0.0);
    const double a = loss_kd_align(e, e.reverse(), 1e-8);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 2.0);
  }
}

TEST(LossProperties, TranslationInvariance) {
  // Dyadic values keep every subtraction exact.
  Matrix p(2, 3), e(4, 3);
  p << 0.5, -1.25, 2, 3.75, 0.125, -0.5;
  e << 1, 0.25, -0.75, 0.5, -1, 2.5, 4, 1.5, 0, 2.25, -0.375, -1;
  const std::vector<int> owner{0, 0, 1, 1};
  RowVector c(3);
  c << 8, -16, 0.5;
  const Matrix pc = p.rowwise() + c, ec = e.rowwise() + c;
  EXPECT_EQ(loss_cluster(e, owner, p, 0.01), loss_cluster(ec, owner, pc, 0.01));
  EXPECT_EQ(loss_cluster(e, owner, p, 0.01, ClusterVariant::self_normalized),
            loss_cluster(ec, owner, pc, 0.01, ClusterVariant::self_normalized));
  EXPECT_EQ(loss_seg(p, 1e-8), loss_seg(pc, 1e-8));
}

TEST(LossWeights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.gamma = -1;
  EXPECT_THROW(w.validate(), ValidationError);
  w = LossWeights();
  w.epsilon_log = 0;
  EXPECT_THROW(w.validate(), ValidationError);
  w = LossWeights();
  w.alpha2 = -0.1;
  EXPECT_THROW(w.validate(), ValidationError);
}

TEST(LossLog, JsonLineFields) {
  std::ostringstream out;
  LossRecord r;
  r.step = 3;
  r.session = 1;
  r.parts = {0.5, -1, 0.25, 2, 0.125};
  r.total = 9.5;
  write_loss_record(out, r);
  const std::string line = out.str();
  ASSERT_EQ(line.back(), '\n');
  EXPECT_EQ(std::count(line.begin(), line.end(), '\n'), 1);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["step"], 3);
  EXPECT_EQ(j["session"], 1);
  EXPECT_EQ(j["l_cls"], 0.5);
  EXPECT_EQ(j["l_seg"], -1.0);
  EXPECT_EQ(j["l_sem"], 0.25);
  EXPECT_EQ(j["l_emb"], 2.0);
  EXPECT_EQ(j["l_align"], 0.125);
  EXPECT_EQ(j["total"], 9.5);
}
