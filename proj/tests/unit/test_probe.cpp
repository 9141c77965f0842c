#include <gtest/gtest.h>

#include <numeric>

#include "helpers.hpp"
#include "relprobe/probe.hpp"

using namespace relprobe;
using namespace relprobe::probe;
using testing_helpers::error_code_of;
using testing_helpers::random_matrix;
using testing_helpers::random_vector;

namespace {

// Blobs around well-separated class centres.
std::pair<Matrix, Labels> blobs(std::mt19937_64& g, int per_class, int classes, int features, double spread) {
  Matrix x(per_class * classes, features);
  Labels y;
  std::normal_distribution<double> n(0.0, spread);
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      const int r = c * per_class + i;
      for (int f = 0; f < features; ++f) x(r, f) = n(g) + (f == c % features ? 4.0 : 0.0) + (c >= features ? -4.0 : 0.0);
      y.push_back(c);
    }
  return {x, y};
}

}  // namespace

TEST(Standardizer, MatchesTwoPassMoments) {
  std::mt19937_64 g(3);
  const Matrix x = random_matrix(g, 50, 6, 3.0);
  const auto s = fit_standardizer(x);
  for (int j = 0; j < 6; ++j) {
    double mean = 0;
    for (int i = 0; i < 50; ++i) mean += x(i, j);
    mean /= 50;
    double var = 0;
    for (int i = 0; i < 50; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
    EXPECT_NEAR(s.mu(j), mean, 1e-12);
    EXPECT_NEAR(s.sigma(j), std::sqrt(var / 50), 1e-12);
  }
  const SparseRowMatrix xs = x.sparseView();
  const auto ss = fit_standardizer(xs);
  EXPECT_LT((ss.mu - s.mu).norm(), 1e-12);
  EXPECT_LT((ss.sigma - s.sigma).norm(), 1e-12);
}

TEST(Standardizer, ConstantColumnFloored) {
  Matrix x = Matrix::Ones(4, 2);
  x(0, 1) = 2;
  const auto s = fit_standardizer(x);
  EXPECT_EQ(s.sigma(0), kSigmaFloor);
}

TEST(Objective, GradientMatchesCentralDifferences) {
  std::mt19937_64 g(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(g, 20, 4);
    Labels y;
    for (int i = 0; i < 20; ++i) y.push_back(static_cast<int>(g() % 3));
    const auto s = fit_standardizer(x);
    const Objective<Matrix> obj(x, y, s, 0.7, 3);
    const Vector theta = random_vector(g, static_cast<int>(obj.dim()));
    Vector grad;
    obj.value(theta, &grad);
    Vector fd(theta.size());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Vector tp = theta, tm = theta;
      tp(i) += h;
      tm(i) -= h;
      fd(i) = (obj.value(tp, nullptr) - obj.value(tm, nullptr)) / (2 * h);
    }
    EXPECT_LE((grad - fd).norm() / std::max(grad.norm(), fd.norm()), 1e-5) << "trial " << trial;

    const SparseRowMatrix xs = x.sparseView();
    const Objective<SparseRowMatrix> sobj(xs, y, s, 0.7, 3);
    Vector sgrad;
    EXPECT_NEAR(sobj.value(theta, &sgrad), obj.value(theta, nullptr), 1e-12);
    EXPECT_LT((sgrad - grad).norm(), 1e-10);
  }
}

TEST(Objective, ValueMatchesDirectFormula) {
  std::mt19937_64 g(2);
  const Matrix x = random_matrix(g, 7, 3);
  const Labels y = {0, 1, 2, 0, 1, 2, 0};
  const auto s = fit_standardizer(x);
  const Objective<Matrix> obj(x, y, s, 1.0, 3);
  const Vector theta = random_vector(g, static_cast<int>(obj.dim()));
  const Matrix w = Eigen::Map<const Matrix>(theta.data(), 3, 3);
  const Vector b = theta.tail(3);
  double ce = 0;
  const Matrix z = s.apply(x);
  for (int i = 0; i < 7; ++i) {
    const Vector logits = w * z.row(i).transpose() + b;
    const double lse = std::log(logits.array().exp().sum());
    ce += lse - logits(y[i]);
  }
  EXPECT_NEAR(obj.value(theta, nullptr), ce / 7 + 0.5 * w.squaredNorm(), 1e-12);
}

TEST(TrainProbe, SeparableDataReachesPerfectTrainAccuracy) {
  std::mt19937_64 g(5);
  auto [x, y] = blobs(g, 40, 5, 6, 0.3);
  const auto model = train_probe(x, y, ProbeConfig{});
  EXPECT_EQ(model.info.status, TrainStatus::kConverged);
  EXPECT_EQ(predict_labels(model, x), y);
}

TEST(TrainProbe, DeterministicAndPermutationInvariant) {
  std::mt19937_64 g(8);
  auto [x, y] = blobs(g, 30, 5, 8, 1.5);
  const auto a = train_probe(x, y, ProbeConfig{});
  const auto b = train_probe(x, y, ProbeConfig{});
  EXPECT_EQ(a.w, b.w);
  EXPECT_EQ(a.b, b.b);

  std::vector<int> perm(x.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), g);
  Matrix xp(x.rows(), x.cols());
  Labels yp(y.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    xp.row(i) = x.row(perm[i]);
    yp[i] = y[perm[i]];
  }
  const auto c = train_probe(xp, yp, ProbeConfig{});
  EXPECT_LE((a.w - c.w).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE((a.b - c.b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(TrainProbe, AbsentClassNeverPredicted) {
  std::mt19937_64 g(4);
  auto [x, y] = blobs(g, 20, 3, 4, 0.5);
  const auto model = train_probe(x, y, ProbeConfig{});
  EXPECT_EQ(model.w.row(4).norm(), 0.0);
  for (int p : predict_labels(model, random_matrix(g, 100, 4, 5.0))) EXPECT_LT(p, 3);
}

TEST(TrainProbe, SparseMatchesDense) {
  std::mt19937_64 g(6);
  auto [x, y] = blobs(g, 20, 5, 6, 1.0);
  x = x.cwiseMax(0.0);
  const SparseRowMatrix xs = x.sparseView();
  const auto a = train_probe(x, y, ProbeConfig{});
  const auto b = train_probe(xs, y, ProbeConfig{});
  EXPECT_LE((a.w - b.w).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((predict_logits(a, x) - predict_logits(b, xs)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(TrainProbe, RawWeightsReproduceLogits) {
  std::mt19937_64 g(7);
  auto [x, y] = blobs(g, 15, 5, 5, 1.0);
  const auto m = train_probe(x, y, ProbeConfig{});
  const Matrix direct = (x * m.raw_weights().transpose()).rowwise() + m.raw_bias().transpose();
  EXPECT_LE((direct - predict_logits(m, x)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(TrainProbe, SaveLoadRoundTrip) {
  std::mt19937_64 g(1);
  auto [x, y] = blobs(g, 10, 5, 5, 1.0);
  const auto m = train_probe(x, y, ProbeConfig{});
  const auto back = load_probe(save_probe(m));
  EXPECT_LE((predict_logits(back, x) - predict_logits(m, x)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(back.config_hash, m.config_hash);
}

TEST(Accuracy, PerClassRecall) {
  const Labels gold = {0, 0, 1, 1, 1, 2};
  const Labels pred = {0, 1, 1, 1, 0, 2};
  const std::vector<int> cls = {0, 1, 2};
  const auto acc = per_class_accuracy(pred, gold, cls);
  EXPECT_DOUBLE_EQ(acc.at(0), 0.5);
  EXPECT_DOUBLE_EQ(acc.at(1), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(acc.at(2), 1.0);
  const std::vector<int> missing = {3};
  EXPECT_EQ(error_code_of([&] { per_class_accuracy(pred, gold, missing); }), ErrorCode::kUndefined);
}

TEST(Bootstrap, PercentileInterpolates) {
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(percentile({0, 10}, 0.25), 2.5);
}

TEST(Bootstrap, DegenerateDataGivesPointInterval) {
  const Labels gold(200, 1);
  const Labels pred = gold;
  const auto ci = bootstrap_ci([&](auto rows) { return class_recall(pred, gold, 1, rows); }, gold, 1000, 3);
  EXPECT_EQ(ci.point, 1.0);
  EXPECT_EQ(ci.lo, 1.0);
  EXPECT_EQ(ci.hi, 1.0);
}

TEST(Bootstrap, StratifiedResamplerKeepsStrataSizes) {
  const std::vector<int> strata = {0, 0, 0, 1, 1, 2};
  const StratifiedResampler r(strata, 4);
  for (int rep = 0; rep < 20; ++rep) {
    std::array<int, 3> counts{};
    for (auto i : r.replicate(rep)) counts[strata[i]]++;
    EXPECT_EQ(counts, (std::array<int, 3>{3, 2, 1}));
  }
  EXPECT_EQ(r.replicate(5), r.replicate(5));
}

TEST(Bootstrap, TooFewReplicatesRejected) {
  const Labels gold = {0, 1};
  EXPECT_THROW(bootstrap_ci([](auto) { return 0.0; }, gold, 50, 1), Error);
}
