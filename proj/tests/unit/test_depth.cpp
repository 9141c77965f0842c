#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "relprobe/depth.hpp"

using namespace relprobe;
using namespace relprobe::depth;
using testing_helpers::error_code_of;

TEST(DepthProfile, UniformAccuraciesCentreOfMass) {
  for (int L = 2; L <= 40; ++L) {
    const std::vector<double> a(L, 0.37);
    const auto p = depth_profile(a);
    EXPECT_DOUBLE_EQ(p.com, (L - 1) / 2.0);
    EXPECT_DOUBLE_EQ(p.com_norm, 0.5);
    EXPECT_EQ(p.peak_depth, 0);
  }
}

TEST(DepthProfile, PointMassCentreOfMass) {
  for (int L = 2; L <= 12; ++L)
    for (int k = 0; k < L; ++k) {
      std::vector<double> a(L, 0.0);
      a[k] = 0.8;
      const auto p = depth_profile(a);
      EXPECT_EQ(p.com, k);
      EXPECT_EQ(p.peak_depth, k);
      EXPECT_DOUBLE_EQ(p.peak_depth_norm, static_cast<double>(k) / (L - 1));
    }
}

TEST(DepthProfile, MatchesBruteForce) {
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const int L = 2 + static_cast<int>(g() % 30);
    std::vector<double> a(L);
    for (auto& x : a) x = u(g);
    double s = 0, w = 0, peak = -1;
    int pd = 0;
    for (int l = 0; l < L; ++l) {
      s += a[l];
      w += l * a[l];
      if (a[l] > peak) peak = a[l], pd = l;
    }
    const auto p = depth_profile(a);
    EXPECT_NEAR(p.mean, s / L, 1e-12);
    EXPECT_EQ(p.peak, peak);
    EXPECT_EQ(p.peak_depth, pd);
    EXPECT_NEAR(p.com, w / s, 1e-12);
  }
}

TEST(DepthProfile, Errors) {
  EXPECT_EQ(error_code_of([] { depth_profile(std::vector<double>{0.5}); }), ErrorCode::kInsufficientData);
  EXPECT_EQ(error_code_of([] { depth_profile(std::vector<double>{0.5, 1.5}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([] { depth_profile(std::vector<double>{0.0, 0.0}); }), ErrorCode::kUndefined);
}

TEST(BlockDeltas, DifferencesAgainstPostResidual) {
  const std::map<StreamId, std::vector<double>> acc = {{StreamId::kAttentionOut, {0.2, 0.4}},
                                                       {StreamId::kMlpOut, {0.5, 0.1}},
                                                       {StreamId::kPostResidual, {0.3, 0.3}}};
  const auto d = block_deltas(acc);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_NEAR(d[0].delta_attn, -0.1, 1e-15);
  EXPECT_NEAR(d[1].delta_mlp, -0.2, 1e-15);
}

TEST(ProfileCI, PointEqualsDirectProfileAndBracketsIt) {
  std::mt19937_64 g(3);
  probe::Labels gold;
  for (int i = 0; i < 300; ++i) gold.push_back(i % 5);
  std::vector<probe::Labels> preds(6, gold);
  for (int l = 0; l < 6; ++l)
    for (auto& p : preds[l])
      if (g() % 10 < static_cast<unsigned>(2 + l % 3)) p = static_cast<int>(g() % 5);
  const auto ci = profile_ci(preds, gold, 2, 300, 9);
  std::vector<double> acc;
  for (const auto& p : preds) {
    int hit = 0, n = 0;
    for (std::size_t i = 0; i < gold.size(); ++i)
      if (gold[i] == 2) ++n, hit += p[i] == 2;
    acc.push_back(static_cast<double>(hit) / n);
  }
  const auto direct = depth_profile(acc);
  EXPECT_DOUBLE_EQ(ci.point.mean, direct.mean);
  EXPECT_DOUBLE_EQ(ci.point.com, direct.com);
  EXPECT_LE(ci.mean.lo, ci.point.mean);
  EXPECT_GE(ci.mean.hi, ci.point.mean);
  EXPECT_LE(ci.peak.lo, ci.peak.hi);
}
