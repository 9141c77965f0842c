#include <gtest/gtest.h>

#include <set>

#include "helpers.hpp"
#include "relprobe/geometry.hpp"

using namespace relprobe;
using namespace relprobe::geometry;
using testing_helpers::error_code_of;

TEST(Cosine, KnownValuesAndErrors) {
  Vector a(2), b(2), c(2);
  a << 1, 0;
  b << 0, 3;
  c << -2, 0;
  EXPECT_DOUBLE_EQ(cosine(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine(a, c), -1.0);
  EXPECT_DOUBLE_EQ(cosine(a, a * 7), 1.0);
  EXPECT_EQ(error_code_of([&] { cosine(a, Vector::Zero(2)); }), ErrorCode::kUndefined);
}

TEST(SlotLocation, EmbeddingMiddleFinal) {
  EXPECT_EQ(slot_location(LayerSlot::kEmbedding, 6), std::make_pair(StreamId::kEmbedding, 0u));
  EXPECT_EQ(slot_location(LayerSlot::kMiddle, 6), std::make_pair(StreamId::kPostResidual, 3u));
  EXPECT_EQ(slot_location(LayerSlot::kFinal, 6), std::make_pair(StreamId::kPostResidual, 5u));
}

TEST(BuildGroups, MiniFixtureAnchors) {
  const auto db = wordnet::load_wordnet(RELPROBE_MINI_WORDNET);
  const std::vector<dataset::RelationPair> pairs = {{"happy", "glad", RelationLabel::kSynonym, Pos::kAdj},
                                                    {"hot", "cold", RelationLabel::kAntonym, Pos::kAdj}};
  const auto g = build_groups(db, pairs, 100, 1);
  EXPECT_EQ(g.pairs.at(SimGroup::kSynSyn).size(), 1u);
  EXPECT_EQ(g.pairs.at(SimGroup::kAntAnt).size(), 1u);
  std::set<WordPair> syn_ant(g.pairs.at(SimGroup::kSynAnt).begin(), g.pairs.at(SimGroup::kSynAnt).end());
  const std::set<WordPair> expected = {{"chilly", "hot"}, {"glad", "sad"}, {"unhappy", "happy"}};
  EXPECT_EQ(syn_ant, expected);
  EXPECT_EQ(g.pairs.at(SimGroup::kSynRand).size(), 3u);
  EXPECT_EQ(g.pairs.at(SimGroup::kAntRand).size(), 3u);
  for (const auto& [a, b] : g.pairs.at(SimGroup::kSynRand)) EXPECT_FALSE(dataset::related(db, a, b, 10)) << a << " " << b;
  const auto words = g.words();
  EXPECT_TRUE(std::is_sorted(words.begin(), words.end()));
}

TEST(GroupSimilarity, MeanOfPairCosines) {
  std::map<std::string, Vector> v;
  auto put = [&](const std::string& w, double x, double y) {
    Vector e(2);
    e << x, y;
    v[w] = e;
  };
  put("a", 1, 0);
  put("b", 0, 1);
  put("c", 1, 1);
  GeometryGroups g;
  g.pairs[SimGroup::kSynSyn] = {{"a", "b"}, {"a", "c"}};
  for (auto grp : {SimGroup::kAntAnt, SimGroup::kSynAnt, SimGroup::kSynRand, SimGroup::kAntRand})
    g.pairs[grp] = {{"a", "a"}};
  const auto cells = group_similarity([&](const std::string& w) { return v.at(w); }, g, LayerSlot::kMiddle);
  ASSERT_EQ(cells.size(), 5u);
  EXPECT_NEAR(cells[0].mean_cos, (0.0 + 1 / std::sqrt(2.0)) / 2, 1e-15);
  EXPECT_EQ(cells[0].n_pairs, 2u);
  g.pairs[SimGroup::kAntAnt].clear();
  EXPECT_EQ(error_code_of([&] { group_similarity([&](const std::string& w) { return v.at(w); }, g, LayerSlot::kMiddle); }),
            ErrorCode::kInsufficientData);
}
