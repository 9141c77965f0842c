#include <gtest/gtest.h>

#include <set>

#include "helpers.hpp"
#include "relprobe/dataset.hpp"
#include "relprobe/wordnet.hpp"

using namespace relprobe;
using namespace relprobe::dataset;
using testing_helpers::error_code_of;

namespace {

const wordnet::LexicalDB& mini() {
  static const auto db = wordnet::load_wordnet(RELPROBE_MINI_WORDNET);
  return db;
}

DatasetConfig mini_config(std::uint64_t seed) {
  DatasetConfig c;
  c.seed = seed;
  c.pairs_per_relation = 2;
  c.split_ratio = 0.5;
  c.lemma_reuse = true;
  c.pos_targets = {{Pos::kNoun, 0.5}, {Pos::kVerb, 0.0}, {Pos::kAdj, 0.5}};
  return c;
}

RelationPair pair(std::string a, std::string b, RelationLabel l = RelationLabel::kSynonym, Pos p = Pos::kNoun) {
  return {std::move(a), std::move(b), l, p};
}

// Independent relatedness check over the fixture: shared synset, antonym
// link, or a chain of hypernym edges in either direction.
bool brute_related(const wordnet::LexicalDB& db, const std::string& a, const std::string& b) {
  std::set<std::uint64_t> sa, sb;
  for (auto id : db.synsets_of(a)) sa.insert(id.key());
  for (auto id : db.synsets_of(b)) sb.insert(id.key());
  auto ancestors = [&](std::set<std::uint64_t> start) {
    std::set<std::uint64_t> seen = start;
    bool grew = true;
    while (grew) {
      grew = false;
      for (const auto& e : db.edges()) {
        if (e.type == wordnet::EdgeType::kHypernym && seen.count(e.from.key()) && !seen.count(e.to.key())) {
          seen.insert(e.to.key());
          grew = true;
        }
      }
    }
    return seen;
  };
  for (auto k : sa)
    if (sb.count(k)) return true;
  for (const auto& e : db.edges()) {
    if (e.type == wordnet::EdgeType::kAntonym &&
        ((sa.count(e.from.key()) && sb.count(e.to.key())) || (sb.count(e.from.key()) && sa.count(e.to.key())))) {
      return true;
    }
  }
  const auto up_a = ancestors(sa), up_b = ancestors(sb);
  for (auto k : sb)
    if (up_a.count(k)) return true;
  for (auto k : sa)
    if (up_b.count(k)) return true;
  return false;
}

}  // namespace

TEST(LexicalFilter, Rules) {
  EXPECT_TRUE(passes_lexical_filter("dog"));
  EXPECT_FALSE(passes_lexical_filter("ox"));
  EXPECT_FALSE(passes_lexical_filter("Dog"));
  EXPECT_FALSE(passes_lexical_filter("ice_cream"));
  EXPECT_FALSE(passes_lexical_filter("well-being"));
  EXPECT_FALSE(passes_lexical_filter("b52s"));
}

TEST(CandidatePairs, MiniFixtureCounts) {
  const auto& db = mini();
  EXPECT_EQ(candidate_pairs(db, RelationLabel::kSynonym, Pos::kNoun).size(), 4u);
  EXPECT_EQ(candidate_pairs(db, RelationLabel::kSynonym, Pos::kVerb).size(), 2u);
  EXPECT_EQ(candidate_pairs(db, RelationLabel::kSynonym, Pos::kAdj).size(), 3u);
  EXPECT_EQ(candidate_pairs(db, RelationLabel::kAntonym).size(), 2u);
  EXPECT_EQ(candidate_pairs(db, RelationLabel::kHypernym, Pos::kNoun).size(), 10u);
  EXPECT_EQ(candidate_pairs(db, RelationLabel::kHypernym, Pos::kVerb).size(), 4u);
  EXPECT_EQ(candidate_pairs(db, RelationLabel::kHyponym, Pos::kNoun).size(), 10u);
}

TEST(CandidatePairs, HypernymIsSpecificThenGeneral) {
  const auto hyper = candidate_pairs(mini(), RelationLabel::kHypernym);
  EXPECT_NE(std::find(hyper.begin(), hyper.end(), pair("dog", "animal", RelationLabel::kHypernym)), hyper.end());
  const auto hypo = candidate_pairs(mini(), RelationLabel::kHyponym);
  EXPECT_NE(std::find(hypo.begin(), hypo.end(), pair("animal", "dog", RelationLabel::kHyponym)), hypo.end());
}

TEST(ExtractRelationPairs, FixtureAntonyms) {
  auto ants = extract_relation_pairs(mini(), RelationLabel::kAntonym, 2, 1);
  std::set<std::pair<std::string, std::string>> got;
  for (const auto& p : ants) got.insert(std::minmax(p.word_a, p.word_b));
  const std::set<std::pair<std::string, std::string>> expected = {{"happy", "sad"}, {"cold", "hot"}};
  EXPECT_EQ(got, expected);
}

TEST(ExtractRelationPairs, ZeroAndExhaustion) {
  EXPECT_TRUE(extract_relation_pairs(mini(), RelationLabel::kSynonym, 0, 1).empty());
  try {
    extract_relation_pairs(mini(), RelationLabel::kAntonym, 3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kExhausted);
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos);
  }
}

TEST(ExtractRelationPairs, SharedExclusionKeepsDirectionsDisjoint) {
  ExclusionSet ex;
  auto hyper = extract_relation_pairs(mini(), RelationLabel::kHypernym, 10, 3, Pos::kNoun, &ex);
  EXPECT_EQ(error_code_of([&] { extract_relation_pairs(mini(), RelationLabel::kHyponym, 1, 3, Pos::kNoun, &ex); }),
            ErrorCode::kExhausted);
}

TEST(ExtractRelationPairs, Deterministic) {
  EXPECT_EQ(extract_relation_pairs(mini(), RelationLabel::kHypernym, 6, 11),
            extract_relation_pairs(mini(), RelationLabel::kHypernym, 6, 11));
}

TEST(RandomPairs, BruteForceUnrelated) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pairs = sample_random_pairs(mini(), 3, seed);
    ASSERT_EQ(pairs.size(), 3u);
    for (const auto& p : pairs) {
      EXPECT_EQ(p.label, RelationLabel::kRandom);
      EXPECT_FALSE(brute_related(mini(), p.word_a, p.word_b)) << p.word_a << " " << p.word_b;
      EXPECT_TRUE(passes_lexical_filter(p.word_a) && passes_lexical_filter(p.word_b));
    }
  }
  EXPECT_TRUE(sample_random_pairs(mini(), 0, 1).empty());
}

TEST(RandomPairs, RelatedMatchesBruteForce) {
  const auto& db = mini();
  for (const auto& [wa, pa] : db.lemmas())
    for (const auto& [wb, pb] : db.lemmas()) {
      if (wa == wb) continue;
      EXPECT_EQ(related(db, wa, wb, 10), brute_related(db, wa, wb)) << wa << " " << wb;
    }
}

TEST(PosBalance, BalancedInputUnchanged) {
  std::vector<RelationPair> in;
  for (int i = 0; i < 66; ++i) in.push_back(pair("n" + std::string(i + 3, 'a'), "x", RelationLabel::kSynonym, Pos::kNoun));
  for (int i = 0; i < 23; ++i) in.push_back(pair("v" + std::string(i + 3, 'a'), "x", RelationLabel::kSynonym, Pos::kVerb));
  for (int i = 0; i < 11; ++i) in.push_back(pair("a" + std::string(i + 3, 'a'), "x", RelationLabel::kSynonym, Pos::kAdj));
  EXPECT_EQ(enforce_pos_balance(in, default_pos_targets()), in);
}

TEST(PosBalance, SubsamplesToTolerance) {
  std::vector<RelationPair> in;
  for (int i = 0; i < 900; ++i) in.push_back(pair("n" + std::to_string(i), "x", RelationLabel::kHypernym, Pos::kNoun));
  for (int i = 0; i < 230; ++i) in.push_back(pair("v" + std::to_string(i), "x", RelationLabel::kHypernym, Pos::kVerb));
  for (int i = 0; i < 110; ++i) in.push_back(pair("a" + std::to_string(i), "x", RelationLabel::kHypernym, Pos::kAdj));
  const auto out = enforce_pos_balance(in, default_pos_targets());
  const auto props = pos_proportions(out).at(RelationLabel::kHypernym);
  EXPECT_NEAR(props.at(Pos::kNoun), 0.66, 0.03);
  EXPECT_NEAR(props.at(Pos::kVerb), 0.23, 0.03);
  EXPECT_NEAR(props.at(Pos::kAdj), 0.11, 0.03);
  EXPECT_EQ(out, enforce_pos_balance(in, default_pos_targets()));
}

TEST(PosBalance, AllNounsUnattainableNamesBucket) {
  std::vector<RelationPair> in;
  for (int i = 0; i < 50; ++i) in.push_back(pair("n" + std::to_string(i), "x", RelationLabel::kSynonym, Pos::kNoun));
  try {
    enforce_pos_balance(in, default_pos_targets());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnattainable);
    EXPECT_NE(std::string(e.what()).find("v"), std::string::npos);
  }
}

TEST(PosBalance, TargetsMustSumToOne) {
  EXPECT_THROW(enforce_pos_balance({}, {{Pos::kNoun, 0.5}, {Pos::kVerb, 0.2}}), Error);
}

TEST(Split, DisjointPairsHalfAndHalf) {
  const auto r = split_lemma_disjoint({pair("alpha", "beta"), pair("gamma", "delta")}, 0.5, 1);
  EXPECT_EQ(r.train.size(), 1u);
  EXPECT_EQ(r.test.size(), 1u);
}

TEST(Split, ChainedPairsDegradeOrFail) {
  const std::vector<RelationPair> chain = {pair("alpha", "beta"), pair("beta", "gamma")};
  const auto r = split_lemma_disjoint(chain, 0.5, 1);
  EXPECT_EQ(r.train.size() + r.test.size(), 2u);
  EXPECT_TRUE(r.train.empty() || r.test.empty());
  EXPECT_EQ(r.max_label_deviation, 1);
  try {
    split_lemma_disjoint(chain, 0.5, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnattainable);
  }
}

TEST(Split, RatioOutOfRange) {
  EXPECT_EQ(error_code_of([] { split_lemma_disjoint({}, 1.0, 1); }), ErrorCode::kInvalidArgument);
}

TEST(Prompts, TemplatesAndTriples) {
  const auto out = apply_prompts({pair("happy", "sad", RelationLabel::kAntonym, Pos::kAdj)}, Split::kTest);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].text, "The word happy relates to sad");
  EXPECT_EQ(out[1].text, "happy and sad are connected");
  EXPECT_EQ(out[2].text, "Consider happy and sad together");
  for (const auto& i : out) EXPECT_EQ(i.split, Split::kTest);
  EXPECT_TRUE(apply_prompts(std::vector<RelationPair>{}, Split::kTrain).empty());
}

TEST(BuildDataset, MiniFixtureInvariants) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cfg = mini_config(seed);
    const auto ds = build_dataset(mini(), cfg);
    EXPECT_EQ(ds.instances.size(), 30u);
    std::set<std::string> train, test;
    for (const auto& p : ds.split.train) train.insert({p.word_a, p.word_b});
    for (const auto& p : ds.split.test) test.insert({p.word_a, p.word_b});
    for (const auto& w : train) EXPECT_FALSE(test.count(w)) << w;
    std::set<std::pair<std::string, std::string>> hyper, hypo;
    for (const auto& i : ds.instances) {
      if (i.pair.label == RelationLabel::kHypernym) hyper.insert(std::minmax(i.pair.word_a, i.pair.word_b));
      if (i.pair.label == RelationLabel::kHyponym) hypo.insert(std::minmax(i.pair.word_a, i.pair.word_b));
    }
    for (const auto& p : hyper) EXPECT_FALSE(hypo.count(p));
    for (auto l : kAllLabels) {
      const auto targets = effective_pos_targets(mini(), l, cfg.pos_targets);
      for (const auto& [pos, share] : ds.manifest.pos_proportions.at(l)) {
        EXPECT_NEAR(share, targets.count(pos) ? targets.at(pos) : 0.0, kPosTolerance + 1e-12);
      }
    }
    EXPECT_EQ(serialize_instances(ds.instances), serialize_instances(build_dataset(mini(), cfg).instances));
  }
}

TEST(BuildDataset, EffectiveTargetsRenormalise) {
  const auto t = effective_pos_targets(mini(), RelationLabel::kHypernym, default_pos_targets());
  EXPECT_EQ(t.count(Pos::kAdj), 0u);
  EXPECT_NEAR(t.at(Pos::kNoun), 0.66 / 0.89, 1e-12);
  EXPECT_NEAR(t.at(Pos::kVerb), 0.23 / 0.89, 1e-12);
}

TEST(DatasetIo, RoundTripAndChecksum) {
  const auto ds = build_dataset(mini(), mini_config(2));
  const auto dir = testing_helpers::temp_dir("ds_io");
  write_dataset(dir / "d.jsonl", ds.instances, ds.manifest);
  const auto back = read_instances(dir / "d.jsonl");
  ASSERT_EQ(back.size(), ds.instances.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].pair, ds.instances[i].pair);
    EXPECT_EQ(back[i].text, ds.instances[i].text);
    EXPECT_EQ(back[i].template_id, ds.instances[i].template_id);
    EXPECT_EQ(back[i].split, ds.instances[i].split);
  }
  const auto m = read_manifest(manifest_path_for(dir / "d.jsonl"));
  EXPECT_EQ(m.checksum, dataset_checksum(back));
  EXPECT_EQ(m.counts, ds.manifest.counts);
}

TEST(DatasetIo, MalformedLine) {
  EXPECT_EQ(error_code_of([] { parse_instances("{\"text\": 3}\n"); }), ErrorCode::kParse);
}
