#include "relprobe/geometry.hpp"

#include <algorithm>
#include <set>

namespace relprobe::geometry {

double cosine(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw Error(ErrorCode::kShape, "cosine: length mismatch");
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::kUndefined, "cosine: zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

std::string_view to_string(SimGroup g) {
  switch (g) {
    case SimGroup::kSynSyn: return "syn_syn";
    case SimGroup::kAntAnt: return "ant_ant";
    case SimGroup::kSynAnt: return "syn_ant";
    case SimGroup::kSynRand: return "syn_rand";
    case SimGroup::kAntRand: return "ant_rand";
  }
  return "unknown";
}

std::string_view to_string(LayerSlot s) {
  switch (s) {
    case LayerSlot::kEmbedding: return "embedding";
    case LayerSlot::kMiddle: return "middle";
    case LayerSlot::kFinal: return "final";
  }
  return "unknown";
}

std::pair<StreamId, std::uint32_t> slot_location(LayerSlot s, std::uint32_t n_layers) {
  if (n_layers == 0) throw Error(ErrorCode::kInvalidArgument, "slot_location: model has no layers");
  switch (s) {
    case LayerSlot::kEmbedding: return {StreamId::kEmbedding, 0};
    case LayerSlot::kMiddle: return {StreamId::kPostResidual, n_layers / 2};
    case LayerSlot::kFinal: return {StreamId::kPostResidual, n_layers - 1};
  }
  return {StreamId::kPostResidual, 0};
}

std::vector<std::string> GeometryGroups::words() const {
  std::set<std::string> out;
  for (const auto& [g, list] : pairs) {
    for (const auto& [a, b] : list) {
      out.insert(a);
      out.insert(b);
    }
  }
  return {out.begin(), out.end()};
}

GeometryGroups build_groups(const wordnet::LexicalDB& db, const std::vector<dataset::RelationPair>& pairs,
                            std::size_t max_anchors, std::uint64_t seed, int closure_depth) {
  GeometryGroups g;
  for (auto grp : kAllGroups) g.pairs[grp];
  for (const auto& p : pairs) {
    if (p.label == RelationLabel::kSynonym) g.pairs[SimGroup::kSynSyn].emplace_back(p.word_a, p.word_b);
    if (p.label == RelationLabel::kAntonym) g.pairs[SimGroup::kAntAnt].emplace_back(p.word_a, p.word_b);
  }

  // Synonym and antonym partners of every filtered lemma.
  std::map<std::string, std::set<std::string>> syn, ant;
  for (const auto& rp : dataset::candidate_pairs(db, RelationLabel::kSynonym)) {
    syn[rp.word_a].insert(rp.word_b);
    syn[rp.word_b].insert(rp.word_a);
  }
  for (const auto& rp : dataset::candidate_pairs(db, RelationLabel::kAntonym)) {
    ant[rp.word_a].insert(rp.word_b);
    ant[rp.word_b].insert(rp.word_a);
  }
  std::vector<std::string> anchors;
  for (const auto& [w, s] : syn) {
    if (ant.count(w)) anchors.push_back(w);
  }
  Rng rng(seed);
  rng.shuffle(anchors.begin(), anchors.end());
  if (anchors.size() > max_anchors) anchors.resize(max_anchors);
  std::sort(anchors.begin(), anchors.end());

  std::vector<std::string> pool;
  for (const auto& [lemma, parts] : db.lemmas()) {
    if (dataset::passes_lexical_filter(lemma)) pool.push_back(lemma);
  }
  for (const auto& anchor : anchors) {
    const auto& s = syn.at(anchor);
    const auto& a = ant.at(anchor);
    for (const auto& sw : s)
      for (const auto& aw : a) g.pairs[SimGroup::kSynAnt].emplace_back(sw, aw);

    std::string partner;
    for (int attempt = 0; attempt < 1000 && partner.empty(); ++attempt) {
      const auto& cand = pool[rng.below(pool.size())];
      if (cand == anchor || s.count(cand) || a.count(cand)) continue;
      if (dataset::related(db, anchor, cand, closure_depth)) continue;
      partner = cand;
    }
    if (partner.empty()) continue;
    for (const auto& sw : s) g.pairs[SimGroup::kSynRand].emplace_back(sw, partner);
    for (const auto& aw : a) g.pairs[SimGroup::kAntRand].emplace_back(aw, partner);
  }
  return g;
}

std::vector<SimilarityCell> group_similarity(const WordVectors& vectors, const GeometryGroups& groups,
                                             LayerSlot slot) {
  std::vector<SimilarityCell> out;
  for (auto grp : kAllGroups) {
    auto it = groups.pairs.find(grp);
    if (it == groups.pairs.end() || it->second.empty()) {
      throw Error(ErrorCode::kInsufficientData, "group_similarity: group " + std::string(to_string(grp)) + " is empty");
    }
    double sum = 0.0;
    for (const auto& [a, b] : it->second) sum += cosine(vectors(a), vectors(b));
    out.push_back({grp, slot, sum / static_cast<double>(it->second.size()), it->second.size()});
  }
  return out;
}

}  // namespace relprobe::geometry
