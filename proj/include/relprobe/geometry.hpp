#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "relprobe/activation_store.hpp"
#include "relprobe/dataset.hpp"
#include "relprobe/wordnet.hpp"

namespace relprobe::geometry {

/// dot(u, v) / (|u| |v|). Throws kUndefined for a zero vector.
double cosine(const Vector& u, const Vector& v);

enum class SimGroup { kSynSyn, kAntAnt, kSynAnt, kSynRand, kAntRand };
inline constexpr std::array<SimGroup, 5> kAllGroups = {SimGroup::kSynSyn, SimGroup::kAntAnt, SimGroup::kSynAnt,
                                                        SimGroup::kSynRand, SimGroup::kAntRand};
std::string_view to_string(SimGroup g);

enum class LayerSlot { kEmbedding, kMiddle, kFinal };
inline constexpr std::array<LayerSlot, 3> kAllSlots = {LayerSlot::kEmbedding, LayerSlot::kMiddle, LayerSlot::kFinal};
std::string_view to_string(LayerSlot s);

/// Stream and layer read for a slot: embedding at layer 0, post-residual at
/// floor(L/2) and L-1.
std::pair<StreamId, std::uint32_t> slot_location(LayerSlot s, std::uint32_t n_layers);

using WordPair = std::pair<std::string, std::string>;

struct GeometryGroups {
  std::map<SimGroup, std::vector<WordPair>> pairs;

  std::vector<std::string> words() const;  // sorted, unique
};

/// syn_syn and ant_ant are the synonym and antonym pairs themselves. Anchors
/// are lemmas with at least one synonym and one antonym in the database;
/// syn_ant takes every (synonym, antonym) combination of an anchor, and
/// syn_rand / ant_rand pair each synonym / antonym with one partner that is
/// unrelated to the anchor.
GeometryGroups build_groups(const wordnet::LexicalDB& db, const std::vector<dataset::RelationPair>& pairs,
                            std::size_t max_anchors, std::uint64_t seed, int closure_depth = 10);

struct SimilarityCell {
  SimGroup group = SimGroup::kSynSyn;
  LayerSlot slot = LayerSlot::kEmbedding;
  double mean_cos = 0.0;
  std::size_t n_pairs = 0;
};

using WordVectors = std::function<Vector(const std::string& word)>;

/// Mean cosine per group at one slot. Throws kInsufficientData for an empty group.
std::vector<SimilarityCell> group_similarity(const WordVectors& vectors, const GeometryGroups& groups,
                                             LayerSlot slot);

}  // namespace relprobe::geometry
