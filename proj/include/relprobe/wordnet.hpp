#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "relprobe/common.hpp"

namespace relprobe::wordnet {

/// (part of speech, byte offset in data.<pos>) packed into one key.
struct SynsetId {
  Pos pos = Pos::kNoun;
  std::uint32_t offset = 0;

  std::uint64_t key() const {
    return (static_cast<std::uint64_t>(pos) << 32) | offset;
  }
  friend auto operator<=>(const SynsetId&, const SynsetId&) = default;
};

struct Synset {
  SynsetId id;
  bool satellite = false;
  std::vector<std::string> words;  // as written in data.*, adjective markers stripped
};

enum class EdgeType { kHypernym, kAntonym };

/// Directed edge between synsets. Hypernym edges always point specific -> general.
/// Antonym edges are lexical when word indices are set (1-based in the file,
/// stored 0-based here), otherwise they relate every word pair of the synsets.
struct Edge {
  SynsetId from;
  SynsetId to;
  EdgeType type;
  std::optional<std::size_t> from_word;
  std::optional<std::size_t> to_word;

  friend bool operator==(const Edge&, const Edge&) = default;
};

class LexicalDB {
 public:
  const std::map<std::uint64_t, Synset>& synsets() const { return synsets_; }
  const std::vector<Edge>& edges() const { return edges_; }
  /// Lemma (index form, lowercase) -> parts of speech it appears under.
  const std::map<std::string, std::set<Pos>>& lemmas() const { return lemmas_; }

  const Synset& synset(SynsetId id) const;
  bool contains(SynsetId id) const { return synsets_.count(id.key()) != 0; }

  /// Synsets whose member list contains the (lowercased) word.
  const std::vector<SynsetId>& synsets_of(const std::string& word) const;

  /// Direct hypernyms of a synset.
  const std::vector<SynsetId>& hypernyms_of(SynsetId id) const;
  /// Synsets linked to this one by an antonym pointer in either direction.
  const std::vector<SynsetId>& antonyms_of(SynsetId id) const;

  std::size_t count_edges(EdgeType t) const;

  // Builders; used by the loader and by tests that assemble small databases.
  void add_synset(Synset s);
  void add_edge(Edge e);
  void add_lemma(const std::string& lemma, Pos pos);
  /// Validates edge endpoints and builds lookup tables.
  void finalize();

 private:
  std::map<std::uint64_t, Synset> synsets_;
  std::vector<Edge> edges_;
  std::map<std::string, std::set<Pos>> lemmas_;
  std::unordered_map<std::string, std::vector<SynsetId>> word_index_;
  std::unordered_map<std::uint64_t, std::vector<SynsetId>> hypernyms_;
  std::unordered_map<std::uint64_t, std::vector<SynsetId>> antonyms_;
};

/// Reads index.{noun,verb,adj} and data.{noun,verb,adj} from a WordNet 3.0
/// database directory. Throws Error(kIo) naming a missing file and
/// Error(kParse) with the byte offset of a malformed line.
LexicalDB load_wordnet(const std::filesystem::path& dir);

}  // namespace relprobe::wordnet
