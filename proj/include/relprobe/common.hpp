#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace relprobe {

enum class ErrorCode {
  kIo,
  kParse,
  kMagicMismatch,
  kTruncated,
  kChecksumMismatch,
  kShape,
  kNonFinite,
  kInvalidArgument,
  kExhausted,
  kUnattainable,
  kInsufficientData,
  kUndefined,
  kConfig,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; the code distinguishes failure classes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Class order is fixed; probe weight rows and logit columns follow it.
enum class RelationLabel : int {
  kSynonym = 0,
  kAntonym = 1,
  kHypernym = 2,
  kHyponym = 3,
  kRandom = 4,
};

inline constexpr int kNumClasses = 5;
inline constexpr std::array<RelationLabel, kNumClasses> kAllLabels = {
    RelationLabel::kSynonym, RelationLabel::kAntonym, RelationLabel::kHypernym,
    RelationLabel::kHyponym, RelationLabel::kRandom};
inline constexpr std::array<RelationLabel, 4> kSemanticLabels = {
    RelationLabel::kSynonym, RelationLabel::kAntonym, RelationLabel::kHypernym,
    RelationLabel::kHyponym};

inline constexpr int index_of(RelationLabel l) { return static_cast<int>(l); }
inline constexpr bool is_semantic(RelationLabel l) { return l != RelationLabel::kRandom; }
RelationLabel label_from_index(int i);
std::string_view to_string(RelationLabel l);
RelationLabel parse_label(std::string_view s);

enum class Pos : int { kNoun = 0, kVerb = 1, kAdj = 2 };
inline constexpr std::array<Pos, 3> kAllPos = {Pos::kNoun, Pos::kVerb, Pos::kAdj};
std::string_view to_string(Pos p);  // "n", "v", "a"
Pos parse_pos(std::string_view s);

enum class StreamId : int {
  kAttentionOut = 0,
  kMlpOut = 1,
  kPostResidual = 2,
  kEmbedding = 3,
};
inline constexpr std::array<StreamId, 4> kAllStreams = {
    StreamId::kAttentionOut, StreamId::kMlpOut, StreamId::kPostResidual,
    StreamId::kEmbedding};
inline constexpr std::array<StreamId, 3> kBlockStreams = {
    StreamId::kAttentionOut, StreamId::kMlpOut, StreamId::kPostResidual};
std::string_view to_string(StreamId s);
StreamId parse_stream(std::string_view s);

// 64-bit FNV-1a. Used for file checksums and config hashes.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n);
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fnv1a(std::string_view s);
std::string hex64(std::uint64_t v);

/// Seedable 64-bit generator with platform-independent derived draws.
///
/// std::mt19937_64 output is fully specified by the standard, but the
/// std::*_distribution adaptors are not, so bounded integers and normals are
/// derived here. split() gives an independent stream per named purpose
/// (e.g. one per relation) via splitmix64 mixing.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  Rng split(std::string_view tag) const { return Rng(mix(seed_ ^ fnv1a(tag))); }
  Rng split(std::uint64_t tag) const { return Rng(mix(seed_ + 0x9e3779b97f4a7c15ULL * (tag + 1))); }

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Uniform in [0, 1).
  double uniform();
  double normal();

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

}  // namespace relprobe
