#include "relprobe/common.hpp"

#include <cmath>
#include <cstdio>

namespace relprobe {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kMagicMismatch: return "magic-mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kChecksumMismatch: return "checksum-mismatch";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kExhausted: return "exhausted";
    case ErrorCode::kUnattainable: return "unattainable";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kUndefined: return "undefined";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

RelationLabel label_from_index(int i) {
  if (i < 0 || i >= kNumClasses) {
    throw Error(ErrorCode::kInvalidArgument, "class index out of range: " + std::to_string(i));
  }
  return static_cast<RelationLabel>(i);
}

std::string_view to_string(RelationLabel l) {
  switch (l) {
    case RelationLabel::kSynonym: return "synonym";
    case RelationLabel::kAntonym: return "antonym";
    case RelationLabel::kHypernym: return "hypernym";
    case RelationLabel::kHyponym: return "hyponym";
    case RelationLabel::kRandom: return "random";
  }
  return "?";
}

RelationLabel parse_label(std::string_view s) {
  for (auto l : kAllLabels) {
    if (to_string(l) == s) return l;
  }
  throw Error(ErrorCode::kParse, "unknown relation label '" + std::string(s) + "'");
}

std::string_view to_string(Pos p) {
  switch (p) {
    case Pos::kNoun: return "n";
    case Pos::kVerb: return "v";
    case Pos::kAdj: return "a";
  }
  return "?";
}

Pos parse_pos(std::string_view s) {
  if (s == "n") return Pos::kNoun;
  if (s == "v") return Pos::kVerb;
  if (s == "a" || s == "s") return Pos::kAdj;
  throw Error(ErrorCode::kParse, "unknown part of speech '" + std::string(s) + "'");
}

std::string_view to_string(StreamId s) {
  switch (s) {
    case StreamId::kAttentionOut: return "attention_out";
    case StreamId::kMlpOut: return "mlp_out";
    case StreamId::kPostResidual: return "post_residual";
    case StreamId::kEmbedding: return "embedding";
  }
  return "?";
}

StreamId parse_stream(std::string_view s) {
  for (auto id : kAllStreams) {
    if (to_string(id) == s) return id;
  }
  throw Error(ErrorCode::kParse, "unknown stream '" + std::string(s) + "'");
}

void Fnv1a::update(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    state_ ^= p[i];
    state_ *= 0x100000001b3ULL;
  }
}

std::string Fnv1a::hex() const { return hex64(state_); }

std::uint64_t fnv1a(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return h.digest();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t Rng::mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "Rng::below(0)");
  // Rejection on the top zone keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (spare_normal_) {
    double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_normal_ = r * std::sin(theta);
  return r * std::cos(theta);
}

}  // namespace relprobe
