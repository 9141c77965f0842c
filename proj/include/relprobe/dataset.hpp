#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relprobe/common.hpp"
#include "relprobe/wordnet.hpp"

namespace relprobe::dataset {

struct RelationPair {
  std::string word_a;
  std::string word_b;
  RelationLabel label = RelationLabel::kRandom;
  Pos pos = Pos::kNoun;  // of word_a

  friend bool operator==(const RelationPair&, const RelationPair&) = default;
};

enum class Split { kTrain, kTest };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct PromptInstance {
  RelationPair pair;
  int template_id = 0;
  std::string text;
  Split split = Split::kTrain;
};

/// Length > 2, ASCII letters only, all lowercase (which excludes '_' and '-').
bool passes_lexical_filter(std::string_view word);

/// Pairs already claimed by the dataset under construction. Unordered word
/// pairs are never reused across labels, so hypernym and hyponym sets stay
/// disjoint; with lemma_unique every lemma is used by at most one pair.
class ExclusionSet {
 public:
  explicit ExclusionSet(bool lemma_unique = false) : lemma_unique_(lemma_unique) {}

  bool admits(const RelationPair& p) const;
  void insert(const RelationPair& p);
  bool lemma_unique() const { return lemma_unique_; }

 private:
  bool lemma_unique_;
  std::set<std::pair<std::string, std::string>> pairs_;
  std::set<std::string> lemmas_;
};

/// Every pair of the given relation present in the database, filtered and
/// de-duplicated, in canonical (sorted) order. Symmetric relations yield one
/// orientation per unordered pair. Hypernym pairs are (specific, general);
/// hyponym pairs are (general, specific).
std::vector<RelationPair> candidate_pairs(const wordnet::LexicalDB& db, RelationLabel label,
                                          std::optional<Pos> pos = std::nullopt);

/// Draws n distinct pairs of a semantic relation. Throws kExhausted with the
/// achievable count when fewer candidates survive the filters and exclusions.
std::vector<RelationPair> extract_relation_pairs(const wordnet::LexicalDB& db, RelationLabel label,
                                                 std::size_t n, std::uint64_t seed,
                                                 std::optional<Pos> pos = std::nullopt,
                                                 ExclusionSet* exclusion = nullptr);

struct RandomPairOptions {
  int closure_depth = 10;
  std::size_t max_attempts_per_pair = 1000;
};

/// True when the words share a synset, an antonym link, or a hypernym path of
/// at most closure_depth steps in either direction.
bool related(const wordnet::LexicalDB& db, const std::string& a, const std::string& b,
             int closure_depth);

std::vector<RelationPair> sample_random_pairs(const wordnet::LexicalDB& db, std::size_t n,
                                              std::uint64_t seed,
                                              std::optional<Pos> pos = std::nullopt,
                                              ExclusionSet* exclusion = nullptr,
                                              const RandomPairOptions& options = {});

using PosTargets = std::map<Pos, double>;
inline constexpr double kPosTolerance = 0.03;

PosTargets default_pos_targets();  // 0.66 / 0.23 / 0.11

/// Per-label POS shares.
std::map<RelationLabel, std::map<Pos, double>> pos_proportions(const std::vector<RelationPair>& pairs);

/// Subsamples each label group so its POS shares sit within tolerance of the
/// targets. Groups already within tolerance are kept as is; otherwise the
/// largest prefix-stable subsample is taken. Throws kUnattainable naming the
/// deficient bucket.
std::vector<RelationPair> enforce_pos_balance(const std::vector<RelationPair>& pairs,
                                              const PosTargets& targets,
                                              double tolerance = kPosTolerance);

struct SplitResult {
  std::vector<RelationPair> train;
  std::vector<RelationPair> test;
  double achieved_ratio = 0.0;
  int max_label_deviation = 0;  // |train_c - round(ratio * n_c)|, worst label
};

/// Greedy component assignment on the lemma-sharing graph (largest components
/// first). Throws kUnattainable with the best achievable ratio when any label
/// misses its stratified train count by more than `tolerance` pairs.
SplitResult split_lemma_disjoint(const std::vector<RelationPair>& pairs, double ratio,
                                 std::uint64_t seed, int tolerance = 2);

inline const std::vector<std::string> kProbeTemplates = {
    "The word {A} relates to {B}", "{A} and {B} are connected", "Consider {A} and {B} together"};
inline const std::string kNovelTemplate = "{A} occurs with {B}";
inline const std::string kNoContextTemplate = "{A} {B}";

std::string render(std::string_view tmpl, std::string_view a, std::string_view b);

std::vector<PromptInstance> apply_prompts(const std::vector<RelationPair>& pairs, Split split,
                                          const std::vector<std::string>& templates = kProbeTemplates);
/// Train instances first, then test; three consecutive templates per pair.
std::vector<PromptInstance> apply_prompts(const SplitResult& split,
                                          const std::vector<std::string>& templates = kProbeTemplates);

/// Targets restricted to the POS buckets in which the relation has candidates,
/// renormalised to sum to 1. Throws kExhausted when no bucket remains.
PosTargets effective_pos_targets(const wordnet::LexicalDB& db, RelationLabel label, const PosTargets& targets);

struct DatasetConfig {
  std::uint64_t seed = 7;
  std::size_t pairs_per_relation = 1000;
  double split_ratio = 0.8;
  PosTargets pos_targets = default_pos_targets();
  bool lemma_reuse = false;
  RandomPairOptions random;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::map<RelationLabel, std::size_t> counts;
  std::map<RelationLabel, std::map<Pos, double>> pos_proportions;
  double split_ratio = 0.0;
  std::vector<std::string> templates;
  std::size_t n_instances = 0;
  std::string checksum;
};

struct Dataset {
  SplitResult split;
  std::vector<PromptInstance> instances;
  DatasetManifest manifest;
};

/// Per-relation POS quotas (targets renormalised over the buckets in which the
/// relation has candidates), extraction in fixed label order with a shared
/// exclusion set, lemma-disjoint split, prompt augmentation.
Dataset build_dataset(const wordnet::LexicalDB& db, const DatasetConfig& config);

/// One JSON object per line: text, word_a, word_b, label, pos, template_id, split.
std::string serialize_instances(const std::vector<PromptInstance>& instances);
std::vector<PromptInstance> parse_instances(std::string_view jsonl);
std::string dataset_checksum(const std::vector<PromptInstance>& instances);

std::string serialize_manifest(const DatasetManifest& m);
DatasetManifest parse_manifest(std::string_view json);

/// Writes <stem>.jsonl and <stem>.manifest.json.
void write_dataset(const std::filesystem::path& jsonl_path, const std::vector<PromptInstance>& instances,
                   const DatasetManifest& manifest);
std::vector<PromptInstance> read_instances(const std::filesystem::path& jsonl_path);
DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
std::filesystem::path manifest_path_for(const std::filesystem::path& jsonl_path);

/// Re-renders instances with other templates (one instance per pair and
/// template); used for the contextual-robustness prompt sets.
std::vector<PromptInstance> rerender(const std::vector<RelationPair>& pairs, Split split,
                                     const std::vector<std::string>& templates);

DatasetManifest manifest_for(const std::vector<PromptInstance>& instances, std::uint64_t seed,
                             double split_ratio, const std::vector<std::string>& templates);

}  // namespace relprobe::dataset
