#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relprobe/activation_store.hpp"
#include "relprobe/probe.hpp"

namespace relprobe::intervention {

/// A trained probe folded onto raw latents: logits = V z + c.
struct LinearReadout {
  Matrix v;  // C x m
  Vector c;  // C

  static LinearReadout from_probe(const probe::ProbeModel& model);
  Vector logits(const Vector& z) const;
  Matrix logits(const SparseRowMatrix& z) const;
  Eigen::Index n_features() const { return v.cols(); }
};

struct FeatureRanking {
  RelationLabel relation = RelationLabel::kSynonym;
  int layer = 0;
  std::vector<int> ranked;  // |W[relation, j]| descending, lower index first on ties
};

/// Ranks latents by the magnitude of the relation's coefficient on
/// standardised features. Throws kInvalidArgument for the random class.
FeatureRanking rank_features(const probe::ProbeModel& model, RelationLabel relation, int layer = 0);

using FeatureSet = std::vector<int>;
/// First k entries of the ranking; throws kInvalidArgument when k exceeds it.
FeatureSet top_k(const FeatureRanking& ranking, int k);

/// Keep-only compares the input restricted to the set against the fully
/// ablated input; remove-only compares the input with the set zeroed against
/// the full input. For a linear readout both give the same |delta|.
enum class SelectionMode { kKeepOnly, kRemoveOnly };

/// Mean over rows of |delta logit_target| under the given selection.
double selection_score(const LinearReadout& readout, const SparseRowMatrix& latents, RelationLabel target,
                       const FeatureSet& features, SelectionMode mode);

struct SweepConfig {
  std::vector<int> grid = {32, 64, 128, 160, 192, 224, 256, 296, 320};
  int k_ref = 327;
  double cutoff = 0.90;

  /// Grid scaled to an m-latent dictionary with k_ref = floor(0.01 m) (at
  /// least 1); m = 32768 yields the defaults above.
  static SweepConfig for_dictionary(int m);
  void validate() const;
};

struct SweepResult {
  int k = 0;
  bool none_qualified = false;  // no grid value reached the cutoff; k is the largest grid value
  double ref_score = 0.0;
  std::vector<std::pair<int, double>> curve;  // (k, score) for every grid value
};

/// Smallest grid k with score(k) >= cutoff * score(k_ref).
SweepResult sweep_k(const SweepConfig& config, const std::function<double(int k)>& score);

/// logit_t minus the largest logit among the other semantic classes.
double ld_sem(const Vector& logits, RelationLabel target);
/// Argmax over the semantic classes only, lowest index on ties.
int semantic_argmax(const Vector& logits);

/// Per-latent mean over training rows of the target class (zeros included).
Vector injection_values(const SparseRowMatrix& latents, const probe::Labels& labels, RelationLabel target);

Vector inject(const Vector& z, const FeatureRanking& ranking, int k, const Vector& values);
Vector ablate(const Vector& z, const FeatureRanking& ranking, int k);
SparseRowMatrix inject(const SparseRowMatrix& z, const FeatureSet& features, const Vector& values);
SparseRowMatrix ablate(const SparseRowMatrix& z, const FeatureSet& features);

enum class Mode { kSufficiency, kNecessity };
std::string_view to_string(Mode m);

struct PatchEffect {
  std::vector<double> ld_before;
  std::vector<double> ld_after;
  std::vector<int> pred_before;  // semantic argmax
  std::vector<int> pred_after;
};

PatchEffect patch_effect(const LinearReadout& readout, const SparseRowMatrix& before, const SparseRowMatrix& after,
                         RelationLabel target);

/// Standardised mean delta LD: mean(after - before) / population sd(before).
std::optional<double> standardized_delta(const PatchEffect& e, std::span<const std::size_t> rows);
double mean_delta_ld(const PatchEffect& e, std::span<const std::size_t> rows);
/// Pr[after = t] - Pr[before = t].
double flip_rate_delta(const PatchEffect& e, int target, std::span<const std::size_t> rows);
/// Pr[before = t and after != t].
double drop_rate(const PatchEffect& e, int target, std::span<const std::size_t> rows);

struct InterventionReport {
  RelationLabel relation = RelationLabel::kSynonym;
  int layer = 0;
  Mode mode = Mode::kSufficiency;
  int k = 0;
  std::size_t n_items = 0;
  probe::BootstrapCI delta_ld_raw;
  std::optional<probe::BootstrapCI> delta_ld_std;  // absent when the baseline LD has no spread
  probe::BootstrapCI rate;  // delta FR (sufficiency) or DR (necessity)
  double target_rate_before = 0.0;  // Pr[semantic prediction = target]
  double target_rate_after = 0.0;
  std::optional<double> control_ratio;
};

/// Injection of `features` (set to `values`) into neutral items.
InterventionReport sufficiency_report(const LinearReadout& readout, const SparseRowMatrix& neutral,
                                      RelationLabel target, const FeatureSet& features, const Vector& values,
                                      int layer, int replicates, std::uint64_t seed);

/// Ablation of `features` on items of the target relation.
InterventionReport necessity_report(const LinearReadout& readout, const SparseRowMatrix& target_items,
                                    RelationLabel target, const FeatureSet& features, int layer, int replicates,
                                    std::uint64_t seed);

/// Mean |delta LD| of uniformly drawn feature sets of size k (one per seed)
/// divided by |delta LD| of the top-k set. nullopt when the top-k effect is 0.
std::optional<double> random_control(const LinearReadout& readout, const SparseRowMatrix& items,
                                     RelationLabel target, Mode mode, int k, const Vector& values,
                                     double topk_effect, int n_seeds, std::uint64_t seed);

/// Sufficiency: largest standardised delta LD; necessity: most negative.
/// Reports without a standardised value fall back to the raw delta.
std::size_t peak_report(const std::vector<InterventionReport>& reports, Mode mode);

struct RobustnessRow {
  std::string prompt_set;
  double mean_acc = 0.0;
  double peak_acc = 0.0;
  double delta_fr = 0.0;
  double drop_rate = 0.0;
};

/// mean/peak over layers of the macro per-class accuracy; delta FR and DR
/// averaged over the given reports.
RobustnessRow robustness_row(const std::string& prompt_set, const std::vector<double>& macro_acc_by_layer,
                             const std::vector<InterventionReport>& sufficiency,
                             const std::vector<InterventionReport>& necessity);

}  // namespace relprobe::intervention
