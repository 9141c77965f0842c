#include "relprobe/intervention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace relprobe::intervention {

namespace {

void require_semantic(RelationLabel t, const char* where) {
  if (!is_semantic(t)) throw Error(ErrorCode::kInvalidArgument, std::string(where) + ": target must be a semantic relation");
}

void check_features(const FeatureSet& f, Eigen::Index m) {
  for (int j : f) {
    if (j < 0 || j >= m) throw Error(ErrorCode::kShape, "feature index " + std::to_string(j) + " out of range");
  }
}

// Rows of z with the listed columns replaced by values[j] (or removed when
// values is null). keep_only drops every other column instead.
SparseRowMatrix rewrite(const SparseRowMatrix& z, const FeatureSet& features, const Vector* values, bool keep_only) {
  std::vector<char> in_set(static_cast<std::size_t>(z.cols()), 0);
  for (int j : features) in_set[static_cast<std::size_t>(j)] = 1;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(z.nonZeros()) + features.size() * static_cast<std::size_t>(z.rows()));
  for (Eigen::Index r = 0; r < z.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(z, r); it; ++it) {
      const bool sel = in_set[static_cast<std::size_t>(it.col())];
      if (sel == keep_only) trips.emplace_back(r, it.col(), it.value());
    }
    if (values) {
      for (int j : features) {
        const double v = (*values)(j);
        if (v != 0.0) trips.emplace_back(r, j, v);
      }
    }
  }
  SparseRowMatrix out(z.rows(), z.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

LinearReadout LinearReadout::from_probe(const probe::ProbeModel& model) {
  return {model.raw_weights(), model.raw_bias()};
}

Vector LinearReadout::logits(const Vector& z) const {
  if (z.size() != v.cols()) throw Error(ErrorCode::kShape, "readout: latent length mismatch");
  return v * z + c;
}

Matrix LinearReadout::logits(const SparseRowMatrix& z) const {
  if (z.cols() != v.cols()) throw Error(ErrorCode::kShape, "readout: latent width mismatch");
  Matrix out = z * v.transpose();
  out.rowwise() += c.transpose();
  return out;
}

FeatureRanking rank_features(const probe::ProbeModel& model, RelationLabel relation, int layer) {
  require_semantic(relation, "rank_features");
  FeatureRanking r;
  r.relation = relation;
  r.layer = layer;
  r.ranked.resize(static_cast<std::size_t>(model.n_features()));
  std::iota(r.ranked.begin(), r.ranked.end(), 0);
  const auto row = model.w.row(index_of(relation));
  std::stable_sort(r.ranked.begin(), r.ranked.end(),
                   [&](int a, int b) { return std::abs(row(a)) > std::abs(row(b)); });
  return r;
}

FeatureSet top_k(const FeatureRanking& ranking, int k) {
  if (k < 0 || static_cast<std::size_t>(k) > ranking.ranked.size()) {
    throw Error(ErrorCode::kInvalidArgument, "ranking has " + std::to_string(ranking.ranked.size()) +
                                                 " features, fewer than k = " + std::to_string(k));
  }
  return {ranking.ranked.begin(), ranking.ranked.begin() + k};
}

double selection_score(const LinearReadout& readout, const SparseRowMatrix& latents, RelationLabel target,
                       const FeatureSet& features, SelectionMode mode) {
  check_features(features, readout.n_features());
  if (latents.rows() == 0) throw Error(ErrorCode::kInsufficientData, "selection_score: no rows");
  const int t = index_of(target);
  Vector delta;
  if (mode == SelectionMode::kKeepOnly) {
    const Matrix kept = readout.logits(rewrite(latents, features, nullptr, true));
    const SparseRowMatrix none(latents.rows(), latents.cols());
    delta = kept.col(t) - readout.logits(none).col(t);
  } else {
    const Matrix removed = readout.logits(rewrite(latents, features, nullptr, false));
    delta = removed.col(t) - readout.logits(latents).col(t);
  }
  return delta.cwiseAbs().mean();
}

SweepConfig SweepConfig::for_dictionary(int m) {
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "dictionary size must be positive");
  SweepConfig c;
  if (m == 32768) return c;
  const double scale = m / 32768.0;
  c.k_ref = std::max(1, static_cast<int>(std::floor(0.01 * m)));
  std::vector<int> grid;
  for (int g : SweepConfig{}.grid) {
    const int k = std::clamp(static_cast<int>(std::lround(g * scale)), 1, c.k_ref);
    if (grid.empty() || grid.back() != k) grid.push_back(k);
  }
  c.grid = grid;
  return c;
}

void SweepConfig::validate() const {
  if (grid.empty()) throw Error(ErrorCode::kConfig, "sweep grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0 || (i > 0 && grid[i] <= grid[i - 1])) {
      throw Error(ErrorCode::kConfig, "sweep grid must be strictly ascending and nonnegative");
    }
  }
  if (k_ref < 0) throw Error(ErrorCode::kConfig, "sweep k_ref must be nonnegative");
  if (!(cutoff >= 0.0 && cutoff <= 1.0)) throw Error(ErrorCode::kConfig, "sweep cutoff must lie in [0, 1]");
}

SweepResult sweep_k(const SweepConfig& config, const std::function<double(int)>& score) {
  config.validate();
  SweepResult r;
  r.ref_score = score(config.k_ref);
  for (int k : config.grid) r.curve.emplace_back(k, score(k));
  for (const auto& [k, s] : r.curve) {
    if (s >= config.cutoff * r.ref_score) {
      r.k = k;
      return r;
    }
  }
  r.k = config.grid.back();
  r.none_qualified = true;
  return r;
}

double ld_sem(const Vector& logits, RelationLabel target) {
  require_semantic(target, "ld_sem");
  if (logits.size() != kNumClasses) throw Error(ErrorCode::kShape, "ld_sem: expected 5 logits");
  const int t = index_of(target);
  double best = -std::numeric_limits<double>::infinity();
  for (auto c : kSemanticLabels) {
    if (index_of(c) != t) best = std::max(best, logits(index_of(c)));
  }
  return logits(t) - best;
}

int semantic_argmax(const Vector& logits) {
  if (logits.size() != kNumClasses) throw Error(ErrorCode::kShape, "semantic_argmax: expected 5 logits");
  int best = 0;
  for (auto c : kSemanticLabels) {
    if (logits(index_of(c)) > logits(best)) best = index_of(c);
  }
  return best;
}

Vector injection_values(const SparseRowMatrix& latents, const probe::Labels& labels, RelationLabel target) {
  if (latents.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw Error(ErrorCode::kShape, "injection_values: label count mismatch");
  }
  Vector sum = Vector::Zero(latents.cols());
  std::size_t n = 0;
  for (Eigen::Index r = 0; r < latents.outerSize(); ++r) {
    if (labels[static_cast<std::size_t>(r)] != index_of(target)) continue;
    ++n;
    for (SparseRowMatrix::InnerIterator it(latents, r); it; ++it) sum(it.col()) += it.value();
  }
  if (n == 0) {
    throw Error(ErrorCode::kInsufficientData, "injection_values: no training rows of " + std::string(to_string(target)));
  }
  return sum / static_cast<double>(n);
}

Vector inject(const Vector& z, const FeatureRanking& ranking, int k, const Vector& values) {
  const auto f = top_k(ranking, k);
  check_features(f, z.size());
  if (values.size() != z.size()) throw Error(ErrorCode::kShape, "inject: value vector length mismatch");
  Vector out = z;
  for (int j : f) out(j) = values(j);
  return out;
}

Vector ablate(const Vector& z, const FeatureRanking& ranking, int k) {
  const auto f = top_k(ranking, k);
  check_features(f, z.size());
  Vector out = z;
  for (int j : f) out(j) = 0.0;
  return out;
}

SparseRowMatrix inject(const SparseRowMatrix& z, const FeatureSet& features, const Vector& values) {
  check_features(features, z.cols());
  if (values.size() != z.cols()) throw Error(ErrorCode::kShape, "inject: value vector length mismatch");
  return rewrite(z, features, &values, false);
}

SparseRowMatrix ablate(const SparseRowMatrix& z, const FeatureSet& features) {
  check_features(features, z.cols());
  return rewrite(z, features, nullptr, false);
}

std::string_view to_string(Mode m) { return m == Mode::kSufficiency ? "sufficiency" : "necessity"; }

PatchEffect patch_effect(const LinearReadout& readout, const SparseRowMatrix& before, const SparseRowMatrix& after,
                         RelationLabel target) {
  if (before.rows() != after.rows()) throw Error(ErrorCode::kShape, "patch_effect: row count mismatch");
  const Matrix lb = readout.logits(before);
  const Matrix la = readout.logits(after);
  PatchEffect e;
  for (Eigen::Index r = 0; r < lb.rows(); ++r) {
    const Vector b = lb.row(r).transpose(), a = la.row(r).transpose();
    e.ld_before.push_back(ld_sem(b, target));
    e.ld_after.push_back(ld_sem(a, target));
    e.pred_before.push_back(semantic_argmax(b));
    e.pred_after.push_back(semantic_argmax(a));
  }
  return e;
}

double mean_delta_ld(const PatchEffect& e, std::span<const std::size_t> rows) {
  if (rows.empty()) throw Error(ErrorCode::kInsufficientData, "no evaluation rows");
  double s = 0.0;
  for (auto r : rows) s += e.ld_after[r] - e.ld_before[r];
  return s / static_cast<double>(rows.size());
}

std::optional<double> standardized_delta(const PatchEffect& e, std::span<const std::size_t> rows) {
  if (rows.empty()) throw Error(ErrorCode::kInsufficientData, "no evaluation rows");
  double mean = 0.0;
  for (auto r : rows) mean += e.ld_before[r];
  mean /= static_cast<double>(rows.size());
  double var = 0.0;
  for (auto r : rows) var += (e.ld_before[r] - mean) * (e.ld_before[r] - mean);
  const double sd = std::sqrt(var / static_cast<double>(rows.size()));
  if (!(sd > 0.0)) return std::nullopt;
  return mean_delta_ld(e, rows) / sd;
}

double flip_rate_delta(const PatchEffect& e, int target, std::span<const std::size_t> rows) {
  if (rows.empty()) throw Error(ErrorCode::kInsufficientData, "no evaluation rows");
  double after = 0.0, before = 0.0;
  for (auto r : rows) {
    after += e.pred_after[r] == target;
    before += e.pred_before[r] == target;
  }
  return (after - before) / static_cast<double>(rows.size());
}

double drop_rate(const PatchEffect& e, int target, std::span<const std::size_t> rows) {
  if (rows.empty()) throw Error(ErrorCode::kInsufficientData, "no evaluation rows");
  double n = 0.0;
  for (auto r : rows) n += e.pred_before[r] == target && e.pred_after[r] != target;
  return n / static_cast<double>(rows.size());
}

namespace {

InterventionReport make_report(const PatchEffect& e, RelationLabel target, Mode mode, int k, int layer,
                               int replicates, std::uint64_t seed) {
  const int t = index_of(target);
  const std::size_t n = e.ld_before.size();
  InterventionReport rep;
  rep.relation = target;
  rep.layer = layer;
  rep.mode = mode;
  rep.k = k;
  rep.n_items = n;
  const std::vector<int> strata(n, 0);
  const Rng base(seed);
  rep.delta_ld_raw = probe::bootstrap_ci([&](auto rows) { return mean_delta_ld(e, rows); }, strata, replicates,
                                         base.split("raw").next());
  const auto rows = all_rows(n);
  if (standardized_delta(e, rows)) {
    // Replicates whose baseline LD has no spread count as 0.
    rep.delta_ld_std = probe::bootstrap_ci(
        [&](auto r) { return standardized_delta(e, r).value_or(0.0); }, strata, replicates, base.split("std").next());
  }
  auto rate = [&](auto r) { return mode == Mode::kSufficiency ? flip_rate_delta(e, t, r) : drop_rate(e, t, r); };
  rep.rate = probe::bootstrap_ci(rate, strata, replicates, base.split("rate").next());
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    before += e.pred_before[i] == t;
    after += e.pred_after[i] == t;
  }
  rep.target_rate_before = before / static_cast<double>(n);
  rep.target_rate_after = after / static_cast<double>(n);
  return rep;
}

}  // namespace

InterventionReport sufficiency_report(const LinearReadout& readout, const SparseRowMatrix& neutral,
                                      RelationLabel target, const FeatureSet& features, const Vector& values,
                                      int layer, int replicates, std::uint64_t seed) {
  require_semantic(target, "sufficiency_report");
  if (neutral.rows() == 0) throw Error(ErrorCode::kInsufficientData, "sufficiency_report: empty neutral set");
  const auto e = patch_effect(readout, neutral, inject(neutral, features, values), target);
  return make_report(e, target, Mode::kSufficiency, static_cast<int>(features.size()), layer, replicates, seed);
}

InterventionReport necessity_report(const LinearReadout& readout, const SparseRowMatrix& target_items,
                                    RelationLabel target, const FeatureSet& features, int layer, int replicates,
                                    std::uint64_t seed) {
  require_semantic(target, "necessity_report");
  if (target_items.rows() == 0) throw Error(ErrorCode::kInsufficientData, "necessity_report: empty target set");
  const auto e = patch_effect(readout, target_items, ablate(target_items, features), target);
  return make_report(e, target, Mode::kNecessity, static_cast<int>(features.size()), layer, replicates, seed);
}

std::optional<double> random_control(const LinearReadout& readout, const SparseRowMatrix& items,
                                     RelationLabel target, Mode mode, int k, const Vector& values,
                                     double topk_effect, int n_seeds, std::uint64_t seed) {
  const auto m = static_cast<int>(readout.n_features());
  if (k < 0 || k > m) throw Error(ErrorCode::kInvalidArgument, "random_control: k out of range");
  if (n_seeds < 1) throw Error(ErrorCode::kInvalidArgument, "random_control: need at least one seed");
  if (topk_effect == 0.0 || k == 0) return std::nullopt;
  const auto rows = all_rows(static_cast<std::size_t>(items.rows()));
  double total = 0.0;
  for (int s = 0; s < n_seeds; ++s) {
    Rng rng = Rng(seed).split(static_cast<std::uint64_t>(s));
    std::vector<int> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    // Partial Fisher-Yates: the first k entries are a uniform k-subset.
    for (int i = 0; i < k; ++i) {
      const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(m - i)));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    FeatureSet f(perm.begin(), perm.begin() + k);
    std::sort(f.begin(), f.end());
    const auto patched = mode == Mode::kSufficiency ? inject(items, f, values) : ablate(items, f);
    total += std::abs(mean_delta_ld(patch_effect(readout, items, patched, target), rows));
  }
  return (total / n_seeds) / std::abs(topk_effect);
}

std::size_t peak_report(const std::vector<InterventionReport>& reports, Mode mode) {
  if (reports.empty()) throw Error(ErrorCode::kInsufficientData, "peak_report: no reports");
  auto key = [](const InterventionReport& r) { return r.delta_ld_std ? r.delta_ld_std->point : r.delta_ld_raw.point; };
  std::size_t best = 0;
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const bool better = mode == Mode::kSufficiency ? key(reports[i]) > key(reports[best])
                                                   : key(reports[i]) < key(reports[best]);
    if (better) best = i;
  }
  return best;
}

RobustnessRow robustness_row(const std::string& prompt_set, const std::vector<double>& macro_acc_by_layer,
                             const std::vector<InterventionReport>& sufficiency,
                             const std::vector<InterventionReport>& necessity) {
  if (macro_acc_by_layer.empty()) throw Error(ErrorCode::kInsufficientData, "robustness_row: no layers");
  RobustnessRow row;
  row.prompt_set = prompt_set;
  row.mean_acc = std::accumulate(macro_acc_by_layer.begin(), macro_acc_by_layer.end(), 0.0) /
                 static_cast<double>(macro_acc_by_layer.size());
  row.peak_acc = *std::max_element(macro_acc_by_layer.begin(), macro_acc_by_layer.end());
  for (const auto& r : sufficiency) row.delta_fr += r.rate.point;
  for (const auto& r : necessity) row.drop_rate += r.rate.point;
  if (!sufficiency.empty()) row.delta_fr /= static_cast<double>(sufficiency.size());
  if (!necessity.empty()) row.drop_rate /= static_cast<double>(necessity.size());
  return row;
}

}  // namespace relprobe::intervention
