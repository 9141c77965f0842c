#include "relprobe/directionality.hpp"

namespace relprobe::directionality {

RelationLabel inverted(RelationLabel l) {
  switch (l) {
    case RelationLabel::kHypernym: return RelationLabel::kHyponym;
    case RelationLabel::kHyponym: return RelationLabel::kHypernym;
    case RelationLabel::kRandom: return RelationLabel::kRandom;
    default:
      throw Error(ErrorCode::kInvalidArgument,
                  "reversal is defined for hypernym, hyponym and random, not " + std::string(to_string(l)));
  }
}

std::vector<dataset::PromptInstance> build_reversed_set(const std::vector<dataset::PromptInstance>& instances,
                                                        const std::vector<std::string>& templates) {
  std::vector<dataset::PromptInstance> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    if (inst.template_id < 0 || static_cast<std::size_t>(inst.template_id) >= templates.size()) {
      throw Error(ErrorCode::kInvalidArgument, "reversal: template id out of range");
    }
    const auto& tmpl = templates[static_cast<std::size_t>(inst.template_id)];
    if (dataset::render(tmpl, inst.pair.word_a, inst.pair.word_b) != inst.text) {
      throw Error(ErrorCode::kInvalidArgument, "reversal: text does not match its template: " + inst.text);
    }
    dataset::PromptInstance r = inst;
    r.pair.label = inverted(inst.pair.label);
    std::swap(r.pair.word_a, r.pair.word_b);
    r.text = dataset::render(tmpl, r.pair.word_a, r.pair.word_b);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

struct PeakAcc {
  int layer = 0;
  probe::BootstrapCI ci;
};

PeakAcc peak_recall(const std::vector<probe::Labels>& preds, const probe::Labels& gold, int cls, int replicates,
                    std::uint64_t seed) {
  if (preds.empty()) throw Error(ErrorCode::kInsufficientData, "reversal_gap: no layers");
  std::vector<std::size_t> all(gold.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  PeakAcc best;
  double best_acc = -1.0;
  for (std::size_t l = 0; l < preds.size(); ++l) {
    if (preds[l].size() != gold.size()) throw Error(ErrorCode::kShape, "reversal_gap: prediction length mismatch");
    const double acc = probe::class_recall(preds[l], gold, cls, all);
    if (acc > best_acc) {
      best_acc = acc;
      best.layer = static_cast<int>(l);
    }
  }
  const auto& p = preds[static_cast<std::size_t>(best.layer)];
  best.ci = probe::bootstrap_ci([&](std::span<const std::size_t> rows) { return probe::class_recall(p, gold, cls, rows); },
                                gold, replicates, seed);
  return best;
}

}  // namespace

std::vector<ReversalResult> reversal_gap(const std::vector<probe::Labels>& orig_predictions_by_layer,
                                         const probe::Labels& orig_gold,
                                         const std::vector<probe::Labels>& flip_predictions_by_layer,
                                         const probe::Labels& flip_gold, int replicates, std::uint64_t seed) {
  std::vector<ReversalResult> out;
  for (auto rel : {RelationLabel::kHypernym, RelationLabel::kHyponym, RelationLabel::kRandom}) {
    const Rng base = Rng(seed).split(to_string(rel));
    auto o = peak_recall(orig_predictions_by_layer, orig_gold, index_of(rel), replicates, base.split("orig").next());
    auto f = peak_recall(flip_predictions_by_layer, flip_gold, index_of(inverted(rel)), replicates,
                         base.split("flip").next());
    ReversalResult r;
    r.relation = rel;
    r.acc_orig = o.ci;
    r.acc_flip = f.ci;
    r.delta = f.ci.point - o.ci.point;
    r.peak_layer_orig = o.layer;
    r.peak_layer_flip = f.layer;
    out.push_back(r);
  }
  return out;
}

}  // namespace relprobe::directionality
