#pragma once

#include <string>
#include <vector>

#include "relprobe/dataset.hpp"
#include "relprobe/probe.hpp"

namespace relprobe::directionality {

/// hypernym <-> hyponym; random unchanged. Other labels are rejected.
RelationLabel inverted(RelationLabel l);

/// Swaps word order and re-renders each instance with its own template;
/// hypernym and hyponym labels are exchanged. Throws kInvalidArgument for
/// synonym/antonym instances or text that does not match its template.
std::vector<dataset::PromptInstance> build_reversed_set(
    const std::vector<dataset::PromptInstance>& instances,
    const std::vector<std::string>& templates = dataset::kProbeTemplates);

struct ReversalResult {
  RelationLabel relation = RelationLabel::kRandom;
  probe::BootstrapCI acc_orig;
  probe::BootstrapCI acc_flip;
  double delta = 0.0;  // acc_flip - acc_orig
  int peak_layer_orig = 0;
  int peak_layer_flip = 0;
};

/// For each of hypernym, hyponym and random: the recall of the relation on the
/// original set and of its inverted label on the reversed set, each at its own
/// peak layer, with stratified bootstrap CIs.
std::vector<ReversalResult> reversal_gap(const std::vector<probe::Labels>& orig_predictions_by_layer,
                                         const probe::Labels& orig_gold,
                                         const std::vector<probe::Labels>& flip_predictions_by_layer,
                                         const probe::Labels& flip_gold, int replicates, std::uint64_t seed);

}  // namespace relprobe::directionality
