#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "relprobe/dataset.hpp"
#include "relprobe/intervention.hpp"
#include "relprobe/probe.hpp"

namespace relprobe::pipeline {

inline constexpr const char* kVersion = "1.0.0";

inline const std::vector<std::string> kStages = {"dataset", "probe", "depth", "geometry", "reverse",
                                                 "sweep", "patch", "robustness", "report"};

/// Prompt sets beyond the original dataset: the reversed hypernym/hyponym/
/// random test set, the bare geometry words and the alternate templates.
inline const std::vector<std::string> kAlternatePromptSets = {"novel", "none"};

struct RunConfig {
  std::filesystem::path wordnet_dir;
  std::filesystem::path out_dir = "relprobe-out";
  std::uint64_t seed = 7;
  dataset::DatasetConfig dataset;
  /// Prompt set name -> RELACT1 path. Names: original, reversed, words, novel, none.
  std::map<std::string, std::filesystem::path> activations;
  /// Layer -> RELSAE1 path.
  std::map<int, std::filesystem::path> sae;
  probe::ProbeConfig probe;
  intervention::SweepConfig sweep;
  int bootstrap_replicates = probe::kDefaultReplicates;
  int control_seeds = 5;
  std::size_t geometry_anchors = 200;
  std::string prompt_set = "original";
  std::vector<std::string> stages;
  int jobs = 1;
};

/// Defaults, with the WordNet directory taken from RELPROBE_WORDNET when set.
RunConfig default_config();

/// Parses a JSON config over the defaults. Unknown keys are rejected (kConfig).
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string to_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

/// Runs one stage; throws Error on invalid input.
void run_stage(const std::string& stage, const RunConfig& config);

/// Paths of the dataset files a stage reads for a prompt set.
std::filesystem::path prompt_set_file(const RunConfig& config, const std::string& prompt_set);

struct CheckResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

/// Dataset from the bundled fixture, toy transformer activations, analytic
/// SAEs, then every stage; returns one entry per invariant checked.
std::vector<CheckResult> selftest(const RunConfig& base, std::ostream& log);

/// Writes toy-model activations for a prompt-set file (JSONL dataset or one
/// word per line). The vocabulary comes from `vocab_source`, so every prompt
/// set of a run sees the same model.
void toy_extract(const std::filesystem::path& input, const std::filesystem::path& vocab_source,
                 const std::filesystem::path& output, int n_layers, int d_model, std::uint64_t seed);

/// Writes one analytic RELSAE1 dictionary per layer into dir (L<layer>.relsae).
std::map<int, std::filesystem::path> write_toy_saes(const std::filesystem::path& dir, int n_layers,
                                                    std::uint32_t d_model, std::uint32_t m, std::uint64_t seed);

}  // namespace relprobe::pipeline
