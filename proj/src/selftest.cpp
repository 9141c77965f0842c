#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relprobe/activation_store.hpp"
#include "relprobe/directionality.hpp"
#include "relprobe/pipeline.hpp"
#include "relprobe/synthetic.hpp"
#include "relprobe/wordnet.hpp"

#ifndef RELPROBE_LAB_WORDNET
#define RELPROBE_LAB_WORDNET "data/wordnet-lab"
#endif

namespace relprobe::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr int kToyLayers = 4;
constexpr int kToyDim = 16;
constexpr std::uint32_t kToyDictionary = 64;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "missing file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Tsv {
  std::string header;
  std::vector<std::string> columns;
  std::vector<std::map<std::string, std::string>> rows;

  std::vector<double> numbers(const std::string& col) const {
    std::vector<double> out;
    for (const auto& r : rows) {
      const auto& v = r.at(col);
      out.push_back(v == "NA" ? NAN : std::stod(v));
    }
    return out;
  }
};

Tsv load_tsv(const fs::path& p) {
  Tsv t;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (t.header.empty()) t.header = line;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) cells.push_back(cell);
    if (t.columns.empty()) {
      t.columns = cells;
    } else {
      std::map<std::string, std::string> row;
      for (std::size_t i = 0; i < t.columns.size() && i < cells.size(); ++i) row[t.columns[i]] = cells[i];
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

class Checks {
 public:
  explicit Checks(std::ostream& log) : log_(log) {}

  void add(const std::string& name, bool ok, const std::string& detail = "") {
    results_.push_back({name, ok, detail});
    log_ << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : ": " + detail) << "\n";
  }

  template <typename Fn>
  void guard(const std::string& name, Fn fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      add(name, false, e.what());
    }
  }

  std::vector<CheckResult> results() const { return results_; }

 private:
  std::ostream& log_;
  std::vector<CheckResult> results_;
};

void check_dataset(Checks& checks, const RunConfig& cfg, const wordnet::LexicalDB& db) {
  const auto instances = dataset::read_instances(prompt_set_file(cfg, "original"));
  std::set<std::string> train_lemmas, test_lemmas;
  std::map<std::pair<std::string, std::string>, std::set<RelationLabel>> unordered;
  std::map<RelationLabel, std::map<Pos, int>> pos_counts;
  std::map<RelationLabel, int> pair_counts;
  std::map<std::tuple<std::string, std::string, RelationLabel>, int> per_pair;
  for (const auto& inst : instances) {
    auto& lemmas = inst.split == dataset::Split::kTrain ? train_lemmas : test_lemmas;
    lemmas.insert(inst.pair.word_a);
    lemmas.insert(inst.pair.word_b);
    unordered[std::minmax(inst.pair.word_a, inst.pair.word_b)].insert(inst.pair.label);
    per_pair[{inst.pair.word_a, inst.pair.word_b, inst.pair.label}]++;
    if (inst.template_id == 0) {
      pos_counts[inst.pair.label][inst.pair.pos]++;
      pair_counts[inst.pair.label]++;
    }
  }
  std::vector<std::string> shared;
  std::set_intersection(train_lemmas.begin(), train_lemmas.end(), test_lemmas.begin(), test_lemmas.end(),
                        std::back_inserter(shared));
  checks.add("dataset: lemma-disjoint split", shared.empty(),
             std::to_string(shared.size()) + " lemmas in both splits");

  int overlap = 0;
  for (const auto& [pair, labels] : unordered) {
    overlap += labels.count(RelationLabel::kHypernym) && labels.count(RelationLabel::kHyponym);
  }
  checks.add("dataset: hypernym/hyponym disjoint", overlap == 0, std::to_string(overlap) + " shared pairs");

  double worst = 0.0;
  for (auto l : kAllLabels) {
    const auto targets = dataset::effective_pos_targets(db, l, cfg.dataset.pos_targets);
    for (auto p : kAllPos) {
      const double share = pair_counts[l] ? static_cast<double>(pos_counts[l][p]) / pair_counts[l] : 0.0;
      const double target = targets.count(p) ? targets.at(p) : 0.0;
      worst = std::max(worst, std::abs(share - target));
    }
  }
  checks.add("dataset: POS shares within 3 pp", worst <= dataset::kPosTolerance + 1e-12,
             "worst deviation " + std::to_string(worst));

  const bool triple = std::all_of(per_pair.begin(), per_pair.end(), [](const auto& kv) { return kv.second == 3; });
  checks.add("dataset: three prompts per pair", triple && !per_pair.empty(),
             std::to_string(per_pair.size()) + " pairs, " + std::to_string(instances.size()) + " instances");
}

void check_stream_identity(Checks& checks, const RunConfig& cfg) {
  const auto instances = dataset::read_instances(prompt_set_file(cfg, "original"));
  std::vector<std::string> words;
  for (const auto& inst : instances) {
    words.push_back(inst.pair.word_a);
    words.push_back(inst.pair.word_b);
  }
  synthetic::ToyModelSpec spec;
  spec.n_layers = kToyLayers;
  spec.d_model = kToyDim;
  spec.d_mlp = 4 * kToyDim;
  spec.vocabulary = synthetic::build_vocabulary(words);
  spec.weight_seed = cfg.seed;
  const synthetic::ToyModel model(spec);
  double worst = 0.0;
  for (std::size_t i = 0; i < std::min<std::size_t>(instances.size(), 50); ++i) {
    const auto trace = model.forward(model.tokenizer().encode(instances[i].text));
    for (int l = 0; l < kToyLayers; ++l) {
      const Matrix sum = trace.residual_in[l] + trace.attention_out[l] + trace.mlp_out[l];
      worst = std::max(worst, (sum - trace.post_residual[l]).cwiseAbs().maxCoeff());
    }
  }
  checks.add("toy: post = residual_in + attention + mlp", worst <= 1e-6, "max error " + std::to_string(worst));
}

void check_depth(Checks& checks, const RunConfig& cfg) {
  const auto t = load_tsv(cfg.out_dir / "depth.tsv");
  bool ok = !t.rows.empty();
  for (const auto& r : t.rows) {
    const double mean = std::stod(r.at("mean")), peak = std::stod(r.at("peak")), com = std::stod(r.at("com"));
    ok = ok && peak >= mean - 1e-12 && com >= 0.0 && com <= kToyLayers - 1;
  }
  checks.add("depth: peak >= mean and CoM within the layer range", ok, std::to_string(t.rows.size()) + " profiles");
}

void check_reversal(Checks& checks, const RunConfig& cfg) {
  const auto orig = dataset::read_instances(prompt_set_file(cfg, "original"));
  const auto flip = dataset::read_instances(prompt_set_file(cfg, "reversed"));
  const auto twice = directionality::build_reversed_set(flip);
  std::vector<dataset::PromptInstance> expected;
  for (const auto& inst : orig) {
    const auto l = inst.pair.label;
    if (inst.split == dataset::Split::kTest &&
        (l == RelationLabel::kHypernym || l == RelationLabel::kHyponym || l == RelationLabel::kRandom)) {
      expected.push_back(inst);
    }
  }
  bool same = twice.size() == expected.size();
  for (std::size_t i = 0; same && i < twice.size(); ++i) {
    same = twice[i].pair == expected[i].pair && twice[i].text == expected[i].text;
  }
  checks.add("reverse: double reversal is the identity", same, std::to_string(expected.size()) + " instances");
  const auto t = load_tsv(cfg.out_dir / "reversal.tsv");
  checks.add("reverse: table has hypernym, hyponym and random rows", t.rows.size() == 3);
}

void check_geometry(Checks& checks, const RunConfig& cfg) {
  const auto t = load_tsv(cfg.out_dir / "geometry.tsv");
  bool ok = t.rows.size() == 15;
  for (double c : t.numbers("mean_cos")) ok = ok && c >= -1.0 && c <= 1.0;
  checks.add("geometry: 5 groups x 3 slots, cosines in [-1, 1]", ok, std::to_string(t.rows.size()) + " cells");
}

void check_sweep(Checks& checks, const RunConfig& cfg) {
  const auto choice = nlohmann::json::parse(slurp(cfg.out_dir / "sweep_choice.json"));
  const int k = choice.at("k").get<int>();
  const auto& grid = cfg.sweep.grid;
  checks.add("sweep: chosen k is a grid value", std::find(grid.begin(), grid.end(), k) != grid.end(),
             "k = " + std::to_string(k));
  const double gap = choice.at("keep_remove_max_gap").get<double>();
  checks.add("sweep: keep-only and remove-only scores agree", gap <= 1e-9, "max gap " + std::to_string(gap));

  const auto curve = load_tsv(cfg.out_dir / "sweep.tsv");
  const auto ks = curve.numbers("k");
  const auto scores = curve.numbers("score");
  const double ref = choice.at("ref_score").get<double>();
  int prev = -1;
  bool monotone = true;
  for (double cutoff = 0.0; cutoff <= 1.0 + 1e-12; cutoff += 0.05) {
    int chosen = static_cast<int>(ks.back());
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (scores[i] >= cutoff * ref) {
        chosen = static_cast<int>(ks[i]);
        break;
      }
    }
    monotone = monotone && chosen >= prev;
    prev = chosen;
  }
  checks.add("sweep: chosen k is monotone in the cutoff", monotone);
}

void check_patch(Checks& checks, const RunConfig& cfg) {
  for (const auto& [file, rate, sign] :
       {std::tuple{"sufficiency.tsv", "delta_fr", -1.0}, std::tuple{"necessity.tsv", "drop_rate", 0.0}}) {
    const auto t = load_tsv(cfg.out_dir / file);
    bool ok = !t.rows.empty();
    for (const auto& r : t.rows) {
      const double v = std::stod(r.at(rate));
      ok = ok && v >= sign - 1e-12 && v <= 1.0 + 1e-12;
      if (r.at("delta_ld_std") != "NA") {
        const double raw = std::stod(r.at("delta_ld_raw"));
        const double st = std::stod(r.at("delta_ld_std"));
        ok = ok && (raw == 0.0 || (raw > 0) == (st > 0));
      }
    }
    checks.add(std::string("patch: ") + file + " rates in range, standardised sign matches raw", ok,
               std::to_string(t.rows.size()) + " rows");
  }
}

void check_report(Checks& checks, const RunConfig& cfg, const std::string& hash) {
  const std::vector<std::string> files = {"table2_probing.tsv", "table3_reversal.tsv", "table4_sufficiency.tsv",
                                          "table5_necessity.tsv", "table6_robustness.tsv", "fig1_depth_curves.tsv",
                                          "fig2_block_deltas.tsv", "fig3_geometry.tsv", "fig4_sweep.tsv"};
  int good = 0;
  for (const auto& f : files) {
    const auto p = cfg.out_dir / "report" / f;
    if (!fs::exists(p)) continue;
    const auto t = load_tsv(p);
    good += t.header.find("config_hash=" + hash) != std::string::npos && !t.rows.empty();
  }
  checks.add("report: every table present, non-empty and stamped with the config hash",
             good == static_cast<int>(files.size()),
             std::to_string(good) + "/" + std::to_string(files.size()));
}

std::map<std::string, std::string> snapshot(const fs::path& dir, const std::vector<std::string>& names) {
  std::map<std::string, std::string> out;
  for (const auto& n : names) out[n] = slurp(dir / n);
  return out;
}

}  // namespace

std::vector<CheckResult> selftest(const RunConfig& base, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig cfg = base;
  if (cfg.wordnet_dir.empty() || !fs::exists(cfg.wordnet_dir)) cfg.wordnet_dir = RELPROBE_LAB_WORDNET;
  cfg.dataset.pairs_per_relation = 100;
  cfg.bootstrap_replicates = 200;
  cfg.sweep.grid = {1, 2, 4, 8, 16};
  cfg.sweep.k_ref = 16;
  cfg.prompt_set = "original";
  fs::create_directories(cfg.out_dir);
  log << "selftest: WordNet " << cfg.wordnet_dir.string() << ", output " << cfg.out_dir.string() << "\n";

  Checks checks(log);
  const auto db = wordnet::load_wordnet(cfg.wordnet_dir);
  run_stage("dataset", cfg);
  checks.guard("dataset", [&] { check_dataset(checks, cfg, db); });

  const auto vocab_source = prompt_set_file(cfg, "original");
  for (const std::string name : {"original", "reversed", "words", "novel", "none"}) {
    const auto out = cfg.out_dir / "activations" / (name + ".relact");
    toy_extract(prompt_set_file(cfg, name), vocab_source, out, kToyLayers, kToyDim, cfg.seed);
    cfg.activations[name] = out;
  }
  cfg.sae = write_toy_saes(cfg.out_dir / "sae", kToyLayers, kToyDim, kToyDictionary, cfg.seed);
  checks.guard("toy", [&] { check_stream_identity(checks, cfg); });

  const std::string hash = config_hash(cfg);
  std::map<std::string, std::string> first_run;
  for (const auto& stage : kStages) {
    if (stage == "dataset") continue;
    try {
      run_stage(stage, cfg);
      checks.add("stage " + stage + " completes", true);
    } catch (const std::exception& e) {
      checks.add("stage " + stage + " completes", false, e.what());
    }
    if (stage == "probe") first_run = snapshot(cfg.out_dir, {"probe_accuracy.tsv", "probes/post_residual_L0.json"});
  }
  checks.guard("depth", [&] { check_depth(checks, cfg); });
  checks.guard("reverse", [&] { check_reversal(checks, cfg); });
  checks.guard("geometry", [&] { check_geometry(checks, cfg); });
  checks.guard("sweep", [&] { check_sweep(checks, cfg); });
  checks.guard("patch", [&] { check_patch(checks, cfg); });
  checks.guard("report", [&] { check_report(checks, cfg, hash); });

  checks.guard("determinism", [&] {
    const auto ds_before = slurp(prompt_set_file(cfg, "original"));
    run_stage("dataset", cfg);
    run_stage("probe", cfg);
    const bool same = ds_before == slurp(prompt_set_file(cfg, "original")) &&
                      first_run == snapshot(cfg.out_dir, {"probe_accuracy.tsv", "probes/post_residual_L0.json"});
    checks.add("rerun reproduces dataset and probe outputs byte for byte", same);
  });

  checks.guard("checksum", [&] {
    RunConfig bad = cfg;
    bad.activations["original"] = cfg.activations.at("reversed");
    try {
      run_stage("probe", bad);
      checks.add("mismatched activations are refused", false, "stage accepted them");
    } catch (const Error& e) {
      checks.add("mismatched activations are refused", e.code() == ErrorCode::kChecksumMismatch, e.what());
    }
  });

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log << "selftest finished in " << secs << " s\n";
  return checks.results();
}

}  // namespace relprobe::pipeline
