#include "relprobe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "relprobe/activation_store.hpp"
#include "relprobe/depth.hpp"
#include "relprobe/directionality.hpp"
#include "relprobe/geometry.hpp"
#include "relprobe/synthetic.hpp"
#include "relprobe/wordnet.hpp"

namespace relprobe::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- config

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::kConfig, where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw Error(ErrorCode::kConfig, "unknown config key '" + where + key + "'");
  }
}

template <typename T>
void read_if(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

// ---------------------------------------------------------------- io

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "missing or unreadable file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  out << text;
}

std::string file_checksum(const fs::path& p) { return hex64(fnv1a(read_text(p))); }

std::string fmt(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  if (jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> workers;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  for (std::size_t w = 0; w < count; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------- stage context

struct Ctx {
  const RunConfig& cfg;
  std::string stage;
  std::string hash;
  std::vector<std::string> log;

  fs::path out(const std::string& name) const { return cfg.out_dir / name; }
  std::string header() const {
    return std::string("# relprobe ") + kVersion + " stage=" + stage + " config_hash=" + hash + "\n";
  }
  void note(const std::string& line) { log.push_back(line); }
  void finish() {
    std::string text = header();
    for (const auto& l : log) text += l + "\n";
    write_text(cfg.out_dir / "logs" / (stage + ".log"), text);
  }
};

class Table {
 public:
  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}
  void add(std::vector<std::string> row) {
    if (row.size() != columns_.size()) throw Error(ErrorCode::kShape, "table row width mismatch");
    rows_.push_back(std::move(row));
  }
  void write(Ctx& ctx, const std::string& name) const {
    std::string text = ctx.header();
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) text += (i ? "\t" : "") + cells[i];
      text += "\n";
    };
    line(columns_);
    for (const auto& r : rows_) line(r);
    write_text(ctx.out(name), text);
    ctx.note("wrote " + name + " (" + std::to_string(rows_.size()) + " rows)");
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

struct TsvData {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw Error(ErrorCode::kParse, "table has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
  }
};

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

TsvData read_tsv(const fs::path& p) {
  std::istringstream in(read_text(p));
  TsvData t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (t.columns.empty()) {
      t.columns = split_tabs(line);
    } else {
      t.rows.push_back(split_tabs(line));
    }
  }
  return t;
}

// ---------------------------------------------------------------- prompt sets

struct PromptSet {
  std::string name;
  std::vector<dataset::PromptInstance> instances;
  activations::ActivationTable table;
  probe::Labels labels;
  std::vector<std::size_t> train, test;

  std::uint32_t n_layers() const { return table.manifest().n_layers; }
};

fs::path activation_file(const RunConfig& cfg, const std::string& name) {
  auto it = cfg.activations.find(name);
  if (it == cfg.activations.end()) {
    throw Error(ErrorCode::kConfig, "no activation file configured for prompt set '" + name + "'");
  }
  return it->second;
}

activations::ActivationFile read_checked(const fs::path& act_path, const fs::path& input_path) {
  if (!fs::exists(act_path)) throw Error(ErrorCode::kIo, "missing activation file: " + act_path.string());
  auto file = activations::read_activations(act_path);
  const auto expected = file_checksum(input_path);
  if (file.manifest.dataset_checksum != expected) {
    throw Error(ErrorCode::kChecksumMismatch, "activation file " + act_path.string() + " was computed from dataset " +
                                                  file.manifest.dataset_checksum + " but " + input_path.string() +
                                                  " has checksum " + expected);
  }
  return file;
}

PromptSet load_prompt_set(Ctx& ctx, const std::string& name) {
  const auto ds_path = prompt_set_file(ctx.cfg, name);
  const auto act_path = activation_file(ctx.cfg, name);
  if (!fs::exists(act_path)) throw Error(ErrorCode::kIo, "missing activation file: " + act_path.string());
  auto instances = dataset::read_instances(ds_path);
  auto file = read_checked(act_path, ds_path);
  if (file.manifest.n_instances != instances.size()) {
    throw Error(ErrorCode::kShape, act_path.string() + " holds " + std::to_string(file.manifest.n_instances) +
                                       " instances, dataset has " + std::to_string(instances.size()));
  }
  ctx.note("input " + ds_path.string() + " checksum " + file.manifest.dataset_checksum);
  ctx.note("input " + act_path.string() + " model " + file.manifest.model_name);
  PromptSet ps{name, std::move(instances), activations::ActivationTable(std::move(file)), {}, {}, {}};
  for (std::size_t i = 0; i < ps.instances.size(); ++i) {
    ps.labels.push_back(index_of(ps.instances[i].pair.label));
    (ps.instances[i].split == dataset::Split::kTrain ? ps.train : ps.test).push_back(i);
  }
  return ps;
}

probe::Labels subset(const probe::Labels& y, const std::vector<std::size_t>& rows) {
  probe::Labels out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(y[r]);
  return out;
}

fs::path probe_file(const RunConfig& cfg, StreamId s, std::uint32_t layer) {
  return cfg.out_dir / "probes" / (std::string(to_string(s)) + "_L" + std::to_string(layer) + ".json");
}

fs::path sae_probe_file(const RunConfig& cfg, int layer) {
  return cfg.out_dir / "sae_probes" / ("L" + std::to_string(layer) + ".json");
}

std::vector<StreamId> block_streams(const PromptSet& ps) {
  std::vector<StreamId> out;
  for (auto s : kBlockStreams) {
    if (ps.table.has_stream(s)) out.push_back(s);
  }
  return out;
}

/// Predictions of the frozen per-layer probes of one stream on the given rows.
std::vector<probe::Labels> predict_layers(const RunConfig& cfg, const PromptSet& ps, StreamId stream,
                                          const std::vector<std::size_t>& rows) {
  std::vector<probe::Labels> out;
  for (std::uint32_t l = 0; l < ps.n_layers(); ++l) {
    const auto model = probe::load_probe(read_text(probe_file(cfg, stream, l)));
    out.push_back(probe::predict_labels(model, ps.table.matrix(l, stream, rows)));
  }
  return out;
}

std::vector<int> rel_classes() {
  std::vector<int> out;
  for (auto l : kAllLabels) out.push_back(index_of(l));
  return out;
}

double macro_accuracy(const probe::Labels& pred, const probe::Labels& gold) {
  const auto cls = rel_classes();
  const auto acc = probe::per_class_accuracy(pred, gold, cls);
  double s = 0.0;
  for (const auto& [c, a] : acc) s += a;
  return s / static_cast<double>(acc.size());
}

struct SaeLayer {
  int layer = 0;
  activations::SaeParams params;
};

std::vector<SaeLayer> load_saes(Ctx& ctx, std::uint32_t d_model, std::uint32_t n_layers) {
  if (ctx.cfg.sae.empty()) throw Error(ErrorCode::kConfig, "no SAE files configured (sae.layers)");
  std::vector<SaeLayer> out;
  for (const auto& [layer, path] : ctx.cfg.sae) {
    if (layer < 0 || static_cast<std::uint32_t>(layer) >= n_layers) {
      throw Error(ErrorCode::kConfig, "SAE layer " + std::to_string(layer) + " outside the model's layers");
    }
    if (!fs::exists(path)) throw Error(ErrorCode::kIo, "missing SAE file: " + path.string());
    auto p = activations::read_sae(path);
    if (p.d_model != d_model) {
      throw Error(ErrorCode::kShape, "SAE " + path.string() + " expects d_model " + std::to_string(p.d_model) +
                                         ", activations have " + std::to_string(d_model));
    }
    ctx.note("input " + path.string() + " dictionary " + std::to_string(p.dict_size));
    out.push_back({layer, std::move(p)});
  }
  return out;
}

SparseRowMatrix latents(const PromptSet& ps, const SaeLayer& sae, const std::vector<std::size_t>& rows) {
  return activations::sae_encode_batch(
      ps.table.matrix(static_cast<std::uint32_t>(sae.layer), StreamId::kPostResidual, rows), sae.params);
}

std::vector<std::size_t> rows_with_label(const PromptSet& ps, const std::vector<std::size_t>& rows, int label) {
  std::vector<std::size_t> out;
  for (auto r : rows) {
    if (ps.labels[r] == label) out.push_back(r);
  }
  return out;
}

int capped_k(int k, Eigen::Index m) { return std::min<int>(k, static_cast<int>(m)); }

// ---------------------------------------------------------------- stages

void stage_dataset(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.wordnet_dir.empty()) {
    throw Error(ErrorCode::kConfig, "no WordNet directory: set wordnet_dir or RELPROBE_WORDNET");
  }
  const auto db = wordnet::load_wordnet(cfg.wordnet_dir);
  ctx.note("wordnet " + cfg.wordnet_dir.string() + ": " + std::to_string(db.synsets().size()) + " synsets");
  auto dc = cfg.dataset;
  dc.seed = cfg.seed;
  const auto ds = dataset::build_dataset(db, dc);
  dataset::write_dataset(prompt_set_file(cfg, "original"), ds.instances, ds.manifest);
  ctx.note("dataset " + std::to_string(ds.instances.size()) + " instances, checksum " + ds.manifest.checksum);

  std::vector<dataset::PromptInstance> reversible;
  for (const auto& inst : ds.instances) {
    const auto l = inst.pair.label;
    if (inst.split == dataset::Split::kTest &&
        (l == RelationLabel::kHypernym || l == RelationLabel::kHyponym || l == RelationLabel::kRandom)) {
      reversible.push_back(inst);
    }
  }
  const auto reversed = directionality::build_reversed_set(reversible);
  dataset::write_dataset(prompt_set_file(cfg, "reversed"), reversed,
                         dataset::manifest_for(reversed, cfg.seed, dc.split_ratio, dataset::kProbeTemplates));

  for (const auto& name : kAlternatePromptSets) {
    const std::vector<std::string> tmpl = {name == "novel" ? dataset::kNovelTemplate : dataset::kNoContextTemplate};
    auto set = dataset::rerender(ds.split.train, dataset::Split::kTrain, tmpl);
    const auto test = dataset::rerender(ds.split.test, dataset::Split::kTest, tmpl);
    set.insert(set.end(), test.begin(), test.end());
    dataset::write_dataset(prompt_set_file(cfg, name), set, dataset::manifest_for(set, cfg.seed, dc.split_ratio, tmpl));
  }

  std::vector<dataset::RelationPair> pairs = ds.split.train;
  pairs.insert(pairs.end(), ds.split.test.begin(), ds.split.test.end());
  const auto groups = geometry::build_groups(db, pairs, cfg.geometry_anchors, Rng(cfg.seed).split("geometry").next(),
                                             dc.random.closure_depth);
  Table gt({"group", "word_a", "word_b"});
  for (const auto& [g, list] : groups.pairs)
    for (const auto& [a, b] : list) gt.add({std::string(geometry::to_string(g)), a, b});
  gt.write(ctx, "geometry_groups.tsv");
  std::string words;
  for (const auto& w : groups.words()) words += w + "\n";
  write_text(prompt_set_file(cfg, "words"), words);

  Table summary({"relation", "pairs", "train_pairs", "test_pairs", "pos_n", "pos_v", "pos_a"});
  std::map<RelationLabel, std::pair<int, int>> split_counts;
  for (const auto& p : ds.split.train) split_counts[p.label].first++;
  for (const auto& p : ds.split.test) split_counts[p.label].second++;
  for (auto l : kAllLabels) {
    const auto& props = ds.manifest.pos_proportions.at(l);
    auto share = [&](Pos p) { auto it = props.find(p); return fmt(it == props.end() ? 0.0 : it->second); };
    summary.add({std::string(to_string(l)), std::to_string(ds.manifest.counts.at(l)),
                 std::to_string(split_counts[l].first), std::to_string(split_counts[l].second), share(Pos::kNoun),
                 share(Pos::kVerb), share(Pos::kAdj)});
  }
  summary.write(ctx, "dataset_summary.tsv");
}

void stage_probe(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto ps = load_prompt_set(ctx, cfg.prompt_set);
  const auto streams = block_streams(ps);
  const auto y_train = subset(ps.labels, ps.train);
  const auto y_test = subset(ps.labels, ps.test);
  struct Job {
    StreamId stream;
    std::uint32_t layer;
  };
  std::vector<Job> jobs;
  for (auto s : streams)
    for (std::uint32_t l = 0; l < ps.n_layers(); ++l) jobs.push_back({s, l});
  std::vector<std::vector<std::vector<std::string>>> rows(jobs.size());
  std::vector<std::string> status(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t j) {
    const auto [s, l] = jobs[j];
    const auto model = probe::train_probe(ps.table.matrix(l, s, ps.train), y_train, cfg.probe);
    write_text(probe_file(cfg, s, l), probe::save_probe(model));
    status[j] = std::string(to_string(s)) + " L" + std::to_string(l) + ": " +
                std::string(probe::to_string(model.info.status)) + " after " + std::to_string(model.info.iterations) +
                " iterations, gradient " + fmt(model.info.grad_norm);
    const auto pred = probe::predict_labels(model, ps.table.matrix(l, s, ps.test));
    for (auto rel : kAllLabels) {
      const int c = index_of(rel);
      const auto seed = Rng(cfg.seed).split("probe").split(j * 8 + static_cast<std::size_t>(c)).next();
      const auto ci = probe::bootstrap_ci(
          [&](auto r) { return probe::class_recall(pred, y_test, c, r); }, y_test, cfg.bootstrap_replicates, seed);
      rows[j].push_back({std::string(to_string(s)), std::to_string(l), std::string(to_string(rel)), fmt(ci.point),
                         fmt(ci.lo), fmt(ci.hi), fmt(ci.half_width)});
    }
  });
  Table t({"stream", "layer", "relation", "acc", "lo", "hi", "half_width"});
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    ctx.note(status[j]);
    for (auto& r : rows[j]) t.add(std::move(r));
  }
  t.write(ctx, "probe_accuracy.tsv");
}

void stage_depth(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto ps = load_prompt_set(ctx, cfg.prompt_set);
  const auto y_test = subset(ps.labels, ps.test);
  std::map<StreamId, std::vector<probe::Labels>> preds;
  for (auto s : block_streams(ps)) preds[s] = predict_layers(cfg, ps, s, ps.test);

  Table depth({"relation", "stream", "mean", "mean_lo", "mean_hi", "peak", "peak_lo", "peak_hi", "peak_depth",
               "peak_depth_lo", "peak_depth_hi", "com", "com_lo", "com_hi", "peak_depth_norm", "com_norm",
               "com_norm_lo", "com_norm_hi"});
  Table curve({"relation", "stream", "layer", "acc"});
  Table deltas({"relation", "layer", "delta_attn", "delta_mlp"});
  for (auto rel : kAllLabels) {
    const int c = index_of(rel);
    std::map<StreamId, std::vector<double>> accs;
    for (const auto& [s, layer_preds] : preds) {
      const auto seed = Rng(cfg.seed).split("depth").split(static_cast<std::uint64_t>(c * 4 + static_cast<int>(s))).next();
      const auto p = depth::profile_ci(layer_preds, y_test, c, cfg.bootstrap_replicates, seed);
      depth.add({std::string(to_string(rel)), std::string(to_string(s)), fmt(p.point.mean), fmt(p.mean.lo),
                 fmt(p.mean.hi), fmt(p.point.peak), fmt(p.peak.lo), fmt(p.peak.hi), std::to_string(p.point.peak_depth),
                 fmt(p.peak_depth.lo), fmt(p.peak_depth.hi), fmt(p.point.com), fmt(p.com.lo), fmt(p.com.hi),
                 fmt(p.point.peak_depth_norm), fmt(p.point.com_norm), fmt(p.com_norm.lo), fmt(p.com_norm.hi)});
      for (std::size_t l = 0; l < p.point.accs.size(); ++l) {
        curve.add({std::string(to_string(rel)), std::string(to_string(s)), std::to_string(l), fmt(p.point.accs[l])});
      }
      accs[s] = p.point.accs;
    }
    if (accs.size() == kBlockStreams.size()) {
      for (const auto& d : depth::block_deltas(accs)) {
        deltas.add({std::string(to_string(rel)), std::to_string(d.layer), fmt(d.delta_attn), fmt(d.delta_mlp)});
      }
    }
  }
  depth.write(ctx, "depth.tsv");
  curve.write(ctx, "depth_curve.tsv");
  deltas.write(ctx, "block_deltas.tsv");
}

void stage_geometry(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto words_path = prompt_set_file(cfg, "words");
  const auto act_path = activation_file(cfg, "words");
  auto file = read_checked(act_path, words_path);
  std::map<std::string, std::uint32_t> index;
  {
    std::istringstream in(read_text(words_path));
    std::string w;
    std::uint32_t i = 0;
    while (std::getline(in, w)) {
      if (!w.empty()) index[w] = i++;
    }
    if (i != file.manifest.n_instances) {
      throw Error(ErrorCode::kShape, "word activation file holds " + std::to_string(file.manifest.n_instances) +
                                         " instances for " + std::to_string(i) + " words");
    }
  }
  const activations::ActivationTable table(std::move(file));
  geometry::GeometryGroups groups;
  const auto gt = read_tsv(cfg.out_dir / "geometry_groups.tsv");
  for (const auto& r : gt.rows) {
    for (auto g : geometry::kAllGroups) {
      if (geometry::to_string(g) == r.at(gt.col("group"))) {
        groups.pairs[g].emplace_back(r.at(gt.col("word_a")), r.at(gt.col("word_b")));
      }
    }
  }
  Table t({"group", "slot", "layer", "mean_cos", "n_pairs"});
  for (auto slot : geometry::kAllSlots) {
    const auto [stream, layer] = geometry::slot_location(slot, table.manifest().n_layers);
    if (!table.has_stream(stream)) {
      throw Error(ErrorCode::kShape, "word activation file lacks stream " + std::string(to_string(stream)));
    }
    auto vec = [&, stream = stream, layer = layer](const std::string& w) {
      auto it = index.find(w);
      if (it == index.end()) throw Error(ErrorCode::kInvalidArgument, "no activation for word '" + w + "'");
      const auto v = table.vector(it->second, layer, stream);
      Vector out(static_cast<Eigen::Index>(v.size()));
      for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
      return out;
    };
    for (const auto& cell : geometry::group_similarity(vec, groups, slot)) {
      t.add({std::string(geometry::to_string(cell.group)), std::string(geometry::to_string(slot)),
             std::to_string(layer), fmt(cell.mean_cos), std::to_string(cell.n_pairs)});
    }
  }
  t.write(ctx, "geometry.tsv");
}

void stage_reverse(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto orig = load_prompt_set(ctx, cfg.prompt_set);
  const auto flip = load_prompt_set(ctx, "reversed");
  std::vector<std::size_t> orig_rows;
  for (auto r : orig.test) {
    const auto l = orig.instances[r].pair.label;
    if (l == RelationLabel::kHypernym || l == RelationLabel::kHyponym || l == RelationLabel::kRandom) orig_rows.push_back(r);
  }
  std::vector<std::size_t> flip_rows(flip.instances.size());
  std::iota(flip_rows.begin(), flip_rows.end(), 0);
  if (flip.n_layers() != orig.n_layers()) throw Error(ErrorCode::kShape, "reversed activations have another layer count");
  const auto r = directionality::reversal_gap(
      predict_layers(cfg, orig, StreamId::kPostResidual, orig_rows), subset(orig.labels, orig_rows),
      predict_layers(cfg, flip, StreamId::kPostResidual, flip_rows), subset(flip.labels, flip_rows),
      cfg.bootstrap_replicates, Rng(cfg.seed).split("reverse").next());
  Table t({"relation", "acc_orig", "orig_half_width", "acc_flip", "flip_half_width", "delta", "peak_layer_orig",
           "peak_layer_flip"});
  for (const auto& x : r) {
    t.add({std::string(to_string(x.relation)), fmt(x.acc_orig.point), fmt(x.acc_orig.half_width), fmt(x.acc_flip.point),
           fmt(x.acc_flip.half_width), fmt(x.delta), std::to_string(x.peak_layer_orig),
           std::to_string(x.peak_layer_flip)});
  }
  t.write(ctx, "reversal.tsv");
}

struct SaeProbeLayer {
  SaeLayer sae;
  probe::ProbeModel model;
  intervention::LinearReadout readout;
  SparseRowMatrix train_latents;
  std::map<RelationLabel, intervention::FeatureRanking> rankings;
};

std::vector<SaeProbeLayer> sae_layers(Ctx& ctx, const PromptSet& ps, bool train) {
  const auto& cfg = ctx.cfg;
  auto saes = load_saes(ctx, ps.table.manifest().d_model, ps.n_layers());
  std::vector<SaeProbeLayer> out(saes.size());
  const auto y_train = subset(ps.labels, ps.train);
  parallel_for(saes.size(), cfg.jobs, [&](std::size_t i) {
    auto& L = out[i];
    L.sae = std::move(saes[i]);
    L.train_latents = latents(ps, L.sae, ps.train);
    if (train) {
      L.model = probe::train_probe(L.train_latents, y_train, cfg.probe);
      write_text(sae_probe_file(cfg, L.sae.layer), probe::save_probe(L.model));
    } else {
      L.model = probe::load_probe(read_text(sae_probe_file(cfg, L.sae.layer)));
    }
    L.readout = intervention::LinearReadout::from_probe(L.model);
    for (auto rel : kSemanticLabels) L.rankings[rel] = intervention::rank_features(L.model, rel, L.sae.layer);
  });
  for (const auto& L : out) {
    ctx.note("SAE probe L" + std::to_string(L.sae.layer) + ": " + std::string(probe::to_string(L.model.info.status)));
  }
  return out;
}

void stage_sweep(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto ps = load_prompt_set(ctx, cfg.prompt_set);
  const auto layers = sae_layers(ctx, ps, true);
  Table curves({"relation", "layer", "k", "keep_only", "remove_only"});
  std::map<int, double> cache;
  double worst_gap = 0.0;
  auto score = [&](int k) {
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
    double total = 0.0;
    int n = 0;
    for (const auto& L : layers) {
      for (auto rel : kSemanticLabels) {
        const auto f = intervention::top_k(L.rankings.at(rel), capped_k(k, L.readout.n_features()));
        const double keep = intervention::selection_score(L.readout, L.train_latents, rel, f,
                                                          intervention::SelectionMode::kKeepOnly);
        const double remove = intervention::selection_score(L.readout, L.train_latents, rel, f,
                                                            intervention::SelectionMode::kRemoveOnly);
        worst_gap = std::max(worst_gap, std::abs(keep - remove));
        curves.add({std::string(to_string(rel)), std::to_string(L.sae.layer), std::to_string(k), fmt(keep), fmt(remove)});
        total += keep;
        ++n;
      }
    }
    return cache[k] = total / n;
  };
  const auto res = intervention::sweep_k(cfg.sweep, score);
  Table t({"k", "score", "fraction_of_ref"});
  for (const auto& [k, s] : res.curve) t.add({std::to_string(k), fmt(s), fmt(res.ref_score > 0 ? s / res.ref_score : NAN)});
  t.write(ctx, "sweep.tsv");
  curves.write(ctx, "sweep_curves.tsv");
  ordered_json j;
  j["config_hash"] = ctx.hash;
  j["k"] = res.k;
  j["k_ref"] = cfg.sweep.k_ref;
  j["ref_score"] = res.ref_score;
  j["none_qualified"] = res.none_qualified;
  j["keep_remove_max_gap"] = worst_gap;
  write_text(ctx.out("sweep_choice.json"), j.dump(2) + "\n");
  ctx.note("chosen k " + std::to_string(res.k) + (res.none_qualified ? " (no grid value reached the cutoff)" : ""));
}

int chosen_k(const RunConfig& cfg) {
  const auto j = json::parse(read_text(cfg.out_dir / "sweep_choice.json"));
  return j.at("k").get<int>();
}

struct PatchRun {
  std::vector<intervention::InterventionReport> sufficiency, necessity;
};

PatchRun run_patch(const RunConfig& cfg, const PromptSet& ps, const std::vector<SaeProbeLayer>& layers,
                   const std::vector<SaeProbeLayer>& frozen, const PromptSet& frozen_set, int k,
                   const std::map<std::pair<RelationLabel, intervention::Mode>, int>* only_layer, bool controls) {
  PatchRun out;
  const auto y_train = subset(frozen_set.labels, frozen_set.train);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& L = layers[i];
    const auto& F = frozen[i];
    const auto neutral_rows = rows_with_label(ps, ps.test, index_of(RelationLabel::kRandom));
    const auto neutral = latents(ps, L.sae, neutral_rows);
    for (auto rel : kSemanticLabels) {
      const int kk = capped_k(k, F.readout.n_features());
      const auto feats = intervention::top_k(F.rankings.at(rel), kk);
      const auto values = intervention::injection_values(F.train_latents, y_train, rel);
      const auto seed = Rng(cfg.seed).split("patch").split(static_cast<std::uint64_t>(L.sae.layer * 8 + index_of(rel)));
      auto wanted = [&](intervention::Mode m) {
        if (!only_layer) return true;
        auto it = only_layer->find({rel, m});
        return it != only_layer->end() && it->second == L.sae.layer;
      };
      if (wanted(intervention::Mode::kSufficiency)) {
        auto s = intervention::sufficiency_report(F.readout, neutral, rel, feats, values, L.sae.layer,
                                                  cfg.bootstrap_replicates, seed.split("suff").next());
        if (controls) {
          s.control_ratio = intervention::random_control(F.readout, neutral, rel, intervention::Mode::kSufficiency, kk,
                                                         values, s.delta_ld_raw.point, cfg.control_seeds,
                                                         seed.split("suff-control").next());
        }
        out.sufficiency.push_back(std::move(s));
      }
      if (wanted(intervention::Mode::kNecessity)) {
        const auto target = latents(ps, L.sae, rows_with_label(ps, ps.test, index_of(rel)));
        auto n = intervention::necessity_report(F.readout, target, rel, feats, L.sae.layer, cfg.bootstrap_replicates,
                                                seed.split("nec").next());
        if (controls) {
          n.control_ratio = intervention::random_control(F.readout, target, rel, intervention::Mode::kNecessity, kk,
                                                         values, n.delta_ld_raw.point, cfg.control_seeds,
                                                         seed.split("nec-control").next());
        }
        out.necessity.push_back(std::move(n));
      }
    }
  }
  return out;
}

std::vector<std::string> report_row(const intervention::InterventionReport& r) {
  auto ci = [](const std::optional<probe::BootstrapCI>& c, bool lo) {
    return c ? fmt(lo ? c->lo : c->hi) : std::string("NA");
  };
  return {std::string(to_string(r.relation)),
          std::to_string(r.layer),
          std::to_string(r.k),
          std::to_string(r.n_items),
          fmt(r.delta_ld_raw.point),
          fmt(r.delta_ld_raw.lo),
          fmt(r.delta_ld_raw.hi),
          r.delta_ld_std ? fmt(r.delta_ld_std->point) : "NA",
          ci(r.delta_ld_std, true),
          ci(r.delta_ld_std, false),
          r.delta_ld_std ? fmt(r.delta_ld_std->half_width) : "NA",
          fmt(r.rate.point),
          fmt(r.rate.lo),
          fmt(r.rate.hi),
          fmt(r.target_rate_before),
          fmt(r.target_rate_after),
          fmt(r.control_ratio)};
}

std::vector<std::string> report_columns(const std::string& rate) {
  return {"relation", "layer", "k", "n", "delta_ld_raw", "raw_lo", "raw_hi", "delta_ld_std", "std_lo", "std_hi",
          "std_half_width", rate, rate + "_lo", rate + "_hi", "target_rate_before", "target_rate_after",
          "control_ratio"};
}

void stage_patch(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto ps = load_prompt_set(ctx, cfg.prompt_set);
  const auto layers = sae_layers(ctx, ps, false);
  const int k = chosen_k(cfg);
  const auto run = run_patch(cfg, ps, layers, layers, ps, k, nullptr, true);

  ordered_json state;
  state["config_hash"] = ctx.hash;
  state["k"] = k;
  state["encoding"] = "pooled";
  state["ld_std_denominator"] = "population sd of baseline LD_sem over the evaluation items";
  for (auto [mode, reports, name, file] :
       {std::tuple{intervention::Mode::kSufficiency, &run.sufficiency, "delta_fr", "sufficiency"},
        std::tuple{intervention::Mode::kNecessity, &run.necessity, "drop_rate", "necessity"}}) {
    Table all(report_columns(name));
    Table peak(report_columns(name));
    for (const auto& r : *reports) all.add(report_row(r));
    for (auto rel : kSemanticLabels) {
      std::vector<intervention::InterventionReport> per;
      for (const auto& r : *reports) {
        if (r.relation == rel) per.push_back(r);
      }
      const auto& best = per[intervention::peak_report(per, mode)];
      peak.add(report_row(best));
      state["peaks"][std::string(to_string(rel))][file] = best.layer;
    }
    all.write(ctx, std::string(file) + ".tsv");
    peak.write(ctx, std::string(file) + "_peak.tsv");
  }
  write_text(ctx.out("patch_state.json"), state.dump(2) + "\n");
}

void stage_robustness(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto base = load_prompt_set(ctx, cfg.prompt_set);
  const auto frozen = sae_layers(ctx, base, false);
  const int k = chosen_k(cfg);
  const auto state = json::parse(read_text(ctx.out("patch_state.json")));
  std::map<std::pair<RelationLabel, intervention::Mode>, int> peaks;
  for (auto rel : kSemanticLabels) {
    const auto& p = state.at("peaks").at(std::string(to_string(rel)));
    peaks[{rel, intervention::Mode::kSufficiency}] = p.at("sufficiency").get<int>();
    peaks[{rel, intervention::Mode::kNecessity}] = p.at("necessity").get<int>();
  }
  std::vector<std::string> sets = {cfg.prompt_set};
  for (const auto& name : kAlternatePromptSets) {
    if (name != cfg.prompt_set && cfg.activations.count(name)) sets.push_back(name);
  }
  Table t({"prompt_set", "mean_acc", "peak_acc", "delta_fr", "drop_rate"});
  for (const auto& name : sets) {
    const auto ps = load_prompt_set(ctx, name);
    if (ps.n_layers() != base.n_layers()) throw Error(ErrorCode::kShape, "prompt set " + name + " has another layer count");
    const auto y_test = subset(ps.labels, ps.test);
    std::vector<double> macro;
    for (const auto& pred : predict_layers(cfg, ps, StreamId::kPostResidual, ps.test)) {
      macro.push_back(macro_accuracy(pred, y_test));
    }
    // Latents of this prompt set, read through the frozen probes and rankings.
    std::vector<SaeProbeLayer> layers(frozen.size());
    for (std::size_t i = 0; i < frozen.size(); ++i) layers[i].sae = frozen[i].sae;
    const auto run = run_patch(cfg, ps, layers, frozen, base, k, &peaks, false);
    const auto row = intervention::robustness_row(name, macro, run.sufficiency, run.necessity);
    t.add({row.prompt_set, fmt(row.mean_acc), fmt(row.peak_acc), fmt(row.delta_fr), fmt(row.drop_rate)});
  }
  t.write(ctx, "robustness.tsv");
}

void copy_table(Ctx& ctx, const std::string& from, const std::string& to,
                const std::function<bool(const TsvData&, const std::vector<std::string>&)>& keep = {}) {
  const auto src = ctx.out(from);
  if (!fs::exists(src)) {
    ctx.note("skipped " + to + ": " + from + " not found");
    return;
  }
  const auto data = read_tsv(src);
  Table t(data.columns);
  for (const auto& r : data.rows) {
    if (!keep || keep(data, r)) t.add(r);
  }
  t.write(ctx, "report/" + to);
}

void stage_report(Ctx& ctx) {
  copy_table(ctx, "depth.tsv", "table2_probing.tsv", [](const TsvData& d, const auto& r) {
    return r[d.col("stream")] == "post_residual";
  });
  copy_table(ctx, "reversal.tsv", "table3_reversal.tsv");
  copy_table(ctx, "sufficiency_peak.tsv", "table4_sufficiency.tsv");
  copy_table(ctx, "necessity_peak.tsv", "table5_necessity.tsv");
  copy_table(ctx, "robustness.tsv", "table6_robustness.tsv");
  copy_table(ctx, "depth_curve.tsv", "fig1_depth_curves.tsv");
  copy_table(ctx, "block_deltas.tsv", "fig2_block_deltas.tsv");
  copy_table(ctx, "geometry.tsv", "fig3_geometry.tsv");
  copy_table(ctx, "sweep.tsv", "fig4_sweep.tsv");
}

}  // namespace

RunConfig default_config() {
  RunConfig c;
  if (const char* env = std::getenv("RELPROBE_WORDNET"); env && *env) c.wordnet_dir = env;
  return c;
}

RunConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = default_config();
  try {
    check_keys(j, {"wordnet_dir", "out_dir", "seed", "dataset", "activations", "sae", "probe", "sweep", "bootstrap",
                   "control_seeds", "geometry", "prompt_set", "stages", "jobs"},
               "");
    if (j.contains("wordnet_dir")) c.wordnet_dir = j.at("wordnet_dir").get<std::string>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    read_if(j, "seed", c.seed);
    read_if(j, "control_seeds", c.control_seeds);
    read_if(j, "prompt_set", c.prompt_set);
    read_if(j, "stages", c.stages);
    read_if(j, "jobs", c.jobs);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      check_keys(d, {"pairs_per_relation", "split_ratio", "lemma_reuse", "closure_depth", "max_attempts_per_pair",
                     "pos_targets"},
                 "dataset.");
      read_if(d, "pairs_per_relation", c.dataset.pairs_per_relation);
      read_if(d, "split_ratio", c.dataset.split_ratio);
      read_if(d, "lemma_reuse", c.dataset.lemma_reuse);
      read_if(d, "closure_depth", c.dataset.random.closure_depth);
      read_if(d, "max_attempts_per_pair", c.dataset.random.max_attempts_per_pair);
      if (d.contains("pos_targets")) {
        check_keys(d.at("pos_targets"), {"n", "v", "a"}, "dataset.pos_targets.");
        c.dataset.pos_targets.clear();
        for (const auto& [k, v] : d.at("pos_targets").items()) c.dataset.pos_targets[parse_pos(k)] = v.get<double>();
      }
    }
    if (j.contains("activations")) {
      check_keys(j.at("activations"), {"original", "reversed", "words", "novel", "none"}, "activations.");
      for (const auto& [k, v] : j.at("activations").items()) c.activations[k] = v.get<std::string>();
    }
    if (j.contains("sae")) {
      check_keys(j.at("sae"), {"layers", "encoding"}, "sae.");
      if (j.at("sae").contains("encoding") && j.at("sae").at("encoding") != "pooled") {
        throw Error(ErrorCode::kConfig, "sae.encoding: only 'pooled' is available for RELACT1 inputs");
      }
      if (j.at("sae").contains("layers")) {
        for (const auto& [k, v] : j.at("sae").at("layers").items()) {
          int layer = 0;
          try {
            layer = std::stoi(k);
          } catch (const std::exception&) {
            throw Error(ErrorCode::kConfig, "sae.layers: key '" + k + "' is not a layer index");
          }
          c.sae[layer] = v.get<std::string>();
        }
      }
    }
    if (j.contains("probe")) {
      check_keys(j.at("probe"), {"l2_lambda", "max_iterations", "tolerance", "lbfgs_memory"}, "probe.");
      read_if(j.at("probe"), "l2_lambda", c.probe.l2_lambda);
      read_if(j.at("probe"), "max_iterations", c.probe.max_iterations);
      read_if(j.at("probe"), "tolerance", c.probe.tolerance);
      read_if(j.at("probe"), "lbfgs_memory", c.probe.lbfgs_memory);
    }
    if (j.contains("sweep")) {
      check_keys(j.at("sweep"), {"grid", "k_ref", "cutoff", "dictionary_size"}, "sweep.");
      if (j.at("sweep").contains("dictionary_size")) {
        c.sweep = intervention::SweepConfig::for_dictionary(j.at("sweep").at("dictionary_size").get<int>());
      }
      read_if(j.at("sweep"), "grid", c.sweep.grid);
      read_if(j.at("sweep"), "k_ref", c.sweep.k_ref);
      read_if(j.at("sweep"), "cutoff", c.sweep.cutoff);
    }
    if (j.contains("bootstrap")) {
      check_keys(j.at("bootstrap"), {"replicates"}, "bootstrap.");
      read_if(j.at("bootstrap"), "replicates", c.bootstrap_replicates);
    }
    if (j.contains("geometry")) {
      check_keys(j.at("geometry"), {"anchors"}, "geometry.");
      read_if(j.at("geometry"), "anchors", c.geometry_anchors);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  c.sweep.validate();
  if (c.bootstrap_replicates < 100) throw Error(ErrorCode::kConfig, "bootstrap.replicates must be at least 100");
  if (c.jobs < 1) throw Error(ErrorCode::kConfig, "jobs must be at least 1");
  if (c.prompt_set != "original" && std::find(kAlternatePromptSets.begin(), kAlternatePromptSets.end(), c.prompt_set) ==
                                        kAlternatePromptSets.end()) {
    throw Error(ErrorCode::kConfig, "prompt_set must be original, novel or none");
  }
  for (const auto& s : c.stages) {
    if (std::find(kStages.begin(), kStages.end(), s) == kStages.end()) {
      throw Error(ErrorCode::kConfig, "unknown stage '" + s + "'");
    }
  }
  return c;
}

RunConfig load_config(const fs::path& path) { return parse_config(read_text(path)); }

std::string to_json(const RunConfig& c) {
  ordered_json j;
  j["wordnet_dir"] = c.wordnet_dir.string();
  j["out_dir"] = c.out_dir.string();
  j["seed"] = c.seed;
  ordered_json targets;
  for (const auto& [p, t] : c.dataset.pos_targets) targets[std::string(to_string(p))] = t;
  j["dataset"] = {{"pairs_per_relation", c.dataset.pairs_per_relation},
                  {"split_ratio", c.dataset.split_ratio},
                  {"lemma_reuse", c.dataset.lemma_reuse},
                  {"closure_depth", c.dataset.random.closure_depth},
                  {"max_attempts_per_pair", c.dataset.random.max_attempts_per_pair},
                  {"pos_targets", targets}};
  ordered_json acts = ordered_json::object();
  for (const auto& [k, v] : c.activations) acts[k] = v.string();
  j["activations"] = acts;
  ordered_json layers = ordered_json::object();
  for (const auto& [k, v] : c.sae) layers[std::to_string(k)] = v.string();
  j["sae"] = {{"layers", layers}, {"encoding", "pooled"}};
  j["probe"] = {{"l2_lambda", c.probe.l2_lambda},
                {"max_iterations", c.probe.max_iterations},
                {"tolerance", c.probe.tolerance},
                {"lbfgs_memory", c.probe.lbfgs_memory}};
  j["sweep"] = {{"grid", c.sweep.grid}, {"k_ref", c.sweep.k_ref}, {"cutoff", c.sweep.cutoff}};
  j["bootstrap"] = {{"replicates", c.bootstrap_replicates}};
  j["control_seeds"] = c.control_seeds;
  j["geometry"] = {{"anchors", c.geometry_anchors}};
  j["prompt_set"] = c.prompt_set;
  j["stages"] = c.stages;
  j["jobs"] = c.jobs;
  return j.dump(2);
}

std::string config_hash(const RunConfig& c) {
  // Fields that cannot change results (output location, stage list,
  // parallelism) are left out so reruns elsewhere keep the same hash.
  RunConfig h = c;
  h.out_dir.clear();
  h.stages.clear();
  h.jobs = 1;
  std::string text = to_json(h);
  // Inputs are identified by content as well as by path.
  for (const auto& [k, p] : c.activations) {
    if (fs::exists(p)) text += "\n" + k + "=" + file_checksum(p);
  }
  return hex64(fnv1a(text));
}

fs::path prompt_set_file(const RunConfig& c, const std::string& name) {
  if (name == "original") return c.out_dir / "dataset.jsonl";
  if (name == "words") return c.out_dir / "geometry_words.txt";
  return c.out_dir / ("prompts_" + name + ".jsonl");
}

void run_stage(const std::string& stage, const RunConfig& cfg) {
  Ctx ctx{cfg, stage, config_hash(cfg), {}};
  ctx.note("relprobe " + std::string(kVersion) + " stage " + stage);
  if (stage == "dataset") stage_dataset(ctx);
  else if (stage == "probe") stage_probe(ctx);
  else if (stage == "depth") stage_depth(ctx);
  else if (stage == "geometry") stage_geometry(ctx);
  else if (stage == "reverse") stage_reverse(ctx);
  else if (stage == "sweep") stage_sweep(ctx);
  else if (stage == "patch") stage_patch(ctx);
  else if (stage == "robustness") stage_robustness(ctx);
  else if (stage == "report") stage_report(ctx);
  else throw Error(ErrorCode::kConfig, "unknown stage '" + stage + "'");
  ctx.finish();
}

void toy_extract(const fs::path& input, const fs::path& vocab_source, const fs::path& output, int n_layers,
                 int d_model, std::uint64_t seed) {
  std::vector<std::string> vocab_words;
  for (const auto& inst : dataset::read_instances(vocab_source)) {
    vocab_words.push_back(inst.pair.word_a);
    vocab_words.push_back(inst.pair.word_b);
  }
  synthetic::ToyModelSpec spec;
  spec.n_layers = n_layers;
  spec.d_model = d_model;
  spec.d_mlp = 4 * d_model;
  spec.vocabulary = synthetic::build_vocabulary(vocab_words);
  spec.weight_seed = seed;
  const synthetic::ToyModel model(spec);

  std::vector<std::string> texts;
  if (input.extension() == ".jsonl") {
    for (const auto& inst : dataset::read_instances(input)) texts.push_back(inst.text);
  } else {
    std::istringstream in(read_text(input));
    std::string w;
    while (std::getline(in, w)) {
      if (!w.empty()) texts.push_back(w);
    }
  }
  const auto f = synthetic::toy_extract(model, texts, file_checksum(input));
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  activations::write_activations(output, f.manifest, f.records);
}

std::map<int, fs::path> write_toy_saes(const fs::path& dir, int n_layers, std::uint32_t d_model, std::uint32_t m,
                                       std::uint64_t seed) {
  fs::create_directories(dir);
  std::map<int, fs::path> out;
  for (int l = 0; l < n_layers; ++l) {
    const auto p = dir / ("L" + std::to_string(l) + ".relsae");
    activations::write_sae(p, synthetic::analytic_sae(d_model, m, Rng(seed).split(static_cast<std::uint64_t>(l)).next()));
    out[l] = p;
  }
  return out;
}

}  // namespace relprobe::pipeline
