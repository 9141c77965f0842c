#include "relprobe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace relprobe::dataset {

using wordnet::EdgeType;
using wordnet::LexicalDB;
using wordnet::SynsetId;

std::string_view to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw Error(ErrorCode::kParse, "unknown split '" + std::string(s) + "'");
}

bool passes_lexical_filter(std::string_view word) {
  if (word.size() <= 2) return false;
  return std::all_of(word.begin(), word.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

namespace {

std::pair<std::string, std::string> unordered_key(const RelationPair& p) {
  return p.word_a < p.word_b ? std::make_pair(p.word_a, p.word_b) : std::make_pair(p.word_b, p.word_a);
}

bool symmetric(RelationLabel l) {
  return l == RelationLabel::kSynonym || l == RelationLabel::kAntonym || l == RelationLabel::kRandom;
}

std::uint64_t label_seed(std::uint64_t seed, RelationLabel label, std::optional<Pos> pos) {
  Rng r = Rng(seed).split(to_string(label));
  if (pos) r = r.split(static_cast<std::uint64_t>(*pos));
  return r.next();
}

}  // namespace

bool ExclusionSet::admits(const RelationPair& p) const {
  if (pairs_.count(unordered_key(p))) return false;
  if (lemma_unique_ && (lemmas_.count(p.word_a) || lemmas_.count(p.word_b))) return false;
  return true;
}

void ExclusionSet::insert(const RelationPair& p) {
  pairs_.insert(unordered_key(p));
  lemmas_.insert(p.word_a);
  lemmas_.insert(p.word_b);
}

std::vector<RelationPair> candidate_pairs(const LexicalDB& db, RelationLabel label,
                                          std::optional<Pos> pos) {
  if (label == RelationLabel::kRandom) {
    throw Error(ErrorCode::kInvalidArgument, "random pairs are sampled, not enumerated");
  }
  std::vector<RelationPair> out;
  auto emit = [&](const std::string& a, const std::string& b, Pos p) {
    if (pos && *pos != p) return;
    if (a == b || !passes_lexical_filter(a) || !passes_lexical_filter(b)) return;
    RelationPair rp{a, b, label, p};
    if (symmetric(label) && rp.word_b < rp.word_a) std::swap(rp.word_a, rp.word_b);
    out.push_back(std::move(rp));
  };

  switch (label) {
    case RelationLabel::kSynonym:
      for (const auto& [key, s] : db.synsets()) {
        for (std::size_t i = 0; i < s.words.size(); ++i)
          for (std::size_t j = i + 1; j < s.words.size(); ++j) emit(s.words[i], s.words[j], s.id.pos);
      }
      break;
    case RelationLabel::kAntonym:
      for (const auto& e : db.edges()) {
        if (e.type != EdgeType::kAntonym) continue;
        const auto& from = db.synset(e.from);
        const auto& to = db.synset(e.to);
        if (e.from_word && e.to_word) {
          emit(from.words[*e.from_word], to.words[*e.to_word], from.id.pos);
        } else {
          for (const auto& a : from.words)
            for (const auto& b : to.words) emit(a, b, from.id.pos);
        }
      }
      break;
    case RelationLabel::kHypernym:
    case RelationLabel::kHyponym:
      for (const auto& e : db.edges()) {
        if (e.type != EdgeType::kHypernym) continue;
        const auto& child = db.synset(e.from);
        const auto& parent = db.synset(e.to);
        for (const auto& c : child.words)
          for (const auto& p : parent.words) {
            if (label == RelationLabel::kHypernym) emit(c, p, child.id.pos);
            else emit(p, c, parent.id.pos);
          }
      }
      break;
    case RelationLabel::kRandom:
      break;
  }

  auto key = [](const RelationPair& p) { return std::tie(p.word_a, p.word_b); };
  std::stable_sort(out.begin(), out.end(), [&](const auto& x, const auto& y) { return key(x) < key(y); });
  out.erase(std::unique(out.begin(), out.end(),
                        [&](const auto& x, const auto& y) { return key(x) == key(y); }),
            out.end());
  return out;
}

std::vector<RelationPair> extract_relation_pairs(const LexicalDB& db, RelationLabel label,
                                                 std::size_t n, std::uint64_t seed,
                                                 std::optional<Pos> pos, ExclusionSet* exclusion) {
  if (label == RelationLabel::kRandom) {
    throw Error(ErrorCode::kInvalidArgument, "extract_relation_pairs: use sample_random_pairs for 'random'");
  }
  std::vector<RelationPair> out;
  if (n == 0) return out;

  auto candidates = candidate_pairs(db, label, pos);
  Rng rng(seed);
  rng.shuffle(candidates.begin(), candidates.end());
  ExclusionSet local;
  ExclusionSet& ex = exclusion ? *exclusion : local;
  for (auto& c : candidates) {
    if (out.size() == n) break;
    if (symmetric(label) && (rng.next() & 1)) std::swap(c.word_a, c.word_b);
    if (!ex.admits(c)) continue;
    ex.insert(c);
    out.push_back(c);
  }
  if (out.size() < n) {
    throw Error(ErrorCode::kExhausted,
                "not enough " + std::string(to_string(label)) + " pairs" +
                    (pos ? " with pos " + std::string(to_string(*pos)) : std::string()) +
                    ": requested " + std::to_string(n) + ", achievable " + std::to_string(out.size()));
  }
  return out;
}

bool related(const LexicalDB& db, const std::string& a, const std::string& b, int closure_depth) {
  const auto& sa = db.synsets_of(a);
  const auto& sb = db.synsets_of(b);
  std::unordered_set<std::uint64_t> set_b;
  for (auto id : sb) set_b.insert(id.key());
  for (auto id : sa) {
    if (set_b.count(id.key())) return true;
  }
  for (auto id : sa) {
    for (auto ant : db.antonyms_of(id)) {
      if (set_b.count(ant.key())) return true;
    }
  }
  // Hypernym closure, upward from each side towards the other.
  auto reaches = [&](const std::vector<SynsetId>& from, const std::vector<SynsetId>& to) {
    std::unordered_set<std::uint64_t> targets;
    for (auto id : to) targets.insert(id.key());
    std::unordered_set<std::uint64_t> seen;
    std::deque<std::pair<SynsetId, int>> queue;
    for (auto id : from) queue.emplace_back(id, 0);
    while (!queue.empty()) {
      auto [id, depth] = queue.front();
      queue.pop_front();
      if (depth >= closure_depth) continue;
      for (auto up : db.hypernyms_of(id)) {
        if (targets.count(up.key())) return true;
        if (seen.insert(up.key()).second) queue.emplace_back(up, depth + 1);
      }
    }
    return false;
  };
  return reaches(sa, sb) || reaches(sb, sa);
}

std::vector<RelationPair> sample_random_pairs(const LexicalDB& db, std::size_t n, std::uint64_t seed,
                                              std::optional<Pos> pos, ExclusionSet* exclusion,
                                              const RandomPairOptions& options) {
  std::vector<RelationPair> out;
  if (n == 0) return out;

  std::vector<std::pair<std::string, Pos>> pool;
  for (const auto& [lemma, parts] : db.lemmas()) {
    if (!passes_lexical_filter(lemma)) continue;
    if (pos) {
      if (parts.count(*pos)) pool.emplace_back(lemma, *pos);
    } else {
      pool.emplace_back(lemma, *parts.begin());
    }
  }
  if (pool.size() < 2) {
    throw Error(ErrorCode::kExhausted, "random pairs: fewer than two eligible lemmas");
  }

  ExclusionSet local;
  ExclusionSet& ex = exclusion ? *exclusion : local;
  Rng rng(seed);
  const std::size_t budget = options.max_attempts_per_pair * n;
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (attempts++ >= budget) {
      throw Error(ErrorCode::kExhausted, "random pairs: rejection budget exceeded after " +
                                             std::to_string(budget) + " attempts with " +
                                             std::to_string(out.size()) + " of " + std::to_string(n) +
                                             " pairs");
    }
    const auto& a = pool[rng.below(pool.size())];
    const auto& b = pool[rng.below(pool.size())];
    if (a.first == b.first) continue;
    RelationPair p{a.first, b.first, RelationLabel::kRandom, a.second};
    if (!ex.admits(p)) continue;
    if (related(db, p.word_a, p.word_b, options.closure_depth)) continue;
    ex.insert(p);
    out.push_back(std::move(p));
  }
  return out;
}

PosTargets default_pos_targets() { return {{Pos::kNoun, 0.66}, {Pos::kVerb, 0.23}, {Pos::kAdj, 0.11}}; }

std::map<RelationLabel, std::map<Pos, double>> pos_proportions(const std::vector<RelationPair>& pairs) {
  std::map<RelationLabel, std::map<Pos, double>> counts;
  std::map<RelationLabel, double> totals;
  for (const auto& p : pairs) {
    counts[p.label][p.pos] += 1.0;
    totals[p.label] += 1.0;
  }
  for (auto& [label, by_pos] : counts) {
    for (auto q : kAllPos) by_pos[q] = by_pos[q] / totals[label];
  }
  return counts;
}

namespace {

// Largest-remainder apportionment of m items over the targets.
std::map<Pos, std::size_t> quotas_for(const PosTargets& targets, std::size_t m) {
  std::map<Pos, std::size_t> q;
  std::vector<std::pair<double, Pos>> remainders;
  std::size_t assigned = 0;
  for (const auto& [p, t] : targets) {
    const double exact = t * static_cast<double>(m);
    q[p] = static_cast<std::size_t>(std::floor(exact));
    assigned += q[p];
    remainders.emplace_back(exact - std::floor(exact), p);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t i = 0; assigned < m && i < remainders.size(); ++i, ++assigned) {
    q[remainders[i].second] += 1;
  }
  return q;
}

bool within_tolerance(const std::map<Pos, std::size_t>& counts, const PosTargets& targets, double tol) {
  std::size_t total = 0;
  for (const auto& [p, c] : counts) total += c;
  if (total == 0) return false;
  for (const auto& [p, t] : targets) {
    auto it = counts.find(p);
    const double share = it == counts.end() ? 0.0 : static_cast<double>(it->second) / total;
    if (std::abs(share - t) > tol + 1e-12) return false;
  }
  for (const auto& [p, c] : counts) {
    if (c > 0 && !targets.count(p)) return false;
  }
  return true;
}

void check_targets(const PosTargets& targets) {
  double sum = 0.0;
  for (const auto& [p, t] : targets) {
    if (t < 0.0) throw Error(ErrorCode::kInvalidArgument, "negative POS target");
    sum += t;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "POS targets must sum to 1");
  }
}

}  // namespace

std::vector<RelationPair> enforce_pos_balance(const std::vector<RelationPair>& pairs,
                                              const PosTargets& targets, double tolerance) {
  check_targets(targets);
  std::map<RelationLabel, std::vector<const RelationPair*>> groups;
  for (const auto& p : pairs) groups[p.label].push_back(&p);

  std::map<RelationLabel, std::set<const RelationPair*>> keep;
  bool changed = false;
  for (const auto& [label, group] : groups) {
    std::map<Pos, std::size_t> avail;
    for (auto* p : group) avail[p->pos]++;
    if (within_tolerance(avail, targets, tolerance)) {
      keep[label].insert(group.begin(), group.end());
      continue;
    }
    changed = true;
    // Deficient bucket: smallest supply relative to its target.
    Pos deficient = targets.begin()->first;
    double worst = INFINITY;
    for (const auto& [p, t] : targets) {
      if (t <= 0.0) continue;
      const double ratio = static_cast<double>(avail[p]) / t;
      if (ratio < worst) {
        worst = ratio;
        deficient = p;
      }
    }
    std::size_t best = 0;
    for (std::size_t m = group.size(); m > 0; --m) {
      auto q = quotas_for(targets, m);
      bool fits = true;
      for (const auto& [p, c] : q) fits = fits && c <= avail[p];
      if (fits) {
        best = m;
        break;
      }
    }
    auto q = quotas_for(targets, best);
    if (best == 0 || !within_tolerance(q, targets, tolerance)) {
      throw Error(ErrorCode::kUnattainable,
                  "POS balance unattainable for " + std::string(to_string(label)) +
                      ": bucket '" + std::string(to_string(deficient)) + "' has " +
                      std::to_string(avail[deficient]) + " of " + std::to_string(group.size()) + " pairs");
    }
    std::map<Pos, std::size_t> taken;
    for (auto* p : group) {
      if (taken[p->pos] < q[p->pos]) {
        taken[p->pos]++;
        keep[label].insert(p);
      }
    }
  }
  if (!changed) return pairs;
  std::vector<RelationPair> out;
  for (const auto& p : pairs) {
    if (keep[p.label].count(&p)) out.push_back(p);
  }
  return out;
}

SplitResult split_lemma_disjoint(const std::vector<RelationPair>& pairs, double ratio,
                                 std::uint64_t seed, int tolerance) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "split ratio must lie in (0, 1)");
  }
  // Union-find over lemmas.
  std::unordered_map<std::string, std::size_t> lemma_id;
  std::vector<std::size_t> parent;
  auto id_of = [&](const std::string& w) {
    auto [it, inserted] = lemma_id.emplace(w, parent.size());
    if (inserted) parent.push_back(parent.size());
    return it->second;
  };
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& p : pairs) {
    auto a = find(id_of(p.word_a));
    auto b = find(id_of(p.word_b));
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }

  struct Component {
    std::vector<std::size_t> members;
    std::array<int, kNumClasses> counts{};
  };
  std::map<std::size_t, Component> by_root;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& c = by_root[find(lemma_id.at(pairs[i].word_a))];
    c.members.push_back(i);
    c.counts[index_of(pairs[i].label)]++;
  }
  std::vector<Component> comps;
  for (auto& [root, c] : by_root) comps.push_back(std::move(c));
  Rng rng(seed);
  rng.shuffle(comps.begin(), comps.end());
  std::stable_sort(comps.begin(), comps.end(),
                   [](const auto& x, const auto& y) { return x.members.size() > y.members.size(); });

  std::array<int, kNumClasses> total{}, train_target{}, test_target{}, test_now{};
  for (const auto& p : pairs) total[index_of(p.label)]++;
  for (int c = 0; c < kNumClasses; ++c) {
    train_target[c] = static_cast<int>(std::lround(ratio * total[c]));
    test_target[c] = total[c] - train_target[c];
  }

  std::vector<bool> to_test(pairs.size(), false);
  for (const auto& comp : comps) {
    bool fits = true;
    for (int c = 0; c < kNumClasses; ++c) fits = fits && test_now[c] + comp.counts[c] <= test_target[c];
    if (!fits) continue;
    for (int c = 0; c < kNumClasses; ++c) test_now[c] += comp.counts[c];
    for (auto i : comp.members) to_test[i] = true;
  }

  SplitResult out;
  for (std::size_t i = 0; i < pairs.size(); ++i) (to_test[i] ? out.test : out.train).push_back(pairs[i]);
  out.achieved_ratio = pairs.empty() ? 0.0 : static_cast<double>(out.train.size()) / pairs.size();
  for (int c = 0; c < kNumClasses; ++c) {
    const int train_now = total[c] - test_now[c];
    out.max_label_deviation = std::max(out.max_label_deviation, std::abs(train_now - train_target[c]));
  }
  if (out.max_label_deviation > tolerance) {
    std::ostringstream msg;
    msg << "lemma-disjoint split unattainable at ratio " << ratio << ": best achievable ratio "
        << out.achieved_ratio << " (worst label off by " << out.max_label_deviation << " pairs)";
    throw Error(ErrorCode::kUnattainable, msg.str());
  }
  return out;
}

std::string render(std::string_view tmpl, std::string_view a, std::string_view b) {
  std::string out;
  out.reserve(tmpl.size() + a.size() + b.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl.compare(i, 3, "{A}") == 0) {
      out += a;
      i += 2;
    } else if (tmpl.compare(i, 3, "{B}") == 0) {
      out += b;
      i += 2;
    } else {
      out += tmpl[i];
    }
  }
  return out;
}

std::vector<PromptInstance> apply_prompts(const std::vector<RelationPair>& pairs, Split split,
                                          const std::vector<std::string>& templates) {
  std::vector<PromptInstance> out;
  out.reserve(pairs.size() * templates.size());
  for (const auto& p : pairs) {
    for (std::size_t t = 0; t < templates.size(); ++t) {
      out.push_back({p, static_cast<int>(t), render(templates[t], p.word_a, p.word_b), split});
    }
  }
  return out;
}

std::vector<PromptInstance> apply_prompts(const SplitResult& split, const std::vector<std::string>& templates) {
  auto out = apply_prompts(split.train, Split::kTrain, templates);
  auto test = apply_prompts(split.test, Split::kTest, templates);
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

std::vector<PromptInstance> rerender(const std::vector<RelationPair>& pairs, Split split,
                                     const std::vector<std::string>& templates) {
  return apply_prompts(pairs, split, templates);
}

PosTargets effective_pos_targets(const LexicalDB& db, RelationLabel label, const PosTargets& targets) {
  PosTargets out;
  double mass = 0.0;
  for (const auto& [p, t] : targets) {
    const bool has = label == RelationLabel::kRandom
                         ? std::any_of(db.lemmas().begin(), db.lemmas().end(),
                                       [p = p](const auto& kv) { return kv.second.count(p) > 0; })
                         : !candidate_pairs(db, label, p).empty();
    if (has && t > 0.0) {
      out[p] = t;
      mass += t;
    }
  }
  if (out.empty()) {
    throw Error(ErrorCode::kExhausted, "no candidates for relation " + std::string(to_string(label)));
  }
  for (auto& [p, t] : out) t /= mass;
  return out;
}

Dataset build_dataset(const LexicalDB& db, const DatasetConfig& config) {
  check_targets(config.pos_targets);
  ExclusionSet exclusion(!config.lemma_reuse);
  std::vector<RelationPair> pairs;
  const std::size_t n = config.pairs_per_relation;

  for (auto label : kAllLabels) {
    const auto targets = effective_pos_targets(db, label, config.pos_targets);

    std::vector<RelationPair> group;
    for (const auto& [p, quota] : quotas_for(targets, n)) {
      const auto seed = label_seed(config.seed, label, p);
      auto part = label == RelationLabel::kRandom
                      ? sample_random_pairs(db, quota, seed, p, &exclusion, config.random)
                      : extract_relation_pairs(db, label, quota, seed, p, &exclusion);
      group.insert(group.end(), part.begin(), part.end());
    }
    // Interleave POS buckets deterministically so downstream order carries no POS blocks.
    Rng(label_seed(config.seed, label, std::nullopt)).shuffle(group.begin(), group.end());
    group = enforce_pos_balance(group, targets);
    pairs.insert(pairs.end(), group.begin(), group.end());
  }

  Dataset ds;
  ds.split = split_lemma_disjoint(pairs, config.split_ratio, Rng(config.seed).split("split").next());
  ds.instances = apply_prompts(ds.split);
  ds.manifest = manifest_for(ds.instances, config.seed, config.split_ratio, kProbeTemplates);
  return ds;
}

DatasetManifest manifest_for(const std::vector<PromptInstance>& instances, std::uint64_t seed,
                             double split_ratio, const std::vector<std::string>& templates) {
  DatasetManifest m;
  m.seed = seed;
  m.split_ratio = split_ratio;
  m.templates = templates;
  m.n_instances = instances.size();
  std::vector<RelationPair> unique_pairs;
  for (const auto& inst : instances) {
    if (inst.template_id == 0) unique_pairs.push_back(inst.pair);
  }
  for (const auto& p : unique_pairs) m.counts[p.label]++;
  m.pos_proportions = pos_proportions(unique_pairs);
  m.checksum = dataset_checksum(instances);
  return m;
}

std::string serialize_instances(const std::vector<PromptInstance>& instances) {
  std::string out;
  for (const auto& inst : instances) {
    nlohmann::ordered_json j;
    j["text"] = inst.text;
    j["word_a"] = inst.pair.word_a;
    j["word_b"] = inst.pair.word_b;
    j["label"] = to_string(inst.pair.label);
    j["pos"] = to_string(inst.pair.pos);
    j["template_id"] = inst.template_id;
    j["split"] = to_string(inst.split);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PromptInstance> parse_instances(std::string_view jsonl) {
  std::vector<PromptInstance> out;
  std::size_t offset = 0;
  std::size_t line_no = 0;
  while (offset < jsonl.size()) {
    std::size_t end = jsonl.find('\n', offset);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(offset, end - offset);
    ++line_no;
    offset = end + 1;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      PromptInstance inst;
      inst.text = j.at("text").get<std::string>();
      inst.pair.word_a = j.at("word_a").get<std::string>();
      inst.pair.word_b = j.at("word_b").get<std::string>();
      inst.pair.label = parse_label(j.at("label").get<std::string>());
      inst.pair.pos = parse_pos(j.at("pos").get<std::string>());
      inst.template_id = j.at("template_id").get<int>();
      inst.split = parse_split(j.at("split").get<std::string>());
      out.push_back(std::move(inst));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, "dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string dataset_checksum(const std::vector<PromptInstance>& instances) {
  return hex64(fnv1a(serialize_instances(instances)));
}

std::string serialize_manifest(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["seed"] = m.seed;
  for (const auto& [label, c] : m.counts) j["counts"][std::string(to_string(label))] = c;
  for (const auto& [label, by_pos] : m.pos_proportions) {
    for (const auto& [p, share] : by_pos) {
      j["pos_proportions"][std::string(to_string(label))][std::string(to_string(p))] = share;
    }
  }
  j["split_ratio"] = m.split_ratio;
  j["templates"] = m.templates;
  j["n_instances"] = m.n_instances;
  j["checksum"] = m.checksum;
  return j.dump(2) + "\n";
}

DatasetManifest parse_manifest(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("counts")) {
      for (auto& [k, v] : j["counts"].items()) m.counts[parse_label(k)] = v.get<std::size_t>();
    }
    if (j.contains("pos_proportions")) {
      for (auto& [k, v] : j["pos_proportions"].items()) {
        for (auto& [p, share] : v.items()) m.pos_proportions[parse_label(k)][parse_pos(p)] = share.get<double>();
      }
    }
    m.split_ratio = j.at("split_ratio").get<double>();
    m.templates = j.at("templates").get<std::vector<std::string>>();
    m.n_instances = j.at("n_instances").get<std::size_t>();
    m.checksum = j.at("checksum").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("dataset manifest: ") + e.what());
  }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& jsonl_path) {
  auto p = jsonl_path;
  p.replace_extension(".manifest.json");
  return p;
}

void write_dataset(const std::filesystem::path& jsonl_path, const std::vector<PromptInstance>& instances,
                   const DatasetManifest& manifest) {
  if (jsonl_path.has_parent_path()) std::filesystem::create_directories(jsonl_path.parent_path());
  {
    std::ofstream out(jsonl_path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + jsonl_path.string());
    out << serialize_instances(instances);
  }
  std::ofstream out(manifest_path_for(jsonl_path), std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest for " + jsonl_path.string());
  out << serialize_manifest(manifest);
}

namespace {
std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "missing or unreadable file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

std::vector<PromptInstance> read_instances(const std::filesystem::path& jsonl_path) {
  return parse_instances(slurp(jsonl_path));
}

DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
  return parse_manifest(slurp(manifest_path));
}

}  // namespace relprobe::dataset
