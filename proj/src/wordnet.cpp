#include "relprobe/wordnet.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>
#include <tuple>

namespace relprobe::wordnet {

namespace {

constexpr std::array<std::pair<Pos, const char*>, 3> kPosFiles = {
    {{Pos::kNoun, "noun"}, {Pos::kVerb, "verb"}, {Pos::kAdj, "adj"}}};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "missing or unreadable file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Tokenizer over one line that reports the file and byte offset on failure.
class LineCursor {
 public:
  LineCursor(std::string_view line, const std::filesystem::path& file, std::size_t line_offset)
      : line_(line), file_(file), line_offset_(line_offset) {}

  std::string_view next() {
    while (pos_ < line_.size() && line_[pos_] == ' ') ++pos_;
    if (pos_ >= line_.size()) fail("unexpected end of line");
    std::size_t start = pos_;
    while (pos_ < line_.size() && line_[pos_] != ' ') ++pos_;
    return line_.substr(start, pos_ - start);
  }

  template <typename T>
  T number(int base = 10) {
    auto tok = next();
    T value{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value, base);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      fail("expected number, got '" + std::string(tok) + "'");
    }
    return value;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::kParse, file_.string() + ": byte offset " +
                                       std::to_string(line_offset_ + pos_) + ": " + why);
  }

 private:
  std::string_view line_;
  const std::filesystem::path& file_;
  std::size_t line_offset_;
  std::size_t pos_ = 0;
};

template <typename Fn>
void for_each_record(const std::string& text, Fn&& fn) {
  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + offset, end - offset);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    // License header lines start with a space; blank lines are tolerated.
    if (!line.empty() && line[0] != ' ') fn(line, offset);
    offset = end + 1;
  }
}

std::string strip_adj_marker(std::string_view w) {
  auto paren = w.find('(');
  return std::string(paren == std::string_view::npos ? w : w.substr(0, paren));
}

void parse_data_file(LexicalDB& db, Pos pos, const std::filesystem::path& path) {
  const std::string text = read_file(path);
  for_each_record(text, [&](std::string_view line, std::size_t offset) {
    LineCursor cur(line, path, offset);
    Synset s;
    s.id.pos = pos;
    s.id.offset = cur.number<std::uint32_t>();
    cur.number<int>();  // lex_filenum
    auto ss_type = cur.next();
    if (ss_type.size() != 1) cur.fail("bad ss_type");
    if (parse_pos(ss_type) != pos) cur.fail("ss_type does not match file");
    s.satellite = ss_type == "s";
    const auto w_cnt = cur.number<unsigned>(16);
    if (w_cnt == 0) cur.fail("synset without words");
    for (unsigned i = 0; i < w_cnt; ++i) {
      s.words.push_back(strip_adj_marker(cur.next()));
      cur.number<unsigned>(16);  // lex_id
    }
    const auto p_cnt = cur.number<unsigned>();
    for (unsigned i = 0; i < p_cnt; ++i) {
      auto symbol = cur.next();
      const auto target_offset = cur.number<std::uint32_t>();
      auto target_pos = cur.next();
      auto src_tgt = cur.next();
      if (src_tgt.size() != 4) cur.fail("bad source/target field");
      if (target_pos == "r") continue;  // adverbs are not loaded
      SynsetId target{parse_pos(target_pos), target_offset};
      unsigned src = 0, tgt = 0;
      std::from_chars(src_tgt.data(), src_tgt.data() + 2, src, 16);
      std::from_chars(src_tgt.data() + 2, src_tgt.data() + 4, tgt, 16);
      if (symbol == "@") {
        db.add_edge({s.id, target, EdgeType::kHypernym, std::nullopt, std::nullopt});
      } else if (symbol == "~") {
        db.add_edge({target, s.id, EdgeType::kHypernym, std::nullopt, std::nullopt});
      } else if (symbol == "!") {
        Edge e{s.id, target, EdgeType::kAntonym, std::nullopt, std::nullopt};
        if (src != 0 && tgt != 0) {
          if (src > w_cnt) cur.fail("antonym source word index out of range");
          e.from_word = src - 1;
          e.to_word = tgt - 1;
        }
        db.add_edge(e);
      }
    }
    db.add_synset(std::move(s));
  });
}

void parse_index_file(LexicalDB& db, Pos pos, const std::filesystem::path& path) {
  const std::string text = read_file(path);
  for_each_record(text, [&](std::string_view line, std::size_t offset) {
    LineCursor cur(line, path, offset);
    std::string lemma(cur.next());
    auto p = cur.next();
    if (p.size() != 1 || parse_pos(p) != pos) cur.fail("pos does not match file");
    const auto synset_cnt = cur.number<unsigned>();
    const auto p_cnt = cur.number<unsigned>();
    for (unsigned i = 0; i < p_cnt; ++i) cur.next();
    cur.number<unsigned>();  // sense_cnt
    cur.number<unsigned>();  // tagsense_cnt
    for (unsigned i = 0; i < synset_cnt; ++i) {
      SynsetId id{pos, cur.number<std::uint32_t>()};
      if (!db.contains(id)) cur.fail("index refers to unknown synset offset " + std::to_string(id.offset));
    }
    db.add_lemma(lemma, pos);
  });
}

}  // namespace

const Synset& LexicalDB::synset(SynsetId id) const {
  auto it = synsets_.find(id.key());
  if (it == synsets_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown synset " + std::to_string(id.offset));
  }
  return it->second;
}

const std::vector<SynsetId>& LexicalDB::synsets_of(const std::string& word) const {
  static const std::vector<SynsetId> kEmpty;
  auto it = word_index_.find(lowercase(word));
  return it == word_index_.end() ? kEmpty : it->second;
}

const std::vector<SynsetId>& LexicalDB::hypernyms_of(SynsetId id) const {
  static const std::vector<SynsetId> kEmpty;
  auto it = hypernyms_.find(id.key());
  return it == hypernyms_.end() ? kEmpty : it->second;
}

const std::vector<SynsetId>& LexicalDB::antonyms_of(SynsetId id) const {
  static const std::vector<SynsetId> kEmpty;
  auto it = antonyms_.find(id.key());
  return it == antonyms_.end() ? kEmpty : it->second;
}

std::size_t LexicalDB::count_edges(EdgeType t) const {
  return static_cast<std::size_t>(
      std::count_if(edges_.begin(), edges_.end(), [t](const Edge& e) { return e.type == t; }));
}

void LexicalDB::add_synset(Synset s) {
  auto key = s.id.key();
  if (!synsets_.emplace(key, std::move(s)).second) {
    throw Error(ErrorCode::kParse, "duplicate synset offset " + std::to_string(key & 0xffffffffu));
  }
}

void LexicalDB::add_edge(Edge e) { edges_.push_back(e); }

void LexicalDB::add_lemma(const std::string& lemma, Pos pos) { lemmas_[lemma].insert(pos); }

void LexicalDB::finalize() {
  auto edge_key = [](const Edge& e) {
    return std::make_tuple(static_cast<int>(e.type), e.from, e.to, e.from_word.value_or(SIZE_MAX),
                           e.to_word.value_or(SIZE_MAX));
  };
  std::sort(edges_.begin(), edges_.end(),
            [&](const Edge& a, const Edge& b) { return edge_key(a) < edge_key(b); });
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  word_index_.clear();
  hypernyms_.clear();
  antonyms_.clear();
  for (const auto& e : edges_) {
    if (!contains(e.from) || !contains(e.to)) {
      throw Error(ErrorCode::kParse, "pointer to unknown synset offset " +
                                         std::to_string(contains(e.from) ? e.to.offset : e.from.offset));
    }
    if (e.to_word && *e.to_word >= synset(e.to).words.size()) {
      throw Error(ErrorCode::kParse, "antonym target word index out of range at synset offset " +
                                         std::to_string(e.to.offset));
    }
    if (e.type == EdgeType::kHypernym) {
      hypernyms_[e.from.key()].push_back(e.to);
    } else {
      antonyms_[e.from.key()].push_back(e.to);
      antonyms_[e.to.key()].push_back(e.from);
    }
  }
  for (auto* table : {&hypernyms_, &antonyms_}) {
    for (auto& [key, list] : *table) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }
  }
  for (const auto& [key, s] : synsets_) {
    for (const auto& w : s.words) {
      auto& list = word_index_[lowercase(w)];
      if (list.empty() || list.back() != s.id) list.push_back(s.id);
    }
  }
}

LexicalDB load_wordnet(const std::filesystem::path& dir) {
  for (const auto& [pos, name] : kPosFiles) {
    for (const char* kind : {"index.", "data."}) {
      auto p = dir / (std::string(kind) + name);
      if (!std::filesystem::is_regular_file(p)) {
        throw Error(ErrorCode::kIo, "missing WordNet file: " + p.string());
      }
    }
  }
  LexicalDB db;
  for (const auto& [pos, name] : kPosFiles) parse_data_file(db, pos, dir / (std::string("data.") + name));
  for (const auto& [pos, name] : kPosFiles) parse_index_file(db, pos, dir / (std::string("index.") + name));
  db.finalize();
  return db;
}

}  // namespace relprobe::wordnet
