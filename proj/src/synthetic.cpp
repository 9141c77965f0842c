#include "relprobe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "relprobe/dataset.hpp"

namespace relprobe::synthetic {

namespace {

double noise(Rng& rng, double sigma, bool nonnegative) {
  const double v = sigma * rng.normal();
  return nonnegative ? std::abs(v) : v;
}

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

Vector layer_norm(const Vector& x, const Vector& g, const Vector& b) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  return ((x.array() - mean) / std::sqrt(var + 1e-5)).matrix().cwiseProduct(g) + b;
}

double gelu(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

}  // namespace

PlantedData gen_planted(const PlantedSpec& spec) {
  if (spec.d < 1 || spec.n_per_class < 1 || spec.classes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "planted spec: d, n_per_class and classes must be nonempty");
  }
  if (spec.signal_strength < 0.0 || spec.noise_sigma < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "planted spec: signal and noise must be nonnegative");
  }
  Rng rng(spec.seed);
  PlantedData out;
  if (spec.planted_dims.empty()) {
    const auto need = static_cast<int>(spec.classes.size()) * spec.dims_per_class;
    if (need > spec.d) throw Error(ErrorCode::kInvalidArgument, "planted spec: not enough dimensions");
    std::vector<int> dims(static_cast<std::size_t>(spec.d));
    for (int i = 0; i < spec.d; ++i) dims[static_cast<std::size_t>(i)] = i;
    Rng pick = rng.split("dims");
    pick.shuffle(dims.begin(), dims.end());
    for (std::size_t c = 0; c < spec.classes.size(); ++c) {
      auto first = dims.begin() + static_cast<long>(c) * spec.dims_per_class;
      std::vector<int> set(first, first + spec.dims_per_class);
      std::sort(set.begin(), set.end());
      out.planted[index_of(spec.classes[c])] = set;
    }
  } else {
    std::set<int> seen;
    for (const auto& [c, dims] : spec.planted_dims) {
      for (int j : dims) {
        if (j < 0 || j >= spec.d) throw Error(ErrorCode::kInvalidArgument, "planted dim out of range");
        if (!seen.insert(j).second) {
          throw Error(ErrorCode::kInvalidArgument, "planted dims overlap at " + std::to_string(j));
        }
      }
      auto sorted = dims;
      std::sort(sorted.begin(), sorted.end());
      out.planted[c] = sorted;
    }
  }

  const auto n = static_cast<Eigen::Index>(spec.classes.size()) * spec.n_per_class;
  out.x.resize(n, spec.d);
  out.y.reserve(static_cast<std::size_t>(n));
  Rng draw = rng.split("rows");
  Eigen::Index r = 0;
  for (int i = 0; i < spec.n_per_class; ++i) {
    for (auto label : spec.classes) {
      for (int j = 0; j < spec.d; ++j) out.x(r, j) = noise(draw, spec.noise_sigma, spec.nonnegative_noise);
      auto it = out.planted.find(index_of(label));
      if (it != out.planted.end()) {
        for (int j : it->second) out.x(r, j) += spec.signal_strength;
      }
      out.y.push_back(index_of(label));
      ++r;
    }
  }
  return out;
}

SymmetricData gen_direction_symmetric(const SymmetricSpec& spec) {
  // Patterns: syn, ant, rand and a shared directional pattern for hyper/hypo.
  if (spec.dims_per_class * 4 > spec.slot_dim) {
    throw Error(ErrorCode::kInvalidArgument, "symmetric spec: slot too small for four patterns");
  }
  Rng rng(spec.seed);
  std::vector<int> dims(static_cast<std::size_t>(spec.slot_dim));
  for (int i = 0; i < spec.slot_dim; ++i) dims[static_cast<std::size_t>(i)] = i;
  Rng pick = rng.split("dims");
  pick.shuffle(dims.begin(), dims.end());
  auto pattern = [&](int p) {
    return std::vector<int>(dims.begin() + p * spec.dims_per_class, dims.begin() + (p + 1) * spec.dims_per_class);
  };
  const auto syn = pattern(0), ant = pattern(1), rnd = pattern(2), dir = pattern(3);

  SymmetricData out;
  const Eigen::Index width = 2 * spec.slot_dim;
  out.x.resize(static_cast<Eigen::Index>(kNumClasses) * spec.n_per_class, width);
  Rng draw = rng.split("rows");
  Eigen::Index r = 0;
  for (int i = 0; i < spec.n_per_class; ++i) {
    for (auto label : kAllLabels) {
      for (Eigen::Index j = 0; j < width; ++j) out.x(r, j) = spec.noise_sigma * draw.normal();
      auto add = [&](const std::vector<int>& p, bool slot_a, bool slot_b) {
        for (int j : p) {
          if (slot_a) out.x(r, j) += spec.signal_strength;
          if (slot_b) out.x(r, spec.slot_dim + j) += spec.signal_strength;
        }
      };
      switch (label) {
        case RelationLabel::kSynonym: add(syn, true, true); break;
        case RelationLabel::kAntonym: add(ant, true, true); break;
        case RelationLabel::kRandom: add(rnd, true, true); break;
        case RelationLabel::kHypernym: add(dir, true, false); break;
        case RelationLabel::kHyponym: add(dir, false, true); break;
      }
      out.y.push_back(index_of(label));
      ++r;
    }
  }
  return out;
}

Matrix swap_slots(const Matrix& x) {
  if (x.cols() % 2 != 0) throw Error(ErrorCode::kShape, "swap_slots: odd feature count");
  const Eigen::Index h = x.cols() / 2;
  Matrix out(x.rows(), x.cols());
  out.leftCols(h) = x.rightCols(h);
  out.rightCols(h) = x.leftCols(h);
  return out;
}

Tokenizer::Tokenizer(std::vector<std::string> vocabulary) : words_(std::move(vocabulary)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate vocabulary word: " + words_[i]);
    }
  }
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < text.size() && text[i] != ' ') ++i;
    if (start == i) break;
    std::string word(text.substr(start, i - start));
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    auto it = index_.find(word);
    if (it != index_.end()) {
      out.push_back(it->second);
      continue;
    }
    for (unsigned char c : word) {
      if (c < kCharFirst || c >= kCharFirst + kCharCount) {
        throw Error(ErrorCode::kInvalidArgument, "unknown token: byte " + std::to_string(c) + " in '" + word + "'");
      }
      out.push_back(static_cast<int>(words_.size()) + (c - kCharFirst));
    }
  }
  return out;
}

std::vector<std::string> build_vocabulary(const std::vector<std::string>& words, std::size_t size) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto add = [&](const std::string& w) {
    if (out.size() < size && seen.insert(w).second) out.push_back(w);
  };
  for (const auto& tmpl : dataset::kProbeTemplates) {
    std::string lowered = tmpl;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(), [](unsigned char c) { return std::tolower(c); });
    std::size_t i = 0;
    while (i < lowered.size()) {
      const auto j = std::min(lowered.find(' ', i), lowered.size());
      const auto w = lowered.substr(i, j - i);
      if (w != "{a}" && w != "{b}") add(w);
      i = j + 1;
    }
  }
  std::set<std::string> sorted(words.begin(), words.end());
  for (const auto& w : sorted) add(w);
  return out;
}

ToyModel::ToyModel(const ToyModelSpec& spec) : spec_(spec), tokenizer_(spec.vocabulary) {
  if (spec.n_layers < 1 || spec.d_model < 1 || spec.n_heads < 1 || spec.d_model % spec.n_heads != 0 ||
      spec.d_mlp < 1 || spec.max_positions < 1) {
    throw Error(ErrorCode::kInvalidArgument, "toy model: invalid dimensions");
  }
  Rng rng(spec.weight_seed);
  const int d = spec.d_model;
  Rng emb = rng.split("embedding");
  token_embedding_ = gaussian(emb, tokenizer_.vocab_size(), d, 1.0);
  position_embedding_ = gaussian(emb, spec.max_positions, d, 0.1);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (int l = 0; l < spec.n_layers; ++l) {
    Rng br = rng.split(static_cast<std::uint64_t>(l));
    ToyBlock b;
    b.ln1_g = Vector::Ones(d);
    b.ln1_b = Vector::Zero(d);
    b.ln2_g = Vector::Ones(d);
    b.ln2_b = Vector::Zero(d);
    b.wq = gaussian(br, d, d, s);
    b.wk = gaussian(br, d, d, s);
    b.wv = gaussian(br, d, d, s);
    b.wo = gaussian(br, d, d, s);
    b.w1 = gaussian(br, d, spec.d_mlp, s);
    b.b1 = gaussian(br, spec.d_mlp, 1, 0.1).col(0);
    b.w2 = gaussian(br, spec.d_mlp, d, 1.0 / std::sqrt(static_cast<double>(spec.d_mlp)));
    b.b2 = gaussian(br, d, 1, 0.1).col(0);
    blocks_.push_back(std::move(b));
  }
}

void ToyModel::zero_blocks() {
  for (auto& b : blocks_) {
    for (Vector* v : {&b.ln1_g, &b.ln1_b, &b.ln2_g, &b.ln2_b, &b.b1, &b.b2}) v->setZero();
    for (Matrix* m : {&b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.w2}) m->setZero();
  }
}

ToyTrace ToyModel::forward(const std::vector<int>& tokens) const {
  if (tokens.empty()) throw Error(ErrorCode::kInsufficientData, "toy forward: empty input");
  if (static_cast<int>(tokens.size()) > spec_.max_positions) {
    throw Error(ErrorCode::kInvalidArgument, "toy forward: input longer than " + std::to_string(spec_.max_positions));
  }
  const auto t_len = static_cast<Eigen::Index>(tokens.size());
  const int d = spec_.d_model;
  ToyTrace tr;
  tr.embedding.resize(t_len, d);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const int id = tokens[static_cast<std::size_t>(t)];
    if (id < 0 || id >= tokenizer_.vocab_size()) {
      throw Error(ErrorCode::kInvalidArgument, "toy forward: unknown token id " + std::to_string(id));
    }
    tr.embedding.row(t) = token_embedding_.row(id) + position_embedding_.row(t);
  }
  const int dh = d / spec_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix x = tr.embedding;
  for (const auto& b : blocks_) {
    Matrix a(t_len, d), m(t_len, d);
    for (Eigen::Index t = 0; t < t_len; ++t) {
      a.row(t) = layer_norm(x.row(t).transpose(), b.ln1_g, b.ln1_b).transpose();
      m.row(t) = layer_norm(x.row(t).transpose(), b.ln2_g, b.ln2_b).transpose();
    }
    const Matrix q = a * b.wq, k = a * b.wk, v = a * b.wv;
    Matrix heads = Matrix::Zero(t_len, d);
    for (int h = 0; h < spec_.n_heads; ++h) {
      const auto qh = q.middleCols(h * dh, dh), kh = k.middleCols(h * dh, dh), vh = v.middleCols(h * dh, dh);
      for (Eigen::Index t = 0; t < t_len; ++t) {
        Vector w(t + 1);
        for (Eigen::Index s = 0; s <= t; ++s) w(s) = scale * qh.row(t).dot(kh.row(s));
        w = (w.array() - w.maxCoeff()).exp();
        w /= w.sum();
        heads.block(t, h * dh, 1, dh) = w.transpose() * vh.topRows(t + 1);
      }
    }
    Matrix attn = heads * b.wo;
    Matrix hidden = (m * b.w1).rowwise() + b.b1.transpose();
    hidden = hidden.unaryExpr(&gelu);
    Matrix mlp = (hidden * b.w2).rowwise() + b.b2.transpose();
    tr.residual_in.push_back(x);
    x = x + attn + mlp;
    tr.attention_out.push_back(std::move(attn));
    tr.mlp_out.push_back(std::move(mlp));
    tr.post_residual.push_back(x);
  }
  return tr;
}

std::vector<activations::ActivationRecord> toy_forward(const ToyModel& model, const std::vector<int>& tokens,
                                                       std::uint32_t instance_id) {
  const auto tr = model.forward(tokens);
  auto pooled = [](const Matrix& m) {
    const Vector v = activations::mean_pool(m);
    std::vector<float> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
    return out;
  };
  std::vector<activations::ActivationRecord> out;
  for (std::size_t l = 0; l < tr.post_residual.size(); ++l) {
    const auto layer = static_cast<std::uint32_t>(l);
    out.push_back({instance_id, layer, StreamId::kAttentionOut, pooled(tr.attention_out[l])});
    out.push_back({instance_id, layer, StreamId::kMlpOut, pooled(tr.mlp_out[l])});
    out.push_back({instance_id, layer, StreamId::kPostResidual, pooled(tr.post_residual[l])});
    if (l == 0) out.push_back({instance_id, layer, StreamId::kEmbedding, pooled(tr.embedding)});
  }
  return out;
}

activations::ActivationFile toy_extract(const ToyModel& model, const std::vector<std::string>& texts,
                                        const std::string& dataset_checksum) {
  activations::ActivationFile f;
  f.manifest.model_name = "toy-" + std::to_string(model.spec().n_layers) + "x" + std::to_string(model.spec().d_model);
  f.manifest.n_layers = static_cast<std::uint32_t>(model.spec().n_layers);
  f.manifest.d_model = static_cast<std::uint32_t>(model.spec().d_model);
  f.manifest.streams = {kAllStreams.begin(), kAllStreams.end()};
  f.manifest.n_instances = static_cast<std::uint32_t>(texts.size());
  f.manifest.dataset_checksum = dataset_checksum;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto recs = toy_forward(model, model.tokenizer().encode(texts[i]), static_cast<std::uint32_t>(i));
    for (auto& r : recs) f.records.push_back(std::move(r));
  }
  return f;
}

activations::SaeParams analytic_sae(std::uint32_t d, std::uint32_t m, std::uint64_t seed) {
  if (d == 0 || m == 0) throw Error(ErrorCode::kInvalidArgument, "analytic_sae: empty shape");
  Rng rng(seed);
  activations::SaeParams p;
  p.d_model = d;
  p.dict_size = m;
  p.w_dec.resize(static_cast<std::size_t>(m) * d);
  p.w_enc.resize(static_cast<std::size_t>(d) * m);
  for (std::uint32_t j = 0; j < m; ++j) {
    Vector atom(d);
    for (std::uint32_t i = 0; i < d; ++i) atom(i) = rng.normal();
    atom.normalize();
    for (std::uint32_t i = 0; i < d; ++i) {
      const auto v = static_cast<float>(atom(i));
      p.w_dec[static_cast<std::size_t>(j) * d + i] = v;
      p.w_enc[static_cast<std::size_t>(i) * m + j] = v;
    }
  }
  p.b_enc.assign(m, 0.0f);
  p.b_dec.assign(d, 0.0f);
  return p;
}

}  // namespace relprobe::synthetic
