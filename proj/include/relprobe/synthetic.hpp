#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "relprobe/activation_store.hpp"
#include "relprobe/probe.hpp"

namespace relprobe::synthetic {

struct PlantedSpec {
  int d = 512;
  std::vector<RelationLabel> classes = {kAllLabels.begin(), kAllLabels.end()};
  int dims_per_class = 8;
  /// class index -> planted dims; drawn from the seed when empty.
  std::map<int, std::vector<int>> planted_dims;
  double signal_strength = 3.0;
  double noise_sigma = 1.0;
  int n_per_class = 500;
  std::uint64_t seed = 0;
  /// |N(0, sigma)| noise, so rows look like nonnegative SAE latents.
  bool nonnegative_noise = true;
};

struct PlantedData {
  Matrix x;
  probe::Labels y;
  std::map<int, std::vector<int>> planted;  // sorted dims per class index
};

/// Noise everywhere, plus signal_strength on the planted dims of each row's
/// class. Throws kInvalidArgument for overlapping or out-of-range dims.
PlantedData gen_planted(const PlantedSpec& spec);

/// Features of an ordered word pair as [slot A | slot B]. Synonym, antonym
/// and random patterns occupy both slots; hypernym puts its pattern in slot A
/// and hyponym the same pattern in slot B, so reversing the pair turns one
/// class into the other exactly.
struct SymmetricSpec {
  int slot_dim = 32;
  int dims_per_class = 4;
  double signal_strength = 3.0;
  double noise_sigma = 1.0;
  int n_per_class = 1000;
  std::uint64_t seed = 0;
};

struct SymmetricData {
  Matrix x;
  probe::Labels y;
};

SymmetricData gen_direction_symmetric(const SymmetricSpec& spec);
/// Word-order reversal in feature space.
Matrix swap_slots(const Matrix& x);

/// Whitespace word tokenizer with a per-character fallback for words outside
/// the vocabulary. Character ids follow the word ids.
class Tokenizer {
 public:
  explicit Tokenizer(std::vector<std::string> vocabulary);

  std::vector<int> encode(std::string_view text) const;
  int vocab_size() const { return static_cast<int>(words_.size()) + kCharCount; }
  const std::vector<std::string>& words() const { return words_; }

 private:
  static constexpr int kCharFirst = 32;
  static constexpr int kCharCount = 95;  // printable ASCII
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

/// Template words first, then the sorted unique words, capped at `size`.
std::vector<std::string> build_vocabulary(const std::vector<std::string>& words, std::size_t size = 1000);

struct ToyModelSpec {
  int n_layers = 2;
  int d_model = 16;
  int n_heads = 2;
  int d_mlp = 64;
  int max_positions = 64;
  std::vector<std::string> vocabulary;
  std::uint64_t weight_seed = 0;
};

struct ToyBlock {
  Vector ln1_g, ln1_b, ln2_g, ln2_b;
  Matrix wq, wk, wv, wo;  // d x d
  Matrix w1;              // d x d_mlp
  Vector b1;
  Matrix w2;  // d_mlp x d
  Vector b2;
};

struct ToyTrace {
  Matrix embedding;  // T x d
  std::vector<Matrix> residual_in, attention_out, mlp_out, post_residual;
};

/// Pre-LN decoder with parallel attention and MLP branches:
/// post = x + attn(LN1(x)) + mlp(LN2(x)).
class ToyModel {
 public:
  explicit ToyModel(const ToyModelSpec& spec);

  const ToyModelSpec& spec() const { return spec_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  /// Sets every block weight and bias to zero; embeddings are kept.
  void zero_blocks();

  ToyTrace forward(const std::vector<int>& tokens) const;

 private:
  ToyModelSpec spec_;
  Tokenizer tokenizer_;
  Matrix token_embedding_;     // vocab x d
  Matrix position_embedding_;  // max_positions x d
  std::vector<ToyBlock> blocks_;
};

/// Mean-pooled records for one input in (layer, stream) order; the
/// embedding stream is emitted at layer 0.
std::vector<activations::ActivationRecord> toy_forward(const ToyModel& model, const std::vector<int>& tokens,
                                                       std::uint32_t instance_id);

/// Runs every text through the model and packages an activation file.
activations::ActivationFile toy_extract(const ToyModel& model, const std::vector<std::string>& texts,
                                        const std::string& dataset_checksum);

/// m random unit atoms in R^d as decoder rows, encoder = decoder transpose,
/// zero biases.
activations::SaeParams analytic_sae(std::uint32_t d, std::uint32_t m, std::uint64_t seed);

}  // namespace relprobe::synthetic
