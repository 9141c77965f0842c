#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "relprobe/common.hpp"

namespace relprobe {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

}  // namespace relprobe

namespace relprobe::activations {

inline constexpr char kActivationMagic[8] = {'R', 'E', 'L', 'A', 'C', 'T', '1', '\0'};
inline constexpr char kSaeMagic[8] = {'R', 'E', 'L', 'S', 'A', 'E', '1', '\0'};
inline constexpr std::uint32_t kFormatVersion = 1;

/// Pooled activation of one instance at one layer and stream.
struct ActivationRecord {
  std::uint32_t instance_id = 0;
  std::uint32_t layer = 0;
  StreamId stream = StreamId::kPostResidual;
  std::vector<float> vector;

  friend bool operator==(const ActivationRecord&, const ActivationRecord&) = default;
};

struct ActivationManifest {
  std::string model_name;
  std::uint32_t n_layers = 0;
  std::uint32_t d_model = 0;
  std::vector<StreamId> streams;  // ascending stream id
  std::uint32_t n_instances = 0;
  std::string dataset_checksum;
  std::string endianness = "little";

  std::uint32_t stream_mask() const;
  /// Records per instance: one per (layer, block stream), plus one embedding
  /// record stored at layer 0 when that stream is present.
  std::size_t records_per_instance() const;
};

/// Canonical record order: (instance, layer, stream).
std::vector<ActivationRecord> expected_layout(const ActivationManifest& m);

/// Writes the RELACT1 binary and a JSON manifest next to it (<path>.json).
void write_activations(const std::filesystem::path& path, const ActivationManifest& manifest,
                       const std::vector<ActivationRecord>& records);

struct ActivationFile {
  ActivationManifest manifest;
  std::vector<ActivationRecord> records;
};

/// Reads a RELACT1 binary. Model name and dataset checksum come from the JSON
/// manifest when one exists; header fields must agree with it.
ActivationFile read_activations(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& binary_path);

/// Random access over an ActivationFile.
class ActivationTable {
 public:
  explicit ActivationTable(ActivationFile file);

  const ActivationManifest& manifest() const { return file_.manifest; }
  bool has_stream(StreamId s) const;
  std::span<const float> vector(std::uint32_t instance, std::uint32_t layer, StreamId stream) const;
  /// Rows in the given instance order, converted to double.
  Matrix matrix(std::uint32_t layer, StreamId stream, std::span<const std::size_t> instances) const;

 private:
  ActivationFile file_;
  std::vector<std::size_t> offset_of_instance_;
};

/// Elementwise mean over the rows of a T x d token matrix.
Vector mean_pool(const Matrix& tokens);

enum class Nonlinearity : std::uint32_t { kRelu = 0 };

/// Sparse autoencoder weights, stored exactly as in the RELSAE1 file.
/// Encoding: z = relu(x . W_enc + b_enc), W_enc is d x m row-major.
/// Decoding: x_hat = z . W_dec + b_dec, W_dec is m x d row-major.
struct SaeParams {
  std::uint32_t d_model = 0;
  std::uint32_t dict_size = 0;
  Nonlinearity nonlinearity = Nonlinearity::kRelu;
  std::vector<float> w_enc;
  std::vector<float> b_enc;
  std::vector<float> w_dec;
  std::vector<float> b_dec;

  void validate() const;
  friend bool operator==(const SaeParams&, const SaeParams&) = default;
};

void write_sae(const std::filesystem::path& path, const SaeParams& params);
SaeParams read_sae(const std::filesystem::path& path);

Vector sae_encode(const Vector& x, const SaeParams& p);
Vector sae_decode(const Vector& z, const SaeParams& p);

/// Encodes each row of X (n x d); the result keeps only nonzero latents.
SparseRowMatrix sae_encode_batch(const Matrix& x, const SaeParams& p);

/// Token-level mode: encode every token, then mean-pool the latents.
Vector sae_encode_tokens(const Matrix& tokens, const SaeParams& p);

/// W_enc = W_dec = I, zero biases.
SaeParams identity_sae(std::uint32_t d);

}  // namespace relprobe::activations
