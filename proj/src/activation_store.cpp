#include "relprobe/activation_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace relprobe::activations {

namespace {

constexpr std::size_t kActHeaderBytes = 8 + 5 * 4;
constexpr std::size_t kSaeHeaderBytes = 8 + 4 * 4;
constexpr std::size_t kTrailerBytes = 8;

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void floats(std::span<const float> v) {
    for (float f : v) f32(f);
  }
  const std::string& bytes() const { return buf_; }

  void seal() {
    Fnv1a h;
    h.update(buf_);
    u64(h.digest());
  }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string name) : data_(data), name_(std::move(name)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  float f32() {
    float f = std::bit_cast<float>(u32());
    if (!std::isfinite(f)) {
      throw Error(ErrorCode::kNonFinite, name_ + ": non-finite value at byte offset " + std::to_string(pos_ - 4));
    }
    return f;
  }
  void floats(std::vector<float>& out, std::size_t n) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f32();
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) {
      throw Error(ErrorCode::kTruncated, name_ + ": truncated at byte offset " + std::to_string(pos_));
    }
  }
  std::string_view data_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "missing or unreadable file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Magic, minimum size and trailing checksum, in that order, so each failure
// class reports its own code.
void check_envelope(const std::string& bytes, const char (&magic)[8], std::size_t header_bytes,
                    const std::string& name) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), magic, 8) != 0) {
    if (bytes.size() < 8 && std::memcmp(bytes.data(), magic, bytes.size()) == 0) {
      throw Error(ErrorCode::kTruncated, name + ": truncated header");
    }
    throw Error(ErrorCode::kMagicMismatch, name + ": bad magic");
  }
  if (bytes.size() < header_bytes + kTrailerBytes) {
    throw Error(ErrorCode::kTruncated, name + ": truncated header");
  }
}

void check_checksum(const std::string& bytes, const std::string& name) {
  const std::size_t body = bytes.size() - kTrailerBytes;
  Fnv1a h;
  h.update(bytes.data(), body);
  ByteReader r(std::string_view(bytes).substr(body), name);
  if (r.u64() != h.digest()) throw Error(ErrorCode::kChecksumMismatch, name + ": checksum mismatch");
}

nlohmann::ordered_json manifest_json(const ActivationManifest& m) {
  nlohmann::ordered_json j;
  j["model_name"] = m.model_name;
  j["n_layers"] = m.n_layers;
  j["d_model"] = m.d_model;
  std::vector<std::string> streams;
  for (auto s : m.streams) streams.emplace_back(to_string(s));
  j["streams"] = streams;
  j["n_instances"] = m.n_instances;
  j["dataset_checksum"] = m.dataset_checksum;
  j["endianness"] = m.endianness;
  return j;
}

}  // namespace

std::uint32_t ActivationManifest::stream_mask() const {
  std::uint32_t mask = 0;
  for (auto s : streams) mask |= 1u << static_cast<int>(s);
  return mask;
}

std::size_t ActivationManifest::records_per_instance() const {
  std::size_t block = 0;
  bool embedding = false;
  for (auto s : streams) {
    if (s == StreamId::kEmbedding) embedding = true;
    else ++block;
  }
  return block * n_layers + (embedding ? 1 : 0);
}

std::vector<ActivationRecord> expected_layout(const ActivationManifest& m) {
  std::vector<ActivationRecord> out;
  out.reserve(m.records_per_instance() * m.n_instances);
  for (std::uint32_t i = 0; i < m.n_instances; ++i) {
    for (std::uint32_t l = 0; l < m.n_layers; ++l) {
      for (auto s : kAllStreams) {
        if (!(m.stream_mask() & (1u << static_cast<int>(s)))) continue;
        if (s == StreamId::kEmbedding && l != 0) continue;
        out.push_back({i, l, s, {}});
      }
    }
  }
  return out;
}

std::filesystem::path manifest_path(const std::filesystem::path& binary_path) {
  auto p = binary_path;
  p += ".json";
  return p;
}

void write_activations(const std::filesystem::path& path, const ActivationManifest& manifest,
                       const std::vector<ActivationRecord>& records) {
  auto layout = expected_layout(manifest);
  if (layout.size() != records.size()) {
    throw Error(ErrorCode::kShape, "expected " + std::to_string(layout.size()) + " records, got " +
                                       std::to_string(records.size()));
  }
  ByteWriter w;
  w.raw(kActivationMagic, 8);
  w.u32(kFormatVersion);
  w.u32(manifest.n_layers);
  w.u32(manifest.d_model);
  w.u32(manifest.n_instances);
  w.u32(manifest.stream_mask());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.instance_id != layout[i].instance_id || r.layer != layout[i].layer || r.stream != layout[i].stream) {
      throw Error(ErrorCode::kShape, "record " + std::to_string(i) + " out of (instance, layer, stream) order");
    }
    if (r.vector.size() != manifest.d_model) {
      throw Error(ErrorCode::kShape, "record " + std::to_string(i) + " has length " +
                                         std::to_string(r.vector.size()) + ", manifest d_model is " +
                                         std::to_string(manifest.d_model));
    }
    for (float f : r.vector) {
      if (!std::isfinite(f)) throw Error(ErrorCode::kNonFinite, "record " + std::to_string(i) + " is not finite");
    }
    w.u32(r.instance_id);
    w.u32(r.layer);
    w.u32(static_cast<std::uint32_t>(r.stream));
    w.floats(r.vector);
  }
  w.seal();
  spit(path, w.bytes());
  spit(manifest_path(path), manifest_json(manifest).dump(2) + "\n");
}

ActivationFile read_activations(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  const std::string name = path.string();
  check_envelope(bytes, kActivationMagic, kActHeaderBytes, name);

  ByteReader r(bytes, name);
  r.u32();
  r.u32();  // magic
  if (r.u32() != kFormatVersion) throw Error(ErrorCode::kParse, name + ": unsupported version");
  ActivationFile file;
  auto& m = file.manifest;
  m.n_layers = r.u32();
  m.d_model = r.u32();
  m.n_instances = r.u32();
  const std::uint32_t mask = r.u32();
  for (auto s : kAllStreams) {
    if (mask & (1u << static_cast<int>(s))) m.streams.push_back(s);
  }
  if (mask >> 4) throw Error(ErrorCode::kParse, name + ": unknown stream bits in mask");

  const std::size_t n_records = m.records_per_instance() * m.n_instances;
  const std::size_t expected = kActHeaderBytes + n_records * (12 + 4 * std::size_t{m.d_model}) + kTrailerBytes;
  if (bytes.size() < expected) {
    throw Error(ErrorCode::kTruncated, name + ": truncated (" + std::to_string(bytes.size()) + " of " +
                                           std::to_string(expected) + " bytes)");
  }
  if (bytes.size() > expected) throw Error(ErrorCode::kShape, name + ": trailing bytes after records");
  check_checksum(bytes, name);

  file.records = expected_layout(m);
  for (auto& rec : file.records) {
    const auto inst = r.u32();
    const auto layer = r.u32();
    const auto stream = r.u32();
    if (inst != rec.instance_id || layer != rec.layer || stream != static_cast<std::uint32_t>(rec.stream)) {
      throw Error(ErrorCode::kParse, name + ": record out of order at byte offset " + std::to_string(r.pos() - 12));
    }
    r.floats(rec.vector, m.d_model);
  }

  const auto mpath = manifest_path(path);
  if (std::filesystem::exists(mpath)) {
    try {
      auto j = nlohmann::json::parse(slurp(mpath));
      m.model_name = j.value("model_name", "");
      m.dataset_checksum = j.value("dataset_checksum", "");
      m.endianness = j.value("endianness", "little");
      if (j.at("n_layers").get<std::uint32_t>() != m.n_layers || j.at("d_model").get<std::uint32_t>() != m.d_model ||
          j.at("n_instances").get<std::uint32_t>() != m.n_instances) {
        throw Error(ErrorCode::kShape, mpath.string() + ": manifest disagrees with binary header");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, mpath.string() + ": " + e.what());
    }
    if (m.endianness != "little") throw Error(ErrorCode::kParse, mpath.string() + ": unsupported endianness");
  }
  return file;
}

ActivationTable::ActivationTable(ActivationFile file) : file_(std::move(file)) {
  const auto per = file_.manifest.records_per_instance();
  offset_of_instance_.resize(file_.manifest.n_instances);
  for (std::size_t i = 0; i < offset_of_instance_.size(); ++i) offset_of_instance_[i] = i * per;
}

bool ActivationTable::has_stream(StreamId s) const {
  return (file_.manifest.stream_mask() & (1u << static_cast<int>(s))) != 0;
}

std::span<const float> ActivationTable::vector(std::uint32_t instance, std::uint32_t layer, StreamId stream) const {
  const auto& m = file_.manifest;
  if (instance >= m.n_instances || layer >= m.n_layers || !has_stream(stream)) {
    throw Error(ErrorCode::kShape, "activation lookup out of range");
  }
  if (stream == StreamId::kEmbedding) layer = 0;
  std::size_t idx = offset_of_instance_[instance];
  // Records of one instance: layer-major, streams ascending, embedding only at layer 0.
  for (std::uint32_t l = 0; l < layer; ++l) {
    for (auto s : m.streams) idx += (s == StreamId::kEmbedding && l != 0) ? 0 : 1;
  }
  for (auto s : m.streams) {
    if (s == stream) break;
    if (s == StreamId::kEmbedding && layer != 0) continue;
    ++idx;
  }
  return file_.records[idx].vector;
}

Matrix ActivationTable::matrix(std::uint32_t layer, StreamId stream, std::span<const std::size_t> instances) const {
  Matrix out(static_cast<Eigen::Index>(instances.size()), file_.manifest.d_model);
  for (std::size_t r = 0; r < instances.size(); ++r) {
    auto v = vector(static_cast<std::uint32_t>(instances[r]), layer, stream);
    for (std::size_t c = 0; c < v.size(); ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[c];
  }
  return out;
}

Vector mean_pool(const Matrix& tokens) {
  if (tokens.rows() == 0) throw Error(ErrorCode::kInsufficientData, "mean_pool: empty token sequence");
  return tokens.colwise().sum().transpose() / static_cast<double>(tokens.rows());
}

void SaeParams::validate() const {
  const std::size_t d = d_model, m = dict_size;
  if (d == 0 || m == 0) throw Error(ErrorCode::kShape, "SAE with empty dimension");
  if (w_enc.size() != d * m || b_enc.size() != m || w_dec.size() != m * d || b_dec.size() != d) {
    throw Error(ErrorCode::kShape, "SAE parameter shapes inconsistent with d=" + std::to_string(d) +
                                       ", m=" + std::to_string(m));
  }
  for (const auto* v : {&w_enc, &b_enc, &w_dec, &b_dec}) {
    for (float f : *v) {
      if (!std::isfinite(f)) throw Error(ErrorCode::kNonFinite, "SAE parameters contain non-finite values");
    }
  }
}

void write_sae(const std::filesystem::path& path, const SaeParams& p) {
  p.validate();
  ByteWriter w;
  w.raw(kSaeMagic, 8);
  w.u32(kFormatVersion);
  w.u32(p.d_model);
  w.u32(p.dict_size);
  w.u32(static_cast<std::uint32_t>(p.nonlinearity));
  w.floats(p.w_enc);
  w.floats(p.b_enc);
  w.floats(p.w_dec);
  w.floats(p.b_dec);
  w.seal();
  spit(path, w.bytes());
  nlohmann::ordered_json j;
  j["d_model"] = p.d_model;
  j["dict_size"] = p.dict_size;
  j["nonlinearity"] = "relu";
  spit(manifest_path(path), j.dump(2) + "\n");
}

SaeParams read_sae(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  const std::string name = path.string();
  check_envelope(bytes, kSaeMagic, kSaeHeaderBytes, name);
  ByteReader r(bytes, name);
  r.u64();  // magic
  if (r.u32() != kFormatVersion) throw Error(ErrorCode::kParse, name + ": unsupported version");
  SaeParams p;
  p.d_model = r.u32();
  p.dict_size = r.u32();
  const auto nl = r.u32();
  if (nl != static_cast<std::uint32_t>(Nonlinearity::kRelu)) {
    throw Error(ErrorCode::kParse, name + ": unsupported nonlinearity id " + std::to_string(nl));
  }
  const std::size_t d = p.d_model, m = p.dict_size;
  const std::size_t expected = kSaeHeaderBytes + 4 * (2 * d * m + d + m) + kTrailerBytes;
  if (bytes.size() < expected) throw Error(ErrorCode::kTruncated, name + ": truncated");
  if (bytes.size() > expected) throw Error(ErrorCode::kShape, name + ": trailing bytes");
  check_checksum(bytes, name);
  r.floats(p.w_enc, d * m);
  r.floats(p.b_enc, m);
  r.floats(p.w_dec, m * d);
  r.floats(p.b_dec, d);
  return p;
}

namespace {

using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajorF> enc_map(const SaeParams& p) {
  return {p.w_enc.data(), static_cast<Eigen::Index>(p.d_model), static_cast<Eigen::Index>(p.dict_size)};
}
Eigen::Map<const RowMajorF> dec_map(const SaeParams& p) {
  return {p.w_dec.data(), static_cast<Eigen::Index>(p.dict_size), static_cast<Eigen::Index>(p.d_model)};
}
Vector to_vector(const std::vector<float>& v) {
  return Eigen::Map<const Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(v.size())).cast<double>();
}

}  // namespace

Vector sae_encode(const Vector& x, const SaeParams& p) {
  if (x.size() != static_cast<Eigen::Index>(p.d_model)) {
    throw Error(ErrorCode::kShape, "sae_encode: input length " + std::to_string(x.size()) + " != d_model " +
                                       std::to_string(p.d_model));
  }
  Vector z = enc_map(p).cast<double>().transpose() * x + to_vector(p.b_enc);
  return z.cwiseMax(0.0);
}

Vector sae_decode(const Vector& z, const SaeParams& p) {
  if (z.size() != static_cast<Eigen::Index>(p.dict_size)) {
    throw Error(ErrorCode::kShape, "sae_decode: latent length " + std::to_string(z.size()) + " != dict size " +
                                       std::to_string(p.dict_size));
  }
  return dec_map(p).cast<double>().transpose() * z + to_vector(p.b_dec);
}

SparseRowMatrix sae_encode_batch(const Matrix& x, const SaeParams& p) {
  if (x.cols() != static_cast<Eigen::Index>(p.d_model)) {
    throw Error(ErrorCode::kShape, "sae_encode_batch: input width != d_model");
  }
  const Matrix w = enc_map(p).cast<double>();
  const Eigen::RowVectorXd b = to_vector(p.b_enc).transpose();
  std::vector<Eigen::Triplet<double>> nz;
  constexpr Eigen::Index kChunk = 256;
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const Eigen::Index rows = std::min(kChunk, x.rows() - start);
    Matrix z = x.middleRows(start, rows) * w;
    z.rowwise() += b;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < z.cols(); ++j)
        if (z(i, j) > 0.0) nz.emplace_back(static_cast<int>(start + i), static_cast<int>(j), z(i, j));
  }
  SparseRowMatrix out(x.rows(), p.dict_size);
  out.setFromTriplets(nz.begin(), nz.end());
  return out;
}

Vector sae_encode_tokens(const Matrix& tokens, const SaeParams& p) {
  if (tokens.rows() == 0) throw Error(ErrorCode::kInsufficientData, "sae_encode_tokens: empty token sequence");
  return Vector(sae_encode_batch(tokens, p).transpose() * Vector::Ones(tokens.rows())) /
         static_cast<double>(tokens.rows());
}

SaeParams identity_sae(std::uint32_t d) {
  SaeParams p;
  p.d_model = d;
  p.dict_size = d;
  p.w_enc.assign(std::size_t{d} * d, 0.0f);
  p.w_dec.assign(std::size_t{d} * d, 0.0f);
  for (std::uint32_t i = 0; i < d; ++i) {
    p.w_enc[std::size_t{i} * d + i] = 1.0f;
    p.w_dec[std::size_t{i} * d + i] = 1.0f;
  }
  p.b_enc.assign(d, 0.0f);
  p.b_dec.assign(d, 0.0f);
  return p;
}

}  // namespace relprobe::activations
