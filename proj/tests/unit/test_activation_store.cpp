#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"
#include "relprobe/activation_store.hpp"

using namespace relprobe;
using namespace relprobe::activations;
using testing_helpers::error_code_of;
namespace fs = std::filesystem;

namespace {

ActivationFile sample_file() {
  ActivationFile f;
  f.manifest.model_name = "sample";
  f.manifest.n_layers = 2;
  f.manifest.d_model = 3;
  f.manifest.streams = {kAllStreams.begin(), kAllStreams.end()};
  f.manifest.n_instances = 2;
  f.manifest.dataset_checksum = "00000000deadbeef";
  f.records = expected_layout(f.manifest);
  float v = 0.25f;
  for (auto& r : f.records) {
    r.vector.resize(3);
    for (auto& x : r.vector) x = (v += 0.5f);
  }
  return f;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST(Activations, LayoutCountsEmbeddingOnce) {
  const auto f = sample_file();
  EXPECT_EQ(f.manifest.records_per_instance(), 7u);
  EXPECT_EQ(f.records.size(), 14u);
}

TEST(Activations, RoundTrip) {
  const auto dir = testing_helpers::temp_dir("act_rt");
  const auto f = sample_file();
  write_activations(dir / "a.relact", f.manifest, f.records);
  const auto back = read_activations(dir / "a.relact");
  EXPECT_EQ(back.records, f.records);
  EXPECT_EQ(back.manifest.model_name, "sample");
  EXPECT_EQ(back.manifest.dataset_checksum, f.manifest.dataset_checksum);

  const ActivationTable t(back);
  const std::vector<std::size_t> rows = {1, 0};
  const Matrix m = t.matrix(1, StreamId::kMlpOut, rows);
  for (int j = 0; j < 3; ++j) {
    EXPECT_EQ(m(0, j), t.vector(1, 1, StreamId::kMlpOut)[j]);
    EXPECT_EQ(m(1, j), t.vector(0, 1, StreamId::kMlpOut)[j]);
  }
}

TEST(Activations, ErrorCodes) {
  const auto dir = testing_helpers::temp_dir("act_err");
  const auto f = sample_file();
  const auto path = dir / "a.relact";
  write_activations(path, f.manifest, f.records);
  const auto good = read_bytes(path);

  EXPECT_EQ(error_code_of([&] { read_activations(dir / "missing.relact"); }), ErrorCode::kIo);

  auto bad = good;
  bad[0] = 'X';
  write_bytes(path, bad);
  EXPECT_EQ(error_code_of([&] { read_activations(path); }), ErrorCode::kMagicMismatch);

  write_bytes(path, good.substr(0, good.size() - 20));
  EXPECT_EQ(error_code_of([&] { read_activations(path); }), ErrorCode::kTruncated);

  bad = good;
  bad[good.size() / 2] ^= 0x01;
  write_bytes(path, bad);
  EXPECT_EQ(error_code_of([&] { read_activations(path); }), ErrorCode::kChecksumMismatch);

  auto records = f.records;
  records[3].vector[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_EQ(error_code_of([&] { write_activations(path, f.manifest, records); }), ErrorCode::kNonFinite);

  records = f.records;
  std::swap(records[0], records[1]);
  EXPECT_EQ(error_code_of([&] { write_activations(path, f.manifest, records); }), ErrorCode::kShape);
}

TEST(Sae, RoundTripAndErrors) {
  const auto dir = testing_helpers::temp_dir("sae_rt");
  SaeParams p = identity_sae(5);
  write_sae(dir / "s.relsae", p);
  EXPECT_EQ(read_sae(dir / "s.relsae"), p);
  auto bytes = read_bytes(dir / "s.relsae");
  write_bytes(dir / "s.relsae", bytes.substr(0, bytes.size() - 8));
  EXPECT_EQ(error_code_of([&] { read_sae(dir / "s.relsae"); }), ErrorCode::kTruncated);
  p.w_enc.pop_back();
  EXPECT_EQ(error_code_of([&] { p.validate(); }), ErrorCode::kShape);
}

TEST(Sae, IdentityPassesNonnegativeInputsThrough) {
  const auto p = identity_sae(4);
  Vector x(4);
  x << 0.5, 0.0, 2.0, -1.0;
  Vector expected(4);
  expected << 0.5, 0.0, 2.0, 0.0;
  EXPECT_EQ(sae_encode(x, p), expected);
  EXPECT_EQ(sae_decode(expected, p), expected);
}

TEST(Sae, SmallDictionaryMatchesHandComputation) {
  // d = 4, m = 6, weights chosen so every product is exact in binary.
  SaeParams p;
  p.d_model = 4;
  p.dict_size = 6;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) p.w_enc.push_back(static_cast<float>((i + 1) * (j % 3) - 2 * (j == i)) * 0.5f);
  p.b_enc = {-1.0f, 0.5f, 0.0f, -0.25f, 1.0f, 0.0f};
  for (int j = 0; j < 6; ++j)
    for (int i = 0; i < 4; ++i) p.w_dec.push_back(static_cast<float>(i - j) * 0.25f);
  p.b_dec = {0.5f, -0.5f, 0.0f, 1.0f};

  Vector x(4);
  x << 1.0, -2.0, 0.5, 3.0;
  Vector z(6);
  for (int j = 0; j < 6; ++j) {
    double s = p.b_enc[j];
    for (int i = 0; i < 4; ++i) s += x(i) * p.w_enc[i * 6 + j];
    z(j) = std::max(0.0, s);
  }
  const Vector got = sae_encode(x, p);
  for (int j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(got(j), z(j));

  Vector xh(4);
  for (int i = 0; i < 4; ++i) {
    double s = p.b_dec[i];
    for (int j = 0; j < 6; ++j) s += z(j) * p.w_dec[j * 4 + i];
    xh(i) = s;
  }
  const Vector dec = sae_decode(z, p);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(dec(i), xh(i));

  Matrix batch(2, 4);
  batch.row(0) = x.transpose();
  batch.row(1) = -x.transpose();
  const SparseRowMatrix zs = sae_encode_batch(batch, p);
  EXPECT_EQ(Matrix(zs).row(0).transpose(), got);
  EXPECT_EQ(Matrix(zs).row(1).transpose(), sae_encode(-x, p));
}

TEST(Sae, MeanPoolAndTokenMode) {
  Matrix t(2, 3);
  t << 1, 2, 3, 3, 4, 5;
  Vector expected(3);
  expected << 2, 3, 4;
  EXPECT_EQ(mean_pool(t), expected);
  EXPECT_EQ(sae_encode_tokens(t, identity_sae(3)), expected);
  EXPECT_EQ(error_code_of([] { mean_pool(Matrix(0, 3)); }), ErrorCode::kInsufficientData);
}
