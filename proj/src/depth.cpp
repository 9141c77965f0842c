#include "relprobe/depth.hpp"

#include <numeric>

namespace relprobe::depth {

DepthProfile depth_profile(std::span<const double> accs) {
  if (accs.size() < 2) throw Error(ErrorCode::kInsufficientData, "depth_profile: need at least two layers");
  DepthProfile p;
  p.accs.assign(accs.begin(), accs.end());
  double sum = 0.0;
  for (std::size_t l = 0; l < accs.size(); ++l) {
    const double a = accs[l];
    if (!(a >= 0.0 && a <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "depth_profile: accuracy outside [0, 1] at layer " + std::to_string(l));
    }
    sum += a;
    if (l == 0 || a > p.peak) {
      p.peak = a;
      p.peak_depth = static_cast<int>(l);
    }
  }
  if (sum == 0.0) throw Error(ErrorCode::kUndefined, "depth_profile: centre of mass undefined for all-zero accuracies");
  const double last = static_cast<double>(accs.size() - 1);
  p.mean = sum / static_cast<double>(accs.size());
  // Weights relative to the peak: uniform and single-layer profiles then
  // reduce to integer arithmetic and their closed forms come out exact.
  double mass = 0.0, weighted = 0.0;
  for (std::size_t l = 0; l < accs.size(); ++l) {
    const double w = accs[l] / p.peak;
    mass += w;
    weighted += static_cast<double>(l) * w;
  }
  p.com = weighted / mass;
  p.peak_depth_norm = p.peak_depth / last;
  p.com_norm = p.com / last;
  return p;
}

std::vector<BlockDelta> block_deltas(const std::map<StreamId, std::vector<double>>& acc_by_stream) {
  auto get = [&](StreamId s) -> const std::vector<double>& {
    auto it = acc_by_stream.find(s);
    if (it == acc_by_stream.end()) {
      throw Error(ErrorCode::kInvalidArgument, "block_deltas: missing stream " + std::string(to_string(s)));
    }
    return it->second;
  };
  const auto& attn = get(StreamId::kAttentionOut);
  const auto& mlp = get(StreamId::kMlpOut);
  const auto& post = get(StreamId::kPostResidual);
  if (attn.size() != post.size() || mlp.size() != post.size()) {
    throw Error(ErrorCode::kShape, "block_deltas: streams have different layer counts");
  }
  std::vector<BlockDelta> out;
  for (std::size_t l = 0; l < post.size(); ++l) {
    out.push_back({static_cast<int>(l), attn[l] - post[l], mlp[l] - post[l]});
  }
  return out;
}

DepthProfileCI profile_ci(const std::vector<probe::Labels>& predictions_by_layer, const probe::Labels& gold,
                          int cls, int replicates, std::uint64_t seed) {
  if (replicates < 100) throw Error(ErrorCode::kInvalidArgument, "profile_ci: need at least 100 replicates");
  for (const auto& p : predictions_by_layer) {
    if (p.size() != gold.size()) throw Error(ErrorCode::kShape, "profile_ci: prediction length mismatch");
  }
  auto profile_for = [&](std::span<const std::size_t> rows) {
    std::vector<double> accs;
    for (const auto& pred : predictions_by_layer) accs.push_back(probe::class_recall(pred, gold, cls, rows));
    return depth_profile(accs);
  };
  std::vector<std::size_t> all(gold.size());
  std::iota(all.begin(), all.end(), 0);
  DepthProfileCI out;
  out.point = profile_for(all);

  probe::StratifiedResampler rs(gold, seed);
  std::vector<double> mean, peak, peak_depth, com, peak_depth_norm, com_norm;
  for (int r = 0; r < replicates; ++r) {
    DepthProfile p;
    try {
      p = profile_for(rs.replicate(r));
    } catch (const Error& e) {
      throw Error(e.code(), "bootstrap replicate " + std::to_string(r) + ": " + e.what());
    }
    mean.push_back(p.mean);
    peak.push_back(p.peak);
    peak_depth.push_back(p.peak_depth);
    com.push_back(p.com);
    peak_depth_norm.push_back(p.peak_depth_norm);
    com_norm.push_back(p.com_norm);
  }
  out.mean = probe::percentile_ci(out.point.mean, std::move(mean));
  out.peak = probe::percentile_ci(out.point.peak, std::move(peak));
  out.peak_depth = probe::percentile_ci(out.point.peak_depth, std::move(peak_depth));
  out.com = probe::percentile_ci(out.point.com, std::move(com));
  out.peak_depth_norm = probe::percentile_ci(out.point.peak_depth_norm, std::move(peak_depth_norm));
  out.com_norm = probe::percentile_ci(out.point.com_norm, std::move(com_norm));
  return out;
}

}  // namespace relprobe::depth
