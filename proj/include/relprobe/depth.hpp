#pragma once

#include <map>
#include <span>
#include <vector>

#include "relprobe/common.hpp"
#include "relprobe/probe.hpp"

namespace relprobe::depth {

struct DepthProfile {
  std::vector<double> accs;  // layer 0 is the first transformer block
  double mean = 0.0;
  double peak = 0.0;
  int peak_depth = 0;  // lowest layer among ties
  double com = 0.0;    // sum(l * a_l) / sum(a_l)
  double peak_depth_norm = 0.0;
  double com_norm = 0.0;
};

/// Throws kInsufficientData for fewer than two layers, kInvalidArgument for
/// accuracies outside [0, 1] and kUndefined when every accuracy is zero.
DepthProfile depth_profile(std::span<const double> accs);

struct BlockDelta {
  int layer = 0;
  double delta_attn = 0.0;
  double delta_mlp = 0.0;
};

/// Attention and MLP accuracy minus post-residual accuracy, per layer.
std::vector<BlockDelta> block_deltas(const std::map<StreamId, std::vector<double>>& acc_by_stream);

struct DepthProfileCI {
  DepthProfile point;
  probe::BootstrapCI mean;
  probe::BootstrapCI peak;
  probe::BootstrapCI peak_depth;
  probe::BootstrapCI com;
  probe::BootstrapCI peak_depth_norm;
  probe::BootstrapCI com_norm;
};

/// Joint bootstrap: each replicate resamples the test rows once (stratified
/// by gold class) and recomputes every layer's recall of `cls` and every
/// profile field from that one resample.
DepthProfileCI profile_ci(const std::vector<probe::Labels>& predictions_by_layer, const probe::Labels& gold,
                          int cls, int replicates, std::uint64_t seed);

}  // namespace relprobe::depth
