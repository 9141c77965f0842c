#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "relprobe/activation_store.hpp"
#include "relprobe/common.hpp"

namespace relprobe::probe {

inline constexpr double kSigmaFloor = 1e-6;

/// Class indices (0..C-1) per row.
using Labels = std::vector<int>;

struct Standardizer {
  Vector mu;
  Vector sigma;

  Matrix apply(const Matrix& x) const;
};

/// Column means and population standard deviations, floored at kSigmaFloor.
Standardizer fit_standardizer(const Matrix& x);
Standardizer fit_standardizer(const SparseRowMatrix& x);

struct ProbeConfig {
  double l2_lambda = 1.0;
  int max_iterations = 500;
  double tolerance = 1e-6;  // on the gradient infinity norm
  std::uint64_t seed = 0;
  int lbfgs_memory = 10;

  std::string hash() const;
};

enum class TrainStatus { kConverged, kMaxIterations, kLineSearchStalled };
std::string_view to_string(TrainStatus s);

struct TrainInfo {
  TrainStatus status = TrainStatus::kConverged;
  int iterations = 0;
  double grad_norm = 0.0;
  std::vector<double> loss_history;  // one entry per accepted iterate, starting at the initial point
};

struct ProbeModel {
  Standardizer standardizer;
  Matrix w;  // C x F, rows in class order, acting on standardized features
  Vector b;  // C
  std::string config_hash;
  TrainInfo info;

  int n_classes() const { return static_cast<int>(w.rows()); }
  int n_features() const { return static_cast<int>(w.cols()); }
  /// Weights folded onto raw features: logits = x . V^T + c.
  Matrix raw_weights() const;
  Vector raw_bias() const;
};

/// Mean cross-entropy over rows plus (lambda/2)||W||^2 (bias unpenalised),
/// with standardisation applied implicitly so sparse inputs stay sparse.
/// Parameters are packed as vec(W) (column-major, C x F) followed by b.
template <typename XMatrix>
class Objective {
 public:
  Objective(const XMatrix& x, const Labels& y, const Standardizer& s, double lambda, int n_classes);

  Eigen::Index dim() const { return static_cast<Eigen::Index>(n_classes_) * (features_ + 1); }
  double value(const Vector& theta, Vector* grad) const;

 private:
  const XMatrix& x_;
  Matrix onehot_;
  const Standardizer& s_;
  double lambda_;
  int n_classes_;
  Eigen::Index features_;
};

extern template class Objective<Matrix>;
extern template class Objective<SparseRowMatrix>;

/// Trains a kNumClasses-way probe. Classes absent from y get zero weights and
/// a large negative bias so they are never predicted. Rows are put into a
/// canonical order before optimisation, so results do not depend on row order.
ProbeModel train_probe(const Matrix& x, const Labels& y, const ProbeConfig& config,
                       int n_classes = kNumClasses);
ProbeModel train_probe(const SparseRowMatrix& x, const Labels& y, const ProbeConfig& config,
                       int n_classes = kNumClasses);

Matrix predict_logits(const ProbeModel& model, const Matrix& x);
Matrix predict_logits(const ProbeModel& model, const SparseRowMatrix& x);
Vector predict_logits(const ProbeModel& model, const Vector& x);

/// Row-wise argmax, lowest index on ties.
Labels argmax_rows(const Matrix& logits);
Labels predict_labels(const ProbeModel& model, const Matrix& x);
Labels predict_labels(const ProbeModel& model, const SparseRowMatrix& x);

/// Recall per class present in `classes`; throws kUndefined for a class with no gold rows.
std::map<int, double> per_class_accuracy(const Labels& predicted, const Labels& gold,
                                         std::span<const int> classes);
/// Recall of a single class over the given row subset.
double class_recall(const Labels& predicted, const Labels& gold, int cls,
                    std::span<const std::size_t> rows);

struct BootstrapCI {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int replicates = 0;
  double half_width = 0.0;
};

inline constexpr int kDefaultReplicates = 1000;

/// Linear-interpolation percentile of unsorted values, q in [0, 1].
double percentile(std::vector<double> values, double q);
BootstrapCI percentile_ci(double point, std::vector<double> replicates);

/// Stratified resampling: within each stratum, draw its size with
/// replacement. Replicate r uses an Rng split from (seed, r), so replicates
/// are independent of evaluation order.
class StratifiedResampler {
 public:
  StratifiedResampler(const std::vector<int>& strata, std::uint64_t seed);
  std::vector<std::size_t> replicate(int r) const;
  std::size_t size() const { return n_; }

 private:
  std::vector<std::vector<std::size_t>> groups_;
  std::size_t n_ = 0;
  std::uint64_t seed_;
};

using MetricFn = std::function<double(std::span<const std::size_t> rows)>;

/// Percentile CI (2.5 / 97.5) of metric over B stratified resamples. A
/// metric failure is rethrown with the replicate index.
BootstrapCI bootstrap_ci(const MetricFn& metric, const std::vector<int>& strata, int replicates,
                         std::uint64_t seed);

std::string save_probe(const ProbeModel& model);
ProbeModel load_probe(std::string_view json);

}  // namespace relprobe::probe
