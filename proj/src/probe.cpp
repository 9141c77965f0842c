#include "relprobe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace relprobe::probe {

namespace {

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::kNonFinite, std::string(what) + " contains NaN or Inf");
}
void check_finite(const SparseRowMatrix& m, const char* what) {
  for (Eigen::Index k = 0; k < m.nonZeros(); ++k) {
    if (!std::isfinite(m.valuePtr()[k])) {
      throw Error(ErrorCode::kNonFinite, std::string(what) + " contains NaN or Inf");
    }
  }
}

Vector floor_sigma(Vector var) {
  Vector s(var.size());
  for (Eigen::Index j = 0; j < var.size(); ++j) s(j) = std::max(std::sqrt(std::max(var(j), 0.0)), kSigmaFloor);
  return s;
}

// Lexicographic order on (label, row values). Identical rows compare equal,
// so sorting by it makes training independent of the input row order.
std::vector<std::size_t> canonical_order(const Matrix& x, const Labels& y) {
  std::vector<std::size_t> idx(y.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (y[a] != y[b]) return y[a] < y[b];
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double u = x(static_cast<Eigen::Index>(a), j), v = x(static_cast<Eigen::Index>(b), j);
      if (u != v) return u < v;
    }
    return false;
  });
  return idx;
}

std::vector<std::size_t> canonical_order(const SparseRowMatrix& x, const Labels& y) {
  std::vector<std::vector<std::pair<Eigen::Index, double>>> rows(y.size());
  for (Eigen::Index r = 0; r < x.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(x, r); it; ++it) {
      if (it.value() != 0.0) rows[static_cast<std::size_t>(r)].emplace_back(it.col(), it.value());
    }
  }
  std::vector<std::size_t> idx(y.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (y[a] != y[b]) return y[a] < y[b];
    return rows[a] < rows[b];
  });
  return idx;
}

Matrix permute_rows(const Matrix& x, const std::vector<std::size_t>& order) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < order.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(order[r]));
  return out;
}

SparseRowMatrix permute_rows(const SparseRowMatrix& x, const std::vector<std::size_t>& order) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(x.nonZeros()));
  for (std::size_t r = 0; r < order.size(); ++r) {
    for (SparseRowMatrix::InnerIterator it(x, static_cast<Eigen::Index>(order[r])); it; ++it) {
      trips.emplace_back(static_cast<Eigen::Index>(r), it.col(), it.value());
    }
  }
  SparseRowMatrix out(x.rows(), x.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

struct LbfgsResult {
  Vector theta;
  TrainInfo info;
};

template <typename Fn>
LbfgsResult minimize_lbfgs(const Fn& fn, Vector theta, const ProbeConfig& cfg) {
  constexpr double kArmijo = 1e-4;
  LbfgsResult res;
  Vector g(theta.size());
  double f = fn(theta, &g);
  res.info.loss_history.push_back(f);

  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  res.info.status = TrainStatus::kMaxIterations;
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= cfg.tolerance) {
      res.info.status = TrainStatus::kConverged;
      break;
    }
    // Two-loop recursion.
    Vector q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Vector d = -q;
    double gd = g.dot(d);
    if (!(gd < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -g;
      gd = -g.squaredNorm();
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>()) : 1.0;

    bool accepted = false;
    Vector theta_new, g_new(theta.size());
    double f_new = f;
    for (int bt = 0; bt < 60; ++bt) {
      theta_new = theta + step * d;
      f_new = fn(theta_new, &g_new);
      const double expected = -kArmijo * step * gd;
      if (std::isfinite(f_new) && f_new <= f - expected) {
        accepted = true;
        break;
      }
      // Below the resolution of the loss, progress is judged by the gradient.
      if (std::isfinite(f_new) && expected <= 1e-14 * std::max(1.0, std::abs(f)) &&
          g_new.norm() < g.norm()) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.info.status = TrainStatus::kLineSearchStalled;
      break;
    }
    Vector s = theta_new - theta;
    Vector yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (static_cast<int>(s_hist.size()) == cfg.lbfgs_memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
    }
    theta = std::move(theta_new);
    g = g_new;
    f = f_new;
    res.info.loss_history.push_back(f);
  }
  if (it == cfg.max_iterations && g.lpNorm<Eigen::Infinity>() <= cfg.tolerance) {
    res.info.status = TrainStatus::kConverged;
  }
  res.info.iterations = it;
  res.info.grad_norm = g.lpNorm<Eigen::Infinity>();
  res.theta = std::move(theta);
  return res;
}

template <typename XMatrix>
ProbeModel train_impl(const XMatrix& x_in, const Labels& y_in, const ProbeConfig& cfg, int n_classes) {
  if (x_in.rows() != static_cast<Eigen::Index>(y_in.size())) {
    throw Error(ErrorCode::kShape, "train_probe: " + std::to_string(x_in.rows()) + " rows but " +
                                       std::to_string(y_in.size()) + " labels");
  }
  if (cfg.l2_lambda < 0.0 || cfg.max_iterations < 0 || cfg.tolerance <= 0.0 || cfg.lbfgs_memory < 1) {
    throw Error(ErrorCode::kInvalidArgument, "train_probe: invalid probe config");
  }
  check_finite(x_in, "training matrix");
  std::set<int> present;
  for (int c : y_in) {
    if (c < 0 || c >= n_classes) throw Error(ErrorCode::kInvalidArgument, "label out of range: " + std::to_string(c));
    present.insert(c);
  }
  if (present.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "train_probe: labels cover fewer than two classes");
  }

  const auto order = canonical_order(x_in, y_in);
  const XMatrix x = permute_rows(x_in, order);
  std::vector<int> remap(static_cast<std::size_t>(n_classes), -1);
  std::vector<int> active(present.begin(), present.end());
  for (std::size_t i = 0; i < active.size(); ++i) remap[static_cast<std::size_t>(active[i])] = static_cast<int>(i);
  Labels y(y_in.size());
  for (std::size_t r = 0; r < order.size(); ++r) y[r] = remap[static_cast<std::size_t>(y_in[order[r]])];

  ProbeModel model;
  model.standardizer = fit_standardizer(x);
  model.config_hash = cfg.hash();
  const int a = static_cast<int>(active.size());
  Objective<XMatrix> obj(x, y, model.standardizer, cfg.l2_lambda, a);
  auto fn = [&](const Vector& th, Vector* grad) { return obj.value(th, grad); };
  auto res = minimize_lbfgs(fn, Vector::Zero(obj.dim()), cfg);
  model.info = std::move(res.info);

  const Eigen::Index f = x.cols();
  Eigen::Map<const Matrix> w_act(res.theta.data(), a, f);
  Vector b_act = res.theta.tail(a);
  b_act.array() -= b_act.mean();  // logits are shift-invariant; fix the gauge
  model.w = Matrix::Zero(n_classes, f);
  model.b = Vector::Constant(n_classes, -1e9);
  for (int i = 0; i < a; ++i) {
    model.w.row(active[static_cast<std::size_t>(i)]) = w_act.row(i);
    model.b(active[static_cast<std::size_t>(i)]) = b_act(i);
  }
  return model;
}

}  // namespace

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mu.size()) throw Error(ErrorCode::kShape, "standardizer: feature count mismatch");
  return ((x.rowwise() - mu.transpose()).array().rowwise() / sigma.transpose().array()).matrix();
}

Standardizer fit_standardizer(const Matrix& x) {
  if (x.rows() < 2) throw Error(ErrorCode::kInsufficientData, "fit_standardizer: need at least two rows");
  Standardizer s;
  s.mu = x.colwise().mean().transpose();
  const Vector var = (x.rowwise() - s.mu.transpose()).array().square().colwise().mean().transpose();
  s.sigma = floor_sigma(var);
  return s;
}

Standardizer fit_standardizer(const SparseRowMatrix& x) {
  if (x.rows() < 2) throw Error(ErrorCode::kInsufficientData, "fit_standardizer: need at least two rows");
  const double n = static_cast<double>(x.rows());
  Vector sum = Vector::Zero(x.cols());
  std::vector<Eigen::Index> nnz(static_cast<std::size_t>(x.cols()), 0);
  for (Eigen::Index r = 0; r < x.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(x, r); it; ++it) {
      sum(it.col()) += it.value();
      ++nnz[static_cast<std::size_t>(it.col())];
    }
  }
  Standardizer s;
  s.mu = sum / n;
  Vector sq = Vector::Zero(x.cols());
  for (Eigen::Index r = 0; r < x.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(x, r); it; ++it) {
      const double d = it.value() - s.mu(it.col());
      sq(it.col()) += d * d;
    }
  }
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    sq(j) += static_cast<double>(x.rows() - nnz[static_cast<std::size_t>(j)]) * s.mu(j) * s.mu(j);
  }
  s.sigma = floor_sigma(sq / n);
  return s;
}

std::string ProbeConfig::hash() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "l2=%.17g;iter=%d;tol=%.17g;seed=%llu;mem=%d", l2_lambda, max_iterations,
                tolerance, static_cast<unsigned long long>(seed), lbfgs_memory);
  return hex64(fnv1a(buf));
}

std::string_view to_string(TrainStatus s) {
  switch (s) {
    case TrainStatus::kConverged: return "converged";
    case TrainStatus::kMaxIterations: return "max_iterations";
    case TrainStatus::kLineSearchStalled: return "line_search_stalled";
  }
  return "unknown";
}

Matrix ProbeModel::raw_weights() const {
  return (w.array().rowwise() / standardizer.sigma.transpose().array()).matrix();
}

Vector ProbeModel::raw_bias() const { return b - raw_weights() * standardizer.mu; }

template <typename XMatrix>
Objective<XMatrix>::Objective(const XMatrix& x, const Labels& y, const Standardizer& s, double lambda,
                              int n_classes)
    : x_(x), s_(s), lambda_(lambda), n_classes_(n_classes), features_(x.cols()) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()) || s.mu.size() != x.cols()) {
    throw Error(ErrorCode::kShape, "objective: inconsistent shapes");
  }
  onehot_ = Matrix::Zero(x.rows(), n_classes);
  for (std::size_t r = 0; r < y.size(); ++r) {
    if (y[r] < 0 || y[r] >= n_classes) throw Error(ErrorCode::kInvalidArgument, "objective: label out of range");
    onehot_(static_cast<Eigen::Index>(r), y[r]) = 1.0;
  }
}

template <typename XMatrix>
double Objective<XMatrix>::value(const Vector& theta, Vector* grad) const {
  if (theta.size() != dim()) throw Error(ErrorCode::kShape, "objective: parameter length mismatch");
  const Eigen::Index c = n_classes_;
  Eigen::Map<const Matrix> w(theta.data(), c, features_);
  const Vector b = theta.tail(c);
  const Matrix v = (w.array().rowwise() / s_.sigma.transpose().array()).matrix();
  const Vector offset = b - v * s_.mu;
  Matrix logits = x_ * v.transpose();
  logits.rowwise() += offset.transpose();

  const double n = static_cast<double>(x_.rows());
  const Vector row_max = logits.rowwise().maxCoeff();
  Matrix p = (logits.colwise() - row_max).array().exp().matrix();
  const Vector z = p.rowwise().sum();
  double loss = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double lse = row_max(r) + std::log(z(r));
    loss += lse - logits.row(r).dot(onehot_.row(r));
  }
  loss = loss / n + 0.5 * lambda_ * w.squaredNorm();
  if (grad) {
    p = p.array().colwise() / z.array();
    const Matrix g = (p - onehot_) / n;
    const Vector gsum = g.colwise().sum().transpose();
    Matrix gv = (g.transpose() * x_);
    gv -= gsum * s_.mu.transpose();
    Matrix gw = (gv.array().rowwise() / s_.sigma.transpose().array()).matrix() + lambda_ * w;
    grad->resize(dim());
    grad->head(c * features_) = Eigen::Map<const Vector>(gw.data(), c * features_);
    grad->tail(c) = gsum;
  }
  return loss;
}

template class Objective<Matrix>;
template class Objective<SparseRowMatrix>;

ProbeModel train_probe(const Matrix& x, const Labels& y, const ProbeConfig& config, int n_classes) {
  return train_impl(x, y, config, n_classes);
}

ProbeModel train_probe(const SparseRowMatrix& x, const Labels& y, const ProbeConfig& config,
                       int n_classes) {
  return train_impl(x, y, config, n_classes);
}

Matrix predict_logits(const ProbeModel& model, const Matrix& x) {
  if (x.cols() != model.n_features()) {
    throw Error(ErrorCode::kShape, "predict: expected " + std::to_string(model.n_features()) + " features, got " +
                                       std::to_string(x.cols()));
  }
  Matrix logits = model.standardizer.apply(x) * model.w.transpose();
  logits.rowwise() += model.b.transpose();
  return logits;
}

Matrix predict_logits(const ProbeModel& model, const SparseRowMatrix& x) {
  if (x.cols() != model.n_features()) {
    throw Error(ErrorCode::kShape, "predict: expected " + std::to_string(model.n_features()) + " features, got " +
                                       std::to_string(x.cols()));
  }
  Matrix logits = x * model.raw_weights().transpose();
  logits.rowwise() += model.raw_bias().transpose();
  return logits;
}

Vector predict_logits(const ProbeModel& model, const Vector& x) {
  Matrix row = x.transpose();
  return predict_logits(model, row).row(0).transpose();
}

Labels argmax_rows(const Matrix& logits) {
  Labels out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

Labels predict_labels(const ProbeModel& model, const Matrix& x) { return argmax_rows(predict_logits(model, x)); }
Labels predict_labels(const ProbeModel& model, const SparseRowMatrix& x) {
  return argmax_rows(predict_logits(model, x));
}

std::map<int, double> per_class_accuracy(const Labels& predicted, const Labels& gold,
                                         std::span<const int> classes) {
  if (predicted.size() != gold.size()) throw Error(ErrorCode::kShape, "per_class_accuracy: length mismatch");
  std::map<int, double> out;
  for (int c : classes) {
    std::size_t total = 0, hit = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (gold[i] != c) continue;
      ++total;
      hit += predicted[i] == c;
    }
    if (total == 0) throw Error(ErrorCode::kUndefined, "per_class_accuracy: class " + std::to_string(c) + " absent");
    out[c] = static_cast<double>(hit) / static_cast<double>(total);
  }
  return out;
}

double class_recall(const Labels& predicted, const Labels& gold, int cls, std::span<const std::size_t> rows) {
  std::size_t total = 0, hit = 0;
  for (auto r : rows) {
    if (gold[r] != cls) continue;
    ++total;
    hit += predicted[r] == cls;
  }
  if (total == 0) throw Error(ErrorCode::kUndefined, "class_recall: class " + std::to_string(cls) + " absent");
  return static_cast<double>(hit) / static_cast<double>(total);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::kInsufficientData, "percentile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

BootstrapCI percentile_ci(double point, std::vector<double> replicates) {
  BootstrapCI ci;
  ci.point = point;
  ci.replicates = static_cast<int>(replicates.size());
  ci.lo = percentile(replicates, 0.025);
  ci.hi = percentile(std::move(replicates), 0.975);
  ci.half_width = (ci.hi - ci.lo) / 2.0;
  return ci;
}

StratifiedResampler::StratifiedResampler(const std::vector<int>& strata, std::uint64_t seed)
    : n_(strata.size()), seed_(seed) {
  std::map<int, std::vector<std::size_t>> by;
  for (std::size_t i = 0; i < strata.size(); ++i) by[strata[i]].push_back(i);
  for (auto& [k, rows] : by) groups_.push_back(std::move(rows));
}

std::vector<std::size_t> StratifiedResampler::replicate(int r) const {
  Rng rng = Rng(seed_).split(static_cast<std::uint64_t>(r));
  std::vector<std::size_t> out;
  out.reserve(n_);
  for (const auto& g : groups_) {
    for (std::size_t i = 0; i < g.size(); ++i) out.push_back(g[rng.below(g.size())]);
  }
  return out;
}

BootstrapCI bootstrap_ci(const MetricFn& metric, const std::vector<int>& strata, int replicates,
                         std::uint64_t seed) {
  if (replicates < 100) throw Error(ErrorCode::kInvalidArgument, "bootstrap_ci: need at least 100 replicates");
  if (strata.empty()) throw Error(ErrorCode::kInsufficientData, "bootstrap_ci: empty evaluation set");
  std::vector<std::size_t> all(strata.size());
  std::iota(all.begin(), all.end(), 0);
  const double point = metric(all);
  StratifiedResampler rs(strata, seed);
  std::vector<double> reps(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    const auto rows = rs.replicate(r);
    try {
      reps[static_cast<std::size_t>(r)] = metric(rows);
    } catch (const Error& e) {
      throw Error(e.code(), "bootstrap replicate " + std::to_string(r) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kInvalidArgument, "bootstrap replicate " + std::to_string(r) + ": " + e.what());
    }
  }
  return percentile_ci(point, std::move(reps));
}

namespace {

nlohmann::ordered_json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string save_probe(const ProbeModel& m) {
  nlohmann::ordered_json j;
  std::vector<std::string> classes;
  for (int c = 0; c < m.n_classes(); ++c) {
    classes.emplace_back(m.n_classes() == kNumClasses ? std::string(to_string(label_from_index(c)))
                                                     : std::to_string(c));
  }
  j["classes"] = classes;
  j["config_hash"] = m.config_hash;
  j["status"] = std::string(to_string(m.info.status));
  j["iterations"] = m.info.iterations;
  j["grad_norm"] = m.info.grad_norm;
  j["mu"] = vec_json(m.standardizer.mu);
  j["sigma"] = vec_json(m.standardizer.sigma);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.w.rows(); ++r) rows.push_back(vec_json(m.w.row(r).transpose()));
  j["w"] = rows;
  j["b"] = vec_json(m.b);
  return j.dump();
}

ProbeModel load_probe(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ProbeModel m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.info.iterations = j.at("iterations").get<int>();
    m.info.grad_norm = j.at("grad_norm").get<double>();
    const auto status = j.at("status").get<std::string>();
    for (auto s : {TrainStatus::kConverged, TrainStatus::kMaxIterations, TrainStatus::kLineSearchStalled}) {
      if (to_string(s) == status) m.info.status = s;
    }
    m.standardizer.mu = json_vec(j.at("mu"));
    m.standardizer.sigma = json_vec(j.at("sigma"));
    m.b = json_vec(j.at("b"));
    const auto& rows = j.at("w");
    m.w.resize(static_cast<Eigen::Index>(rows.size()), m.standardizer.mu.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Vector row = json_vec(rows[r]);
      if (row.size() != m.w.cols()) throw Error(ErrorCode::kShape, "probe file: weight row length mismatch");
      m.w.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    if (m.b.size() != m.w.rows() || m.standardizer.sigma.size() != m.w.cols()) {
      throw Error(ErrorCode::kShape, "probe file: inconsistent shapes");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("probe file: ") + e.what());
  }
}

}  // namespace relprobe::probe
