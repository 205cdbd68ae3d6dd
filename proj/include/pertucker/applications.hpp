#pragma once

// Downstream heads on top of a fitted model: classification by local-core
// energy, a monitoring statistic with a control limit, and clustering of
// sources by the distance between their local subspaces.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "pertucker/engine.hpp"
#include "pertucker/errors.hpp"
#include "pertucker/linalg.hpp"
#include "pertucker/random.hpp"
#include "pertucker/tensor.hpp"

namespace pertucker {

// ---------------------------------------------------------------------------
// Classification

struct ClassifierModel {
  std::vector<std::string> labels;
  std::vector<std::vector<FactorMatrix>> local_factors;  // [class][mode]
  Dims ambient;                                          // extents of the decomposable modes

  std::size_t num_classes() const { return labels.size(); }
};

inline void validate(const ClassifierModel& m) {
  detail::require(!m.labels.empty(), "classifier has no classes");
  detail::require(m.local_factors.size() == m.labels.size(), "classifier labels and factor sets differ in count");
  for (const auto& fs : m.local_factors) {
    detail::require(fs.size() == m.ambient.size(), "classifier factor set has the wrong number of modes");
    for (std::size_t k = 0; k < fs.size(); ++k) {
      detail::require(fs[k].rows() == m.ambient[k], "classifier factor does not match ambient extent");
    }
  }
}

/// Keeps only the local factors of a fitted model: one class per source.
inline ClassifierModel classifier_from_model(const PerTuckerModel& model, std::vector<std::string> labels = {}) {
  ClassifierModel c;
  if (labels.empty()) {
    for (std::size_t n = 0; n < model.num_sources(); ++n) labels.push_back(std::to_string(n));
  }
  detail::require(labels.size() == model.num_sources(), "one label per source required");
  c.labels = std::move(labels);
  for (const auto& u : model.global_factors) c.ambient.push_back(u.rows());
  for (const auto& s : model.sources) c.local_factors.push_back(s.local_factors);
  return c;
}

/// Fits perTucker with each class as a source and keeps the local factors.
inline ClassifierModel train_classifier(std::span<const DenseTensor> class_data, const FitConfig& cfg,
                                        std::vector<std::string> labels = {}) {
  return classifier_from_model(fit(class_data, cfg).model, std::move(labels));
}

struct ClassifyResult {
  std::size_t label = 0;
  std::vector<double> scores;
  bool tie = false;  // another class reached the maximum score
};

namespace detail {

/// A single sample as a K-mode tensor (a trailing unit sample mode is dropped).
inline DenseTensor as_single_sample(const DenseTensor& y, const Dims& ambient) {
  if (y.order() == ambient.size() + 1 && y.dims().back() == 1) {
    Dims d(y.dims().begin(), y.dims().end() - 1);
    return DenseTensor(d, std::vector<double>(y.data().begin(), y.data().end()));
  }
  if (y.dims() != ambient) {
    throw ArgumentError("sample dims " + dims_to_string(y.dims()) + " do not match model dims " +
                        dims_to_string(ambient));
  }
  return y;
}

}  // namespace detail

/// ‖y ×_0 V_0ᵀ ... ×_{K-1} V_{K-1}ᵀ‖_F²; trailing modes of y pass through.
inline double projection_energy(std::span<const FactorMatrix> factors, const DenseTensor& y) {
  return squared_norm(project_core(y, factors));
}

inline ClassifyResult classify(const ClassifierModel& m, const DenseTensor& y_new) {
  validate(m);
  const DenseTensor y = detail::as_single_sample(y_new, m.ambient);
  ClassifyResult r;
  for (const auto& fs : m.local_factors) r.scores.push_back(projection_energy(fs, y));
  const auto best = std::max_element(r.scores.begin(), r.scores.end());  // first maximum wins
  r.label = static_cast<std::size_t>(best - r.scores.begin());
  r.tie = std::count(r.scores.begin(), r.scores.end(), *best) > 1;
  return r;
}

/// Classifies every sample (last-mode slice) of a K+1-mode tensor.
inline std::vector<ClassifyResult> classify_samples(const ClassifierModel& m, const DenseTensor& y) {
  validate(m);
  detail::require(y.order() == m.ambient.size() + 1, "classify_samples expects a trailing sample mode");
  std::vector<ClassifyResult> out;
  const std::size_t s = y.dims().back();
  for (std::size_t i = 0; i < s; ++i) out.push_back(classify(m, slice_last(y, i, 1)));
  return out;
}

// ---------------------------------------------------------------------------
// Monitoring

/// ‖C_L‖_F² for y projected on a set of local factors.
inline double monitor_statistic(std::span<const FactorMatrix> local_factors, const DenseTensor& y) {
  return projection_energy(local_factors, y);
}

/// ‖C_{L,n}‖_F² of a fitted source.
inline double monitor_statistic(const PerTuckerModel& m, std::size_t source) {
  return squared_norm(m.sources.at(source).local_core);
}

enum class LimitScale { Raw, Log };

struct ControlPolicy {
  double sigmas = 3.0;
  LimitScale scale = LimitScale::Raw;  // Log: mean/std of log(stat), limit mapped back
};

struct MonitorConfig {
  double control_limit = 0.0;  // in raw statistic units
  double mean = 0.0;           // of the training statistic (log scale if scale == Log)
  double stddev = 0.0;         // sample standard deviation, same scale as mean
  double sigmas = 3.0;
  LimitScale scale = LimitScale::Raw;
  std::size_t training_count = 0;
};

inline MonitorConfig fit_control_limit(std::span<const double> train_stats, ControlPolicy policy = {}) {
  if (train_stats.empty()) throw ArgumentError("fit_control_limit: empty training statistics");
  detail::require(std::isfinite(policy.sigmas), "fit_control_limit: sigmas must be finite");
  std::vector<double> v(train_stats.begin(), train_stats.end());
  for (double& x : v) {
    if (!std::isfinite(x) || x < 0.0) throw ArgumentError("fit_control_limit: statistics must be finite and >= 0");
    if (policy.scale == LimitScale::Log) {
      if (x <= 0.0) throw ArgumentError("fit_control_limit: log scale needs positive statistics");
      x = std::log(x);
    }
  }
  MonitorConfig c;
  c.sigmas = policy.sigmas;
  c.scale = policy.scale;
  c.training_count = v.size();
  c.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - c.mean) * (x - c.mean);
    c.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  const double limit = c.mean + c.sigmas * c.stddev;
  c.control_limit = policy.scale == LimitScale::Log ? std::exp(limit) : limit;
  if (!std::isfinite(c.control_limit)) throw NumericError("fit_control_limit: control limit is not finite");
  return c;
}

inline bool detect(const MonitorConfig& c, double stat) { return stat > c.control_limit; }

// ---------------------------------------------------------------------------
// Clustering

/// ρ_{ij} = ‖P_i − P_j‖_F², P_n the projector of V_{n,K-1} ⊗ ... ⊗ V_{n,0}.
inline Matrix subspace_distance_matrix(std::span<const std::vector<FactorMatrix>> clients) {
  const std::size_t N = clients.size();
  detail::require(N >= 1, "subspace_distance_matrix: no clients");
  for (const auto& c : clients) {
    detail::require(c.size() == clients[0].size(), "subspace_distance_matrix: clients differ in mode count");
    for (std::size_t k = 0; k < c.size(); ++k) {
      detail::require(c[k].rows() == clients[0][k].rows(), "subspace_distance_matrix: ambient dims differ");
      detail::require(c[k].rank() == clients[0][k].rank(), "subspace_distance_matrix: local ranks differ");
    }
  }
  std::vector<Matrix> chains;
  chains.reserve(N);
  for (const auto& c : clients) chains.push_back(reverse_kron_chain(c));
  Matrix d = Matrix::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = i + 1; j < N; ++j) {
      const double v = std::max(0.0, subspace_error(chains[i], chains[j]));
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      d(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return d;
}

namespace detail {

inline void check_distance_matrix(const Matrix& d) {
  require(d.rows() == d.cols() && d.rows() >= 1, "distance matrix must be square and nonempty");
  require(d.allFinite(), "distance matrix has non-finite entries");
  const double tol = 1e-9 * std::max(1.0, d.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    require(std::abs(d(i, i)) <= tol, "distance matrix diagonal must be zero");
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      require(d(i, j) >= -tol, "distance matrix has negative entries");
      require(std::abs(d(i, j) - d(j, i)) <= tol, "distance matrix is not symmetric");
    }
  }
}

/// Relabels so clusters are numbered in order of first appearance.
inline std::vector<std::size_t> canonical_labels(const std::vector<std::size_t>& raw) {
  std::vector<std::size_t> map(raw.size() + 1, std::numeric_limits<std::size_t>::max());
  std::vector<std::size_t> out(raw.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (map[raw[i]] == std::numeric_limits<std::size_t>::max()) map[raw[i]] = next++;
    out[i] = map[raw[i]];
  }
  return out;
}

struct KMeansResult {
  std::vector<std::size_t> labels;
  double inertia = std::numeric_limits<double>::infinity();
};

/// Lloyd iterations from a k-means++ start; rows of x are points.
inline KMeansResult kmeans_once(const Matrix& x, std::size_t k, Rng& rng, std::size_t max_iters = 300) {
  const auto n = static_cast<std::size_t>(x.rows());
  Matrix centers(static_cast<Eigen::Index>(k), x.cols());
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centers.row(0) = x.row(static_cast<Eigen::Index>(first(rng)));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> ud(0.0, total);
      double target = ud(rng);
      for (pick = 0; pick + 1 < n; ++pick) {
        target -= d2[pick];
        if (target < 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
  }

  KMeansResult r;
  r.labels.assign(n, 0);
  for (std::size_t it = 0; it < max_iters; ++it) {
    bool changed = it == 0;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = (x.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      if (r.labels[i] != best) changed = true;
      r.labels[i] = best;
      inertia += bd;
    }
    r.inertia = inertia;
    if (!changed) break;
    Matrix sums = Matrix::Zero(centers.rows(), centers.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(r.labels[i])) += x.row(static_cast<Eigen::Index>(i));
      ++counts[r.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
    }
  }
  return r;
}

}  // namespace detail

/// Seeded k-means with k-means++ starts; the lowest-inertia restart wins.
inline std::vector<std::size_t> kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t restarts = 10) {
  detail::require(k >= 1 && k <= static_cast<std::size_t>(x.rows()), "kmeans: k out of range");
  detail::KMeansResult best;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, r));
    detail::KMeansResult cur = detail::kmeans_once(x, k, rng);
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  return detail::canonical_labels(best.labels);
}

/// Normalized spectral clustering on the affinity exp(−d/σ), σ the median nonzero
/// off-diagonal distance.
inline std::vector<std::size_t> spectral_cluster(const Matrix& d, std::size_t k, std::uint64_t seed) {
  detail::check_distance_matrix(d);
  const auto n = static_cast<std::size_t>(d.rows());
  if (k < 2 || k > n) throw ArgumentError("spectral_cluster: k must be in [2, " + std::to_string(n) + "]");
  std::vector<double> nonzero;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = i + 1; j < d.cols(); ++j)
      if (d(i, j) > 0.0) nonzero.push_back(d(i, j));
  double sigma = 1.0;
  if (!nonzero.empty()) {
    std::sort(nonzero.begin(), nonzero.end());
    const std::size_t m = nonzero.size();
    sigma = m % 2 ? nonzero[m / 2] : 0.5 * (nonzero[m / 2 - 1] + nonzero[m / 2]);
  }
  Matrix a = (-d.array() / sigma).exp().matrix();
  a.diagonal().setZero();
  Vector deg = a.rowwise().sum();
  Vector inv_sqrt(deg.size());
  for (Eigen::Index i = 0; i < deg.size(); ++i) inv_sqrt(i) = deg(i) > 0.0 ? 1.0 / std::sqrt(deg(i)) : 0.0;
  const Matrix lnorm = inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
  Matrix emb = top_eigvecs(lnorm, k).vectors.matrix();
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    const double nr = emb.row(i).norm();
    if (nr > 0.0) emb.row(i) /= nr;
  }
  return kmeans(emb, k, seed);
}

/// Classical MDS of d read as squared distances: B = −½ J d J, coordinates
/// = top eigenvectors scaled by sqrt(max(λ, 0)).
inline Matrix mds_embed(const Matrix& d, std::size_t dim = 2) {
  detail::check_distance_matrix(d);
  const auto n = static_cast<std::size_t>(d.rows());
  detail::require(dim >= 1 && dim <= n, "mds_embed: dim out of range");
  const auto ni = d.rows();
  const Matrix j = Matrix::Identity(ni, ni) - Matrix::Constant(ni, ni, 1.0 / static_cast<double>(n));
  const Matrix b = -0.5 * j * d * j;
  const EigenSelection sel = top_eigvecs(0.5 * (b + b.transpose()), dim);
  Matrix coords = sel.vectors.matrix();
  for (Eigen::Index c = 0; c < coords.cols(); ++c) coords.col(c) *= std::sqrt(std::max(0.0, sel.values(c)));
  return coords;
}

struct ClusterReport {
  Matrix distances;
  std::vector<std::size_t> assignments;
  Matrix embedding;  // N × 2
};

inline ClusterReport cluster_clients(std::span<const std::vector<FactorMatrix>> clients, std::size_t k,
                                     std::uint64_t seed) {
  ClusterReport r;
  r.distances = subspace_distance_matrix(clients);
  r.assignments = spectral_cluster(r.distances, k, seed);
  r.embedding = mds_embed(r.distances, std::min<std::size_t>(2, clients.size()));
  return r;
}

// ---------------------------------------------------------------------------
// CSV export

inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
  os.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << m(i, j);
    os << '\n';
  }
}

inline void write_cluster_csv(std::ostream& os, const ClusterReport& r) {
  os.precision(17);
  os << "client,cluster";
  for (Eigen::Index c = 0; c < r.embedding.cols(); ++c) os << ",mds_" << c;
  os << '\n';
  for (std::size_t i = 0; i < r.assignments.size(); ++i) {
    os << i << ',' << r.assignments[i];
    for (Eigen::Index c = 0; c < r.embedding.cols(); ++c) os << ',' << r.embedding(static_cast<Eigen::Index>(i), c);
    os << '\n';
  }
}

}  // namespace pertucker
