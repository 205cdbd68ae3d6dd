#pragma once

// Personalized Tucker decomposition: each source Y_n (extents I_0..I_{K-1} x s_n)
// is modelled as
//     Y_n ≈ C_{G,n} ×_0 U_0 ... ×_{K-1} U_{K-1}  +  C_{L,n} ×_0 V_{n,0} ... ×_{K-1} V_{n,K-1}
// with shared global factors U_k, per-source local factors V_{n,k}, and
// U_kᵀ V_{n,k} = 0 for every k in the orthogonal-mode set. The trailing sample mode
// is never compressed.
//
// The solver is a proximal block coordinate descent: every factor update is the top
// eigenspace of a data Gram matrix plus 2ρ times the previous projector, and for
// constrained modes the local update is taken in the orthogonal complement of the
// freshly updated global factor. Cores are always the closed-form projections.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pertucker/errors.hpp"
#include "pertucker/linalg.hpp"
#include "pertucker/parallel.hpp"
#include "pertucker/random.hpp"
#include "pertucker/tensor.hpp"
#include "pertucker/tucker.hpp"

namespace pertucker {

enum class InitMode { Random, Tucker };

inline const char* to_string(InitMode m) { return m == InitMode::Random ? "random" : "tucker"; }

struct FitConfig {
  std::vector<std::size_t> global_ranks;              // g_k, one per decomposable mode
  std::vector<std::vector<std::size_t>> local_ranks;  // l_{n,k}; a single row applies to every source
  std::vector<std::size_t> ortho_modes;               // modes with U_kᵀ V_{n,k} = 0
  std::optional<double> rho;                          // unset: default_rho(data)
  std::size_t max_iters = 500;
  double stop_tol = 1e-8;  // on total (global + local) subspace change per iteration
  InitMode init = InitMode::Tucker;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::size_t modes() const { return global_ranks.size(); }

  const std::vector<std::size_t>& local_ranks_for(std::size_t n) const {
    return local_ranks.size() == 1 ? local_ranks.front() : local_ranks.at(n);
  }

  bool is_ortho(std::size_t k) const {
    return std::find(ortho_modes.begin(), ortho_modes.end(), k) != ortho_modes.end();
  }
};

struct SourceComponents {
  std::vector<FactorMatrix> local_factors;
  DenseTensor global_core;
  DenseTensor local_core;
};

struct PerTuckerModel {
  std::vector<FactorMatrix> global_factors;
  std::vector<SourceComponents> sources;
  FitConfig config;  // echo of the fit settings with rho resolved

  std::size_t modes() const { return global_factors.size(); }
  std::size_t num_sources() const { return sources.size(); }
};

struct IterationRecord {
  double objective = 0.0;
  std::vector<double> global_change;              // per mode: ‖U_{t+1}U_{t+1}ᵀ − U_tU_tᵀ‖_F²
  std::vector<std::vector<double>> local_change;  // [source][mode]

  double global_total() const {
    double s = 0.0;
    for (double v : global_change) s += v;
    return s;
  }
  double local_total() const {
    double s = 0.0;
    for (const auto& row : local_change)
      for (double v : row) s += v;
    return s;
  }
  double total_change() const { return global_total() + local_total(); }
};

struct FitTrace {
  std::vector<IterationRecord> iterations;
  bool converged = false;
};

struct FitResult {
  PerTuckerModel model;
  FitTrace trace;
  std::vector<std::string> warnings;
};

/// 0.1 · max_n ‖Y_n‖_F² / N.
inline double default_rho(std::span<const DenseTensor> data) {
  double mx = 0.0;
  for (const auto& y : data) mx = std::max(mx, squared_norm(y));
  return data.empty() ? 0.0 : 0.1 * mx / static_cast<double>(data.size());
}

/// Throws ArgumentError on infeasible settings; returns non-fatal warnings.
inline std::vector<std::string> validate_config(const FitConfig& cfg, std::span<const DenseTensor> data) {
  using detail::require;
  std::vector<std::string> warnings;
  require(!data.empty(), "fit: no data sources");
  const std::size_t K = cfg.modes();
  require(K >= 1, "fit: global_ranks must name at least one mode");
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (data[n].order() != K + 1) {
      throw ArgumentError("fit: source " + std::to_string(n) + " has order " + std::to_string(data[n].order()) +
                          ", expected " + std::to_string(K + 1) + " (decomposable modes plus sample mode)");
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (data[n].dim(k) != data[0].dim(k)) {
        throw ArgumentError("fit: source " + std::to_string(n) + " disagrees with source 0 on mode " +
                            std::to_string(k));
      }
    }
  }
  require(cfg.local_ranks.size() == 1 || cfg.local_ranks.size() == data.size(),
          "fit: local_ranks must have one row or one per source");
  require(!cfg.ortho_modes.empty(), "fit: ortho_modes must be nonempty");
  for (std::size_t i = 0; i < cfg.ortho_modes.size(); ++i) {
    require(cfg.ortho_modes[i] < K, "fit: ortho mode " + std::to_string(cfg.ortho_modes[i]) + " out of range");
    for (std::size_t j = 0; j < i; ++j) require(cfg.ortho_modes[i] != cfg.ortho_modes[j], "fit: repeated ortho mode");
  }
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t extent = data[0].dim(k);
    require(cfg.global_ranks[k] <= extent, "fit: global rank " + std::to_string(cfg.global_ranks[k]) +
                                               " exceeds extent " + std::to_string(extent) + " of mode " +
                                               std::to_string(k));
  }
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto& l = cfg.local_ranks_for(n);
    require(l.size() == K, "fit: local rank row has wrong length");
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t extent = data[0].dim(k);
      require(l[k] <= extent, "fit: local rank exceeds extent of mode " + std::to_string(k));
      if (cfg.is_ortho(k) && cfg.global_ranks[k] + l[k] > extent) {
        throw ArgumentError("fit: infeasible ranks for orthogonal mode " + std::to_string(k) + ": g + l = " +
                            std::to_string(cfg.global_ranks[k] + l[k]) + " > " + std::to_string(extent) +
                            " (source " + std::to_string(n) + ")");
      }
    }
  }
  if (cfg.rho) require(std::isfinite(*cfg.rho) && *cfg.rho >= 0.0, "fit: rho must be finite and nonnegative");
  require(std::isfinite(cfg.stop_tol) && cfg.stop_tol >= 0.0, "fit: stop_tol must be nonnegative");
  for (const auto& y : data) {
    for (double v : y.data()) {
      if (!std::isfinite(v)) throw NumericError("fit: non-finite input");
    }
  }
  if (cfg.ortho_modes.size() == 1) {
    warnings.emplace_back(
        "only one orthogonal mode: the convergence guarantee assumes at least two, although a single mode "
        "typically converges in practice");
  }
  return warnings;
}

inline DenseTensor global_reconstruction(const PerTuckerModel& m, std::size_t n) {
  return expand_core(m.sources.at(n).global_core, m.global_factors);
}

inline DenseTensor local_reconstruction(const PerTuckerModel& m, std::size_t n) {
  return expand_core(m.sources.at(n).local_core, m.sources.at(n).local_factors);
}

namespace detail {

inline void check_conformable(const PerTuckerModel& m, std::span<const DenseTensor> data) {
  if (data.size() != m.num_sources()) throw ArgumentError("model has " + std::to_string(m.num_sources()) +
                                                          " sources but " + std::to_string(data.size()) +
                                                          " data tensors were given");
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (data[n].order() != m.modes() + 1) throw ArgumentError("data order does not match model");
    for (std::size_t k = 0; k < m.modes(); ++k) {
      if (data[n].dim(k) != m.global_factors[k].rows()) throw ArgumentError("data extent does not match model");
    }
    const std::size_t last = m.modes();
    if (m.sources[n].global_core.order() != m.modes() + 1 ||
        m.sources[n].global_core.dim(last) != data[n].dim(last)) {
      throw ArgumentError("sample count of source " + std::to_string(n) + " does not match its cores");
    }
  }
}

inline Matrix gram_of_unfolding(const DenseTensor& z, std::size_t k) {
  const Matrix zk = unfold(z, k);
  return zk * zk.transpose();
}

}  // namespace detail

/// Σ_n ‖Y_n − global_n − local_n‖_F².
inline double objective(const PerTuckerModel& m, std::span<const DenseTensor> data) {
  detail::check_conformable(m, data);
  double total = 0.0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    total += squared_distance(data[n], global_reconstruction(m, n) + local_reconstruction(m, n));
  }
  return total;
}

/// max over sources and orthogonal modes of ‖U_kᵀ V_{n,k}‖_F.
inline double orthogonality_violation(const PerTuckerModel& m) {
  double worst = 0.0;
  for (const auto& src : m.sources) {
    for (std::size_t k : m.config.ortho_modes) {
      worst = std::max(worst, (m.global_factors[k].matrix().transpose() * src.local_factors[k].matrix()).norm());
    }
  }
  return worst;
}

/// Closed-form cores C_{G,n} = Y_n ×_k U_kᵀ and C_{L,n} = Y_n ×_k V_{n,k}ᵀ. Only
/// optimal when the orthogonality constraint holds, which is checked.
inline PerTuckerModel update_cores(PerTuckerModel m, std::span<const DenseTensor> data) {
  if (m.config.ortho_modes.empty()) throw StateError("update_cores: no orthogonal mode configured");
  const double violation = orthogonality_violation(m);
  if (violation > 1e-6) {
    throw StateError("update_cores: global/local orthogonality violated (" + std::to_string(violation) + ")");
  }
  for (std::size_t n = 0; n < data.size(); ++n) {
    m.sources.at(n).global_core = project_core(data[n], m.global_factors);
    m.sources[n].local_core = project_core(data[n], m.sources[n].local_factors);
  }
  return m;
}

/// Σ_n W_{G,n} W_{G,n}ᵀ for mode k, where W_{G,n} is the mode-k unfolding of the
/// global residual Y_n − local_n projected on every other global factor.
inline Matrix global_gram(const PerTuckerModel& m, std::span<const DenseTensor> data, std::size_t k,
                          std::size_t threads = 1) {
  std::vector<Matrix> grams(data.size());
  parallel_for(data.size(), threads, [&](std::size_t n) {
    const DenseTensor residual = data[n] - local_reconstruction(m, n);
    grams[n] = detail::gram_of_unfolding(project_except(residual, m.global_factors, k), k);
  });
  const auto extent = static_cast<Eigen::Index>(m.global_factors.at(k).rows());
  Matrix sum = Matrix::Zero(extent, extent);
  for (const auto& g : grams) sum += g;  // fixed source order
  return sum;
}

/// W_{L,n} W_{L,n}ᵀ for mode k, from the local residual Y_n − global_n.
inline Matrix local_gram(const PerTuckerModel& m, const DenseTensor& y, std::size_t n, std::size_t k) {
  const DenseTensor residual = y - global_reconstruction(m, n);
  return detail::gram_of_unfolding(project_except(residual, m.sources.at(n).local_factors, k), k);
}

/// Proximal global update for mode k: top-g_k eigenvectors of the global Gram plus
/// 2ρ U_k U_kᵀ. A vanishing data term returns the current factor.
inline FactorMatrix update_global_factor_from_gram(const Matrix& gram, const FactorMatrix& current, double rho) {
  if (gram.isZero(0.0)) return current;
  const Matrix s = gram + 2.0 * rho * current.projector();
  return top_eigvecs(s, current.rank()).vectors;
}

inline FactorMatrix update_global_factor(const PerTuckerModel& m, std::span<const DenseTensor> data, std::size_t k,
                                         double rho) {
  detail::check_conformable(m, data);
  return update_global_factor_from_gram(global_gram(m, data, k), m.global_factors.at(k), rho);
}

/// Proximal local update for mode k. In an orthogonal mode the matrix is first
/// sandwiched by I − U_kU_kᵀ so the result lies in the complement of U_k.
inline FactorMatrix update_local_factor_from_gram(const Matrix& gram, const FactorMatrix& current,
                                                  const FactorMatrix& global, bool ortho, double rho) {
  if (gram.isZero(0.0)) {
    const bool feasible = !ortho || (global.matrix().transpose() * current.matrix()).norm() <= 1e-8;
    if (feasible) return current;
  }
  Matrix s = gram + 2.0 * rho * current.projector();
  if (ortho) s = project_out(s, global);
  FactorMatrix v = top_eigvecs(s, current.rank()).vectors;
  if (ortho && v.rank() > 0) {
    // Eigenvalues equal to zero in S' can hand back vectors with a component in
    // span(U); re-project and re-orthonormalize to keep exact feasibility.
    const Matrix& u = global.matrix();
    Matrix p = v.matrix() - u * (u.transpose() * v.matrix());
    if ((p - v.matrix()).norm() > 1e-10) v = orthonormalize(p);
  }
  return v;
}

inline FactorMatrix update_local_factor(const PerTuckerModel& m, std::span<const DenseTensor> data, std::size_t n,
                                        std::size_t k, double rho) {
  detail::check_conformable(m, data);
  const auto& src = m.sources.at(n);
  return update_local_factor_from_gram(local_gram(m, data[n], n, k), src.local_factors.at(k), m.global_factors.at(k),
                                       m.config.is_ortho(k), rho);
}

/// Σ_n ‖R_{G,n} − (R_{G,n} ×U_qᵀ) ×U_q‖² + ρ‖U_kU_kᵀ − P_kP_kᵀ‖², the quantity a
/// global factor update minimizes, with `candidate` in mode k and `previous` as P_k.
inline double global_factor_objective(const PerTuckerModel& m, std::span<const DenseTensor> data, std::size_t k,
                                      const FactorMatrix& candidate, const FactorMatrix& previous, double rho) {
  std::vector<FactorMatrix> factors = m.global_factors;
  factors.at(k) = candidate;
  double total = 0.0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const DenseTensor residual = data[n] - local_reconstruction(m, n);
    total += squared_distance(residual, expand_core(project_core(residual, factors), factors));
  }
  return total + rho * subspace_error(candidate, previous);
}

/// Initial model. Tucker mode: HOOI of the pooled data for the global factors,
/// projected global cores, HOOI of each local residual for the local parts (no
/// orthogonality enforced yet). Random mode: orthonormalized Gaussian factors with
/// constrained local factors projected off the global ones, and projected cores.
inline PerTuckerModel init_model(std::span<const DenseTensor> data, const FitConfig& cfg) {
  validate_config(cfg, data);
  const std::size_t K = cfg.modes();
  PerTuckerModel m;
  m.config = cfg;
  if (!m.config.rho) m.config.rho = default_rho(data);
  m.sources.resize(data.size());
  if (cfg.init == InitMode::Tucker) {
    m.global_factors = global_tucker(data, cfg.global_ranks).factors;
    parallel_for(data.size(), cfg.threads, [&](std::size_t n) {
      auto& src = m.sources[n];
      src.global_core = project_core(data[n], m.global_factors);
      const DenseTensor residual = data[n] - expand_core(src.global_core, m.global_factors);
      TuckerModel local = hooi(residual, cfg.local_ranks_for(n)).model;
      src.local_factors = std::move(local.factors);
      src.local_core = std::move(local.core);
    });
  } else {
    Rng rng(derive_seed(cfg.seed, 0));
    for (std::size_t k = 0; k < K; ++k) {
      m.global_factors.push_back(orthonormalize(gaussian_matrix(rng, data[0].dim(k), cfg.global_ranks[k])));
    }
    for (std::size_t n = 0; n < data.size(); ++n) {
      Rng local_rng(derive_seed(cfg.seed, n + 1));
      auto& src = m.sources[n];
      const auto& l = cfg.local_ranks_for(n);
      for (std::size_t k = 0; k < K; ++k) {
        Matrix draw = gaussian_matrix(local_rng, data[0].dim(k), l[k]);
        if (cfg.is_ortho(k)) {
          const Matrix& u = m.global_factors[k].matrix();
          draw -= u * (u.transpose() * draw);
        }
        src.local_factors.push_back(orthonormalize(draw));
      }
      src.global_core = project_core(data[n], m.global_factors);
      src.local_core = project_core(data[n], src.local_factors);
    }
  }
  return m;
}

using IterationObserver = std::function<void(std::size_t iteration, const PerTuckerModel&)>;

/// Runs the proximal BCD loop from `m` for up to cfg.max_iters iterations.
/// Per iteration and mode k: update U_k; then for every source refresh C_{G,n},
/// update V_{n,k} and refresh C_{L,n}.
inline FitResult fit_from(PerTuckerModel m, std::span<const DenseTensor> data, const IterationObserver& observer = {}) {
  FitResult result;
  result.warnings = validate_config(m.config, data);
  detail::check_conformable(m, data);
  const FitConfig& cfg = m.config;
  const double rho = cfg.rho ? *cfg.rho : default_rho(data);
  m.config.rho = rho;
  const std::size_t K = m.modes();
  const std::size_t N = data.size();

  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    IterationRecord rec;
    rec.global_change.assign(K, 0.0);
    rec.local_change.assign(N, std::vector<double>(K, 0.0));
    for (std::size_t k = 0; k < K; ++k) {
      const Matrix gram = global_gram(m, data, k, cfg.threads);
      FactorMatrix updated = update_global_factor_from_gram(gram, m.global_factors[k], rho);
      rec.global_change[k] = subspace_error(updated, m.global_factors[k]);
      m.global_factors[k] = std::move(updated);

      parallel_for(N, cfg.threads, [&](std::size_t n) {
        auto& src = m.sources[n];
        src.global_core = project_core(data[n], m.global_factors);
        const Matrix lg = local_gram(m, data[n], n, k);
        FactorMatrix v = update_local_factor_from_gram(lg, src.local_factors[k], m.global_factors[k], cfg.is_ortho(k), rho);
        rec.local_change[n][k] = subspace_error(v, src.local_factors[k]);
        src.local_factors[k] = std::move(v);
        src.local_core = project_core(data[n], src.local_factors);
      });
    }
    rec.objective = objective(m, data);
    if (!std::isfinite(rec.objective)) throw NumericError("fit: objective became non-finite");
    const double change = rec.total_change();
    result.trace.iterations.push_back(std::move(rec));
    if (observer) observer(t, m);
    if (change < cfg.stop_tol) {
      result.trace.converged = true;
      break;
    }
  }
  result.model = std::move(m);
  return result;
}

inline FitResult fit(std::span<const DenseTensor> data, const FitConfig& cfg, const IterationObserver& observer = {}) {
  auto warnings = validate_config(cfg, data);
  FitResult r = fit_from(init_model(data, cfg), data, observer);
  r.warnings = std::move(warnings);
  return r;
}

}  // namespace pertucker
