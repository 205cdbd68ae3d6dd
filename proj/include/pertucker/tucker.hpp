#pragma once

// Standard Tucker decomposition (HOSVD start, HOOI refinement) and the two
// pooled/per-source baselines built from it.
//
// ranks may cover only the leading modes of a tensor; trailing modes beyond
// ranks.size() are carried through uncompressed (this is how the sample mode of
// multi-sample data is handled).

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pertucker/errors.hpp"
#include "pertucker/linalg.hpp"
#include "pertucker/tensor.hpp"

namespace pertucker {

struct TuckerModel {
  std::vector<FactorMatrix> factors;  // one per compressed leading mode
  DenseTensor core;
};

struct HooiOptions {
  std::size_t max_iters = 50;
  double tol = 1e-8;  // on the change of ‖y − ŷ‖²/‖y‖² between sweeps
};

struct TuckerFit {
  TuckerModel model;
  std::vector<double> errors;  // ‖y − ŷ‖², entry 0 is the HOSVD start
  std::size_t sweeps = 0;
};

/// y ×_0 U_0ᵀ ×_1 U_1ᵀ ... over the given factors.
inline DenseTensor project_core(const DenseTensor& y, std::span<const FactorMatrix> factors) {
  std::vector<ModeFactor> mf;
  mf.reserve(factors.size());
  for (std::size_t k = 0; k < factors.size(); ++k) mf.push_back({&factors[k].matrix(), k, true});
  return multi_mode_product(y, mf);
}

/// core ×_0 U_0 ×_1 U_1 ... over the given factors.
inline DenseTensor expand_core(const DenseTensor& core, std::span<const FactorMatrix> factors) {
  std::vector<ModeFactor> mf;
  mf.reserve(factors.size());
  for (std::size_t k = 0; k < factors.size(); ++k) mf.push_back({&factors[k].matrix(), k, false});
  return multi_mode_product(core, mf);
}

/// y ×_q U_qᵀ for every factor mode q except `skip`.
inline DenseTensor project_except(const DenseTensor& y, std::span<const FactorMatrix> factors, std::size_t skip) {
  std::vector<ModeFactor> mf;
  for (std::size_t q = 0; q < factors.size(); ++q) {
    if (q != skip) mf.push_back({&factors[q].matrix(), q, true});
  }
  return multi_mode_product(y, mf);
}

inline DenseTensor reconstruct(const TuckerModel& m) { return expand_core(m.core, m.factors); }

namespace detail {

inline void check_ranks(const DenseTensor& y, std::span<const std::size_t> ranks) {
  if (ranks.size() > y.order()) throw ArgumentError("tucker: more ranks than tensor modes");
  for (std::size_t k = 0; k < ranks.size(); ++k) {
    if (ranks[k] > y.dim(k)) {
      throw ArgumentError("tucker: rank " + std::to_string(ranks[k]) + " exceeds extent " +
                          std::to_string(y.dim(k)) + " of mode " + std::to_string(k));
    }
  }
}

inline FactorMatrix leading_mode_subspace(const DenseTensor& z, std::size_t k, std::size_t rank) {
  const Matrix zk = unfold(z, k);
  return top_eigvecs(zk * zk.transpose(), rank).vectors;
}

}  // namespace detail

inline TuckerModel hosvd(const DenseTensor& y, std::span<const std::size_t> ranks) {
  detail::check_ranks(y, ranks);
  TuckerModel m;
  for (std::size_t k = 0; k < ranks.size(); ++k) m.factors.push_back(detail::leading_mode_subspace(y, k, ranks[k]));
  m.core = project_core(y, m.factors);
  return m;
}

inline TuckerFit hooi(const DenseTensor& y, std::span<const std::size_t> ranks, HooiOptions opts = {}) {
  TuckerFit fit;
  fit.model = hosvd(y, ranks);
  const double total = squared_norm(y);
  const double denom = total > 0.0 ? total : 1.0;
  fit.errors.push_back(squared_distance(y, reconstruct(fit.model)));
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    auto& f = fit.model.factors;
    for (std::size_t k = 0; k < f.size(); ++k) {
      f[k] = detail::leading_mode_subspace(project_except(y, f, k), k, ranks[k]);
    }
    fit.model.core = project_core(y, f);
    fit.errors.push_back(squared_distance(y, reconstruct(fit.model)));
    ++fit.sweeps;
    const double change = std::abs(fit.errors[fit.errors.size() - 2] - fit.errors.back()) / denom;
    if (change < opts.tol) break;
  }
  return fit;
}

/// Inputs concatenated along their last (sample) mode, then one HOOI. Per-source
/// cores are the projections of each source onto the shared factors.
struct GlobalTuckerResult {
  std::vector<FactorMatrix> factors;
  std::vector<DenseTensor> cores;
};

inline GlobalTuckerResult global_tucker(std::span<const DenseTensor> sources, std::span<const std::size_t> ranks,
                                        HooiOptions opts = {}) {
  const DenseTensor pooled = concat_last(sources);
  GlobalTuckerResult out;
  out.factors = hooi(pooled, ranks, opts).model.factors;
  for (const auto& y : sources) out.cores.push_back(project_core(y, out.factors));
  return out;
}

/// Independent HOOI per source.
inline std::vector<TuckerModel> local_tucker(std::span<const DenseTensor> sources, std::span<const std::size_t> ranks,
                                             HooiOptions opts = {}) {
  std::vector<TuckerModel> out;
  out.reserve(sources.size());
  for (const auto& y : sources) out.push_back(hooi(y, ranks, opts).model);
  return out;
}

}  // namespace pertucker
