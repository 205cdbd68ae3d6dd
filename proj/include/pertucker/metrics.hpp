#pragma once

// Error measures against ground truth, convergence-rate fitting on a FitTrace,
// and mean ± std aggregation over repeats.

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <random>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pertucker/engine.hpp"
#include "pertucker/errors.hpp"
#include "pertucker/linalg.hpp"
#include "pertucker/simgen.hpp"
#include "pertucker/tensor.hpp"
#include "pertucker/tucker.hpp"

namespace pertucker {

/// Unset fields are not defined for the method (e.g. a purely global model has no
/// local subspace).
struct EvalReport {
  std::optional<double> global_subspace_error;
  std::optional<double> local_subspace_error;
  std::optional<double> global_component_error;
  std::optional<double> local_component_error;
  std::optional<double> denoised_error;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct TruthBundle {
  std::vector<FactorMatrix> global_factors;
  std::vector<DenseTensor> global_parts;
  std::vector<DenseTensor> local_parts;
  std::vector<std::vector<FactorMatrix>> reference_local_factors;  // per source; may be empty
};

/// What a method produced. Empty part vectors mean the method has no such
/// component; for the denoised error a missing component counts as zero.
struct ComponentEstimate {
  std::optional<std::vector<FactorMatrix>> global_factors;
  std::optional<std::vector<std::vector<FactorMatrix>>> local_factors;
  std::vector<DenseTensor> global_parts;
  std::vector<DenseTensor> local_parts;
};

/// ‖P(⊗A) − P(⊗B)‖_F² / ‖⊗A‖_F², Kronecker chains in reverse mode order.
inline double normalized_subspace_error(std::span<const FactorMatrix> truth, std::span<const FactorMatrix> est) {
  detail::require(truth.size() == est.size(), "subspace comparison needs the same number of modes");
  const Matrix kt = reverse_kron_chain(truth);
  const Matrix ke = reverse_kron_chain(est);
  const double denom = kt.squaredNorm();
  detail::require(denom > 0.0, "subspace comparison against an empty truth subspace");
  return subspace_error(kt, ke) / denom;
}

namespace detail {

inline double ratio_error(const std::vector<DenseTensor>& est, const std::vector<DenseTensor>& truth) {
  require(est.size() == truth.size(), "component count differs from truth");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    num += squared_distance(est[n], truth[n]);
    den += squared_norm(truth[n]);
  }
  return den > 0.0 ? num / den : num;
}

}  // namespace detail

inline EvalReport evaluate(const ComponentEstimate& est, const TruthBundle& truth) {
  detail::require(!truth.global_parts.empty() && truth.global_parts.size() == truth.local_parts.size(),
                  "evaluate: ground truth is missing");
  const std::size_t N = truth.global_parts.size();
  EvalReport r;
  if (est.global_factors) {
    detail::require(!truth.global_factors.empty(), "evaluate: ground-truth global factors are missing");
    r.global_subspace_error = normalized_subspace_error(truth.global_factors, *est.global_factors);
  }
  if (est.local_factors && !truth.reference_local_factors.empty()) {
    detail::require(est.local_factors->size() == N && truth.reference_local_factors.size() == N,
                    "evaluate: local factor sets do not match the source count");
    double sum = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      sum += normalized_subspace_error(truth.reference_local_factors[n], (*est.local_factors)[n]);
    }
    r.local_subspace_error = sum / static_cast<double>(N);
  }
  if (!est.global_parts.empty()) r.global_component_error = detail::ratio_error(est.global_parts, truth.global_parts);
  if (!est.local_parts.empty()) r.local_component_error = detail::ratio_error(est.local_parts, truth.local_parts);
  {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const DenseTensor t = truth.global_parts[n] + truth.local_parts[n];
      DenseTensor e(t.dims());
      if (!est.global_parts.empty()) e = e + est.global_parts.at(n);
      if (!est.local_parts.empty()) e = e + est.local_parts.at(n);
      num += squared_distance(e, t);
      den += squared_norm(t);
    }
    r.denoised_error = den > 0.0 ? num / den : num;
  }
  return r;
}

inline ComponentEstimate estimate_from_model(const PerTuckerModel& m) {
  ComponentEstimate e;
  e.global_factors = m.global_factors;
  e.local_factors.emplace();
  for (std::size_t n = 0; n < m.num_sources(); ++n) {
    e.local_factors->push_back(m.sources[n].local_factors);
    e.global_parts.push_back(global_reconstruction(m, n));
    e.local_parts.push_back(local_reconstruction(m, n));
  }
  return e;
}

/// Pooled Tucker: every reconstruction is attributed to the global component.
inline ComponentEstimate estimate_from_global_tucker(const GlobalTuckerResult& g) {
  ComponentEstimate e;
  e.global_factors = g.factors;
  for (const auto& c : g.cores) e.global_parts.push_back(expand_core(c, g.factors));
  return e;
}

/// Per-source Tucker: every reconstruction is attributed to the local component.
inline ComponentEstimate estimate_from_local_tucker(const std::vector<TuckerModel>& ms) {
  ComponentEstimate e;
  e.local_factors.emplace();
  for (const auto& m : ms) {
    e.local_factors->push_back(m.factors);
    e.local_parts.push_back(reconstruct(m));
  }
  return e;
}

inline EvalReport eval_against_truth(const PerTuckerModel& m, const TruthBundle& truth) {
  return evaluate(estimate_from_model(m), truth);
}

inline constexpr std::uint64_t kReferenceStream = 0x5245464C4F43414Cull;

/// Reference local factors per source: Tucker (ranks `local_ranks` on the image
/// modes) of `samples` fresh pattern-only images drawn from that source's ratio
/// range, from a seed stream reserved for this purpose.
inline std::vector<std::vector<FactorMatrix>> reference_local_factors(const SimConfig& cfg,
                                                                       std::span<const std::size_t> local_ranks,
                                                                       std::size_t samples = 100) {
  validate(cfg);
  detail::require(local_ranks.size() == 2, "reference factors need two local ranks");
  std::vector<std::vector<FactorMatrix>> out;
  const std::size_t side = cfg.side;
  for (std::size_t n = 0; n < cfg.sources.size(); ++n) {
    const SourceSpec& src = cfg.sources[n];
    Rng rng(derive_seed(derive_seed(cfg.seed, kReferenceStream), n));
    const RatioRange range = src.ratio_range();
    std::uniform_real_distribution<double> ud(range.lo, range.hi);
    std::vector<double> stack(side * side * samples);
    for (std::size_t i = 0; i < samples; ++i) {
      const double ratio = range.lo == range.hi ? range.lo : ud(rng);
      const DenseTensor img = gen_pattern_image({src.kind, ratio, side, cfg.amplitude});
      std::copy(img.data().begin(), img.data().end(), stack.begin() + static_cast<std::ptrdiff_t>(i * side * side));
    }
    out.push_back(hooi(DenseTensor({side, side, samples}, std::move(stack)), local_ranks).model.factors);
  }
  return out;
}

inline TruthBundle truth_bundle(const GroundTruth& g, std::vector<std::vector<FactorMatrix>> reference = {}) {
  return {g.global_factors, g.global_parts, g.local_parts, std::move(reference)};
}

// ---------------------------------------------------------------------------
// Convergence rates

struct RateFit {
  double global_slope = 0.0;
  double local_slope = 0.0;
};

/// Least-squares slope of log(cummin(x_t)) against log(t), t = 1..T. Values are
/// clamped to DBL_MIN so exact zeros stay finite.
inline double loglog_cummin_slope(std::span<const double> x) {
  detail::require(x.size() >= 2, "slope fit needs at least two points");
  const auto T = static_cast<double>(x.size());
  double run = std::numeric_limits<double>::infinity();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (!std::isfinite(x[t]) || x[t] < 0.0) throw ArgumentError("slope fit: series must be finite and >= 0");
    run = std::min(run, std::max(x[t], DBL_MIN));
    const double lx = std::log(static_cast<double>(t + 1));
    const double ly = std::log(run);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (T * sxy - sx * sy) / (T * sxx - sx * sx);
}

inline constexpr std::size_t kMinRateIterations = 50;

inline RateFit rate_fit(const FitTrace& trace) {
  if (trace.iterations.size() < kMinRateIterations) {
    throw ArgumentError("rate_fit: need at least " + std::to_string(kMinRateIterations) + " iterations, got " +
                        std::to_string(trace.iterations.size()));
  }
  std::vector<double> g, l;
  for (const auto& it : trace.iterations) {
    g.push_back(it.global_total());
    l.push_back(it.local_total());
  }
  return {loglog_cummin_slope(g), loglog_cummin_slope(l)};
}

// ---------------------------------------------------------------------------
// Aggregation and CSV

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t count = 0;
};

inline MeanStd mean_std(std::span<const double> v) {
  MeanStd m;
  m.count = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

inline const std::vector<std::string>& eval_metric_names() {
  static const std::vector<std::string> names{"global_subspace_error", "local_subspace_error",
                                              "global_component_error", "local_component_error", "denoised_error"};
  return names;
}

inline std::vector<std::optional<double>> metric_values(const EvalReport& r) {
  return {r.global_subspace_error, r.local_subspace_error, r.global_component_error, r.local_component_error,
          r.denoised_error};
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_eval_csv_header(std::ostream& os) {
  os << "method,seed,config_hash";
  for (const auto& n : eval_metric_names()) os << ',' << n;
  os << '\n';
}

/// One row; undefined metrics are empty fields.
inline void write_eval_csv_row(std::ostream& os, const std::string& method, const EvalReport& r) {
  os << method << ',' << r.seed << ',' << r.config_hash;
  for (const auto& v : metric_values(r)) {
    os << ',';
    if (v) os << format_double(*v);
  }
  os << '\n';
}

struct AggregateRow {
  std::string method;
  std::string metric;
  std::optional<MeanStd> value;  // unset when the metric is undefined for the method
};

inline std::vector<AggregateRow> aggregate(const std::string& method, std::span<const EvalReport> reports) {
  std::vector<AggregateRow> rows;
  const auto& names = eval_metric_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::vector<double> vals;
    for (const auto& r : reports) {
      if (auto v = metric_values(r)[i]) vals.push_back(*v);
    }
    AggregateRow row{method, names[i], std::nullopt};
    if (!vals.empty()) row.value = mean_std(vals);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_aggregate_csv(std::ostream& os, std::span<const AggregateRow> rows) {
  os << "method,metric,mean,std,count\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.metric << ',';
    if (r.value) os << format_double(r.value->mean) << ',' << format_double(r.value->stddev) << ',' << r.value->count;
    else os << ",,0";
    os << '\n';
  }
}

/// FNV-1a, hex; used to tag reports with the configuration they came from.
inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace pertucker
