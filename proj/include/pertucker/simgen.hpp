#pragma once

// Synthetic data: pattern images on a shared low-rank background, planted
// perTucker models, a Swiss-ratio client grid, and a monitoring stream.
//
// Pattern geometry for a side-S image (lengths below are for S = 50 and scale
// with S/50). Pixel (i, j) has row i (mode 0) and column j (mode 1) and its
// centre sits at (i + 0.5, j + 0.5); the image centre is c = S/2.
//   swiss      plus sign. Bar thickness t = floor(8·ratio + 0.5) pixels occupying
//              rows (resp. columns) [c − t/2, c − t/2 + t) with integer halving;
//              each arm spans centres with |x − c| < 10.
//   oval       filled ellipse, column semi-axis 8, row semi-axis 8·ratio.
//   rectangle  |x − c| ≤ 7 on columns and |y − c| ≤ 7·ratio on rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pertucker/engine.hpp"
#include "pertucker/errors.hpp"
#include "pertucker/linalg.hpp"
#include "pertucker/random.hpp"
#include "pertucker/tensor.hpp"

namespace pertucker {

enum class PatternKind { Swiss, Oval, Rectangle };

inline const char* to_string(PatternKind k) {
  switch (k) {
    case PatternKind::Swiss: return "swiss";
    case PatternKind::Oval: return "oval";
    case PatternKind::Rectangle: return "rectangle";
  }
  return "?";
}

inline PatternKind parse_pattern_kind(const std::string& s) {
  if (s == "swiss") return PatternKind::Swiss;
  if (s == "oval") return PatternKind::Oval;
  if (s == "rectangle" || s == "rect") return PatternKind::Rectangle;
  throw ArgumentError("unknown pattern kind '" + s + "' (expected swiss, oval or rectangle)");
}

struct RatioRange {
  double lo;
  double hi;
};

/// Ratios the geometry accepts.
inline RatioRange valid_ratio_range(PatternKind k) {
  switch (k) {
    case PatternKind::Swiss: return {0.25, 2.5};
    case PatternKind::Oval: return {0.25, 3.0};
    case PatternKind::Rectangle: return {0.25, 3.5};
  }
  return {1.0, 1.0};
}

/// Ratios drawn uniformly for within-class variability when none are configured.
inline RatioRange default_ratio_range(PatternKind k) {
  switch (k) {
    case PatternKind::Swiss: return {0.7, 1.4};
    case PatternKind::Oval: return {0.5, 2.0};
    case PatternKind::Rectangle: return {0.5, 2.0};
  }
  return {1.0, 1.0};
}

struct PatternSpec {
  PatternKind kind = PatternKind::Swiss;
  double ratio = 1.0;
  std::size_t side = 50;
  double amplitude = 5.0;
};

inline void validate(const PatternSpec& p) {
  const RatioRange r = valid_ratio_range(p.kind);
  if (!(p.ratio >= r.lo && p.ratio <= r.hi)) {
    throw ArgumentError(std::string(to_string(p.kind)) + " ratio " + std::to_string(p.ratio) + " outside [" +
                        std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
  }
  detail::require(std::isfinite(p.amplitude) && p.amplitude > 0.0, "pattern amplitude must be positive");
  detail::require(p.side >= 4, "pattern side must be at least 4");
}

/// side × side image; support pixels carry `amplitude`, the rest are 0.
inline DenseTensor gen_pattern_image(const PatternSpec& p) {
  validate(p);
  const double scale = static_cast<double>(p.side) / 50.0;
  const double c = static_cast<double>(p.side) / 2.0;
  std::vector<double> img(p.side * p.side, 0.0);
  auto set = [&](std::size_t i, std::size_t j) { img[i + p.side * j] = p.amplitude; };

  switch (p.kind) {
    case PatternKind::Swiss: {
      const auto t = static_cast<long>(std::floor(8.0 * scale * p.ratio + 0.5));
      const long lo = static_cast<long>(c) - t / 2;
      const double arm = 10.0 * scale;
      auto in_band = [&](std::size_t v) { return static_cast<long>(v) >= lo && static_cast<long>(v) < lo + t; };
      auto in_arm = [&](std::size_t v) { return std::abs(static_cast<double>(v) + 0.5 - c) < arm; };
      for (std::size_t j = 0; j < p.side; ++j)
        for (std::size_t i = 0; i < p.side; ++i)
          if ((in_band(i) && in_arm(j)) || (in_band(j) && in_arm(i))) set(i, j);
      break;
    }
    case PatternKind::Oval: {
      const double bx = 8.0 * scale;
      const double by = 8.0 * scale * p.ratio;
      for (std::size_t j = 0; j < p.side; ++j) {
        for (std::size_t i = 0; i < p.side; ++i) {
          const double dx = (static_cast<double>(j) + 0.5 - c) / bx;
          const double dy = (static_cast<double>(i) + 0.5 - c) / by;
          if (dx * dx + dy * dy <= 1.0) set(i, j);
        }
      }
      break;
    }
    case PatternKind::Rectangle: {
      const double hw = 7.0 * scale;
      const double hh = 7.0 * scale * p.ratio;
      for (std::size_t j = 0; j < p.side; ++j)
        for (std::size_t i = 0; i < p.side; ++i)
          if (std::abs(static_cast<double>(j) + 0.5 - c) <= hw && std::abs(static_cast<double>(i) + 0.5 - c) <= hh)
            set(i, j);
      break;
    }
  }
  return DenseTensor({p.side, p.side}, std::move(img));
}

struct SourceSpec {
  PatternKind kind = PatternKind::Swiss;
  std::size_t samples = 10;
  std::optional<RatioRange> ratios;  // unset: default_ratio_range(kind)

  RatioRange ratio_range() const { return ratios ? *ratios : default_ratio_range(kind); }
};

struct SimConfig {
  std::vector<SourceSpec> sources{{PatternKind::Swiss, 10, {}}, {PatternKind::Oval, 10, {}},
                                  {PatternKind::Rectangle, 10, {}}};
  std::size_t side = 50;
  std::vector<std::size_t> global_ranks{5, 5};
  double global_core_std = 100.0;
  double noise_std = 1.0;
  double amplitude = 5.0;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> background_seed;  // global factors; unset: drawn from `seed`
};

inline void validate(const SimConfig& cfg) {
  using detail::require;
  require(!cfg.sources.empty(), "simulation needs at least one source");
  require(cfg.global_ranks.size() == 2, "pattern data has two image modes; global_ranks needs two entries");
  for (std::size_t g : cfg.global_ranks) require(g <= cfg.side, "global rank exceeds image side");
  require(std::isfinite(cfg.global_core_std) && cfg.global_core_std >= 0.0, "global_core_std must be >= 0");
  require(std::isfinite(cfg.noise_std) && cfg.noise_std >= 0.0, "noise_std must be >= 0");
  for (const auto& s : cfg.sources) {
    require(s.samples >= 1, "every source needs at least one sample");
    const RatioRange r = s.ratio_range();
    const RatioRange v = valid_ratio_range(s.kind);
    require(r.lo <= r.hi && r.lo >= v.lo && r.hi <= v.hi, std::string(to_string(s.kind)) + " ratio range invalid");
  }
  validate(PatternSpec{PatternKind::Swiss, 1.0, cfg.side, cfg.amplitude});
}

struct GroundTruth {
  std::vector<FactorMatrix> global_factors;
  std::vector<DenseTensor> global_parts;  // per source, side × side × s_n
  std::vector<DenseTensor> local_parts;   // per source pattern stack
  std::vector<std::vector<double>> ratios;
};

struct Dataset {
  std::vector<DenseTensor> data;
  GroundTruth truth;
};

inline std::vector<FactorMatrix> draw_global_factors(const SimConfig& cfg) {
  Rng rng(derive_seed(cfg.background_seed ? *cfg.background_seed : cfg.seed, 0));
  std::vector<FactorMatrix> out;
  for (std::size_t g : cfg.global_ranks) out.push_back(orthonormalize(gaussian_matrix(rng, cfg.side, g)));
  return out;
}

/// Y_n = C_{G,n} ×_0 U_0 ×_1 U_1 + pattern stack + noise. Source n draws from its
/// own stream (seed, n + 1) so datasets are reproducible and sources independent.
/// `factors` overrides the drawn global factors (e.g. to share a background
/// between training and test sets generated from different seeds).
inline Dataset gen_dataset(const SimConfig& cfg, const std::vector<FactorMatrix>* factors = nullptr) {
  validate(cfg);
  Dataset ds;
  ds.truth.global_factors = factors ? *factors : draw_global_factors(cfg);
  detail::require(ds.truth.global_factors.size() == 2, "pattern data needs two global factors");
  for (std::size_t k = 0; k < 2; ++k) {
    detail::require(ds.truth.global_factors[k].rows() == cfg.side, "global factor rows differ from image side");
  }
  const std::size_t side = cfg.side;
  for (std::size_t n = 0; n < cfg.sources.size(); ++n) {
    const SourceSpec& src = cfg.sources[n];
    Rng rng(derive_seed(cfg.seed, n + 1));
    const std::size_t s = src.samples;
    const DenseTensor core = gaussian_tensor(
        rng, {ds.truth.global_factors[0].rank(), ds.truth.global_factors[1].rank(), s}, cfg.global_core_std);
    DenseTensor global = expand_core(core, ds.truth.global_factors);

    const RatioRange range = src.ratio_range();
    std::uniform_real_distribution<double> ud(range.lo, range.hi);
    std::vector<double> local(side * side * s);
    std::vector<double> ratios;
    for (std::size_t i = 0; i < s; ++i) {
      const double ratio = range.lo == range.hi ? range.lo : ud(rng);
      ratios.push_back(ratio);
      const DenseTensor img = gen_pattern_image({src.kind, ratio, side, cfg.amplitude});
      std::copy(img.data().begin(), img.data().end(), local.begin() + static_cast<std::ptrdiff_t>(i * side * side));
    }
    DenseTensor local_t({side, side, s}, std::move(local));
    const DenseTensor noise = gaussian_tensor(rng, {side, side, s}, 1.0);
    ds.data.push_back(global + local_t + cfg.noise_std * noise);
    ds.truth.global_parts.push_back(std::move(global));
    ds.truth.local_parts.push_back(std::move(local_t));
    ds.truth.ratios.push_back(std::move(ratios));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Planted model: data generated exactly from known factors, no noise.

struct PlantedConfig {
  std::size_t sources = 5;
  Dims dims{12, 12, 12};
  std::size_t samples = 4;
  std::vector<std::size_t> global_ranks{2, 2, 2};
  std::vector<std::size_t> local_ranks{2, 2, 2};
  std::vector<std::size_t> ortho_modes{0, 1};
  double core_std = 1.0;
  std::uint64_t seed = 0;

  /// 5 sources of 50 × 50 × 50 × 10, all ranks 5, constrained modes {0, 1}.
  static PlantedConfig full_scale() {
    PlantedConfig c;
    c.dims = {50, 50, 50};
    c.samples = 10;
    c.global_ranks = {5, 5, 5};
    c.local_ranks = {5, 5, 5};
    return c;
  }
};

struct PlantedData {
  std::vector<DenseTensor> data;
  std::vector<FactorMatrix> global_factors;
  std::vector<std::vector<FactorMatrix>> local_factors;
  std::vector<DenseTensor> global_cores;
  std::vector<DenseTensor> local_cores;
};

inline void validate(const PlantedConfig& c) {
  using detail::require;
  require(c.sources >= 1 && c.samples >= 1, "planted: sources and samples must be positive");
  require(!c.dims.empty(), "planted: dims must be nonempty");
  require(c.global_ranks.size() == c.dims.size() && c.local_ranks.size() == c.dims.size(),
          "planted: one global and one local rank per mode");
  require(!c.ortho_modes.empty(), "planted: ortho_modes must be nonempty");
  for (std::size_t k : c.ortho_modes) {
    require(k < c.dims.size(), "planted: ortho mode out of range");
    require(c.global_ranks[k] + c.local_ranks[k] <= c.dims[k], "planted: infeasible ranks in ortho mode");
  }
  for (std::size_t k = 0; k < c.dims.size(); ++k) {
    require(c.global_ranks[k] <= c.dims[k] && c.local_ranks[k] <= c.dims[k], "planted: rank exceeds extent");
  }
}

/// Gaussian factors orthonormalized; constrained local factors are projected onto
/// the orthogonal complement of the global factor before orthonormalization.
inline PlantedData gen_planted(const PlantedConfig& c) {
  validate(c);
  PlantedData out;
  const std::size_t K = c.dims.size();
  Rng rng(derive_seed(c.seed, 0));
  for (std::size_t k = 0; k < K; ++k) out.global_factors.push_back(orthonormalize(gaussian_matrix(rng, c.dims[k], c.global_ranks[k])));
  auto ortho = [&](std::size_t k) { return std::find(c.ortho_modes.begin(), c.ortho_modes.end(), k) != c.ortho_modes.end(); };
  for (std::size_t n = 0; n < c.sources; ++n) {
    Rng r(derive_seed(c.seed, n + 1));
    std::vector<FactorMatrix> v;
    for (std::size_t k = 0; k < K; ++k) {
      Matrix m = gaussian_matrix(r, c.dims[k], c.local_ranks[k]);
      if (ortho(k)) {
        const Matrix& u = out.global_factors[k].matrix();
        m -= u * (u.transpose() * m);
      }
      v.push_back(orthonormalize(m));
    }
    Dims gdims(c.global_ranks.begin(), c.global_ranks.end());
    gdims.push_back(c.samples);
    Dims ldims(c.local_ranks.begin(), c.local_ranks.end());
    ldims.push_back(c.samples);
    DenseTensor gc = gaussian_tensor(r, gdims, c.core_std);
    DenseTensor lc = gaussian_tensor(r, ldims, c.core_std);
    out.data.push_back(expand_core(gc, out.global_factors) + expand_core(lc, v));
    out.global_cores.push_back(std::move(gc));
    out.local_cores.push_back(std::move(lc));
    out.local_factors.push_back(std::move(v));
  }
  return out;
}

/// The planted ground truth as a model (config echo from `c`).
inline PerTuckerModel planted_model(const PlantedData& p, const PlantedConfig& c) {
  PerTuckerModel m;
  m.global_factors = p.global_factors;
  m.config.global_ranks = c.global_ranks;
  m.config.local_ranks = {c.local_ranks};
  m.config.ortho_modes = c.ortho_modes;
  for (std::size_t n = 0; n < p.data.size(); ++n) {
    m.sources.push_back({p.local_factors[n], p.global_cores[n], p.local_cores[n]});
  }
  return m;
}

// ---------------------------------------------------------------------------
// Swiss-ratio grid: `bins` equal-width ratio bins over [lo, hi), each shared by
// `clients_per_bin` clients.

struct SwissGridConfig {
  std::size_t bins = 7;
  std::size_t clients_per_bin = 3;
  std::size_t samples = 30;
  double ratio_lo = 0.7;
  double ratio_hi = 1.4;
  SimConfig base;  // side, ranks, scales, seed; its source list is ignored
};

struct SwissGrid {
  Dataset dataset;
  std::vector<std::size_t> bin_of_client;
  std::vector<RatioRange> bin_ranges;
};

inline SwissGrid gen_swiss_grid(const SwissGridConfig& g) {
  detail::require(g.bins >= 1 && g.clients_per_bin >= 1 && g.samples >= 1, "swiss grid: counts must be positive");
  detail::require(g.ratio_lo < g.ratio_hi, "swiss grid: ratio_lo must be below ratio_hi");
  SwissGrid out;
  SimConfig cfg = g.base;
  cfg.sources.clear();
  const double width = (g.ratio_hi - g.ratio_lo) / static_cast<double>(g.bins);
  for (std::size_t b = 0; b < g.bins; ++b) {
    const RatioRange r{g.ratio_lo + width * static_cast<double>(b), g.ratio_lo + width * static_cast<double>(b + 1)};
    out.bin_ranges.push_back(r);
    for (std::size_t c = 0; c < g.clients_per_bin; ++c) {
      cfg.sources.push_back({PatternKind::Swiss, g.samples, r});
      out.bin_of_client.push_back(b);
    }
  }
  out.dataset = gen_dataset(cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Monitoring stream: single-sample frames of background + noise; frames from
// index `background` onward also carry a pattern.

struct StreamConfig {
  std::size_t background = 40;
  std::size_t injected = 10;
  PatternKind kind = PatternKind::Swiss;
  double ratio = 1.0;
  SimConfig base;  // side, ranks, scales, amplitude, seed
};

struct Stream {
  std::vector<DenseTensor> frames;  // each side × side × 1
  std::vector<bool> injected;
  std::vector<FactorMatrix> global_factors;
};

inline Stream gen_stream(const StreamConfig& s) {
  detail::require(s.background + s.injected >= 1, "stream needs at least one frame");
  SimConfig cfg = s.base;
  cfg.sources.assign(1, SourceSpec{s.kind, 1, RatioRange{s.ratio, s.ratio}});
  validate(cfg);
  validate(PatternSpec{s.kind, s.ratio, cfg.side, cfg.amplitude});
  Stream out;
  out.global_factors = draw_global_factors(cfg);
  const DenseTensor pattern = append_unit_mode(gen_pattern_image({s.kind, s.ratio, cfg.side, cfg.amplitude}));
  const std::size_t total = s.background + s.injected;
  for (std::size_t t = 0; t < total; ++t) {
    Rng rng(derive_seed(cfg.seed, t + 1));
    const DenseTensor core = gaussian_tensor(rng, {out.global_factors[0].rank(), out.global_factors[1].rank(), 1},
                                             cfg.global_core_std);
    DenseTensor frame = expand_core(core, out.global_factors) +
                        cfg.noise_std * gaussian_tensor(rng, {cfg.side, cfg.side, 1}, 1.0);
    const bool inj = t >= s.background;
    if (inj) frame = frame + pattern;
    out.frames.push_back(std::move(frame));
    out.injected.push_back(inj);
  }
  return out;
}

}  // namespace pertucker
