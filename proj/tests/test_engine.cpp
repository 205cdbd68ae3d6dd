#include <gtest/gtest.h>

#include <algorithm>

#include "oracles.hpp"
#include "pertucker/engine.hpp"
#include "pertucker/simgen.hpp"
#include "properties.hpp"

using namespace pertucker;

namespace {

FitConfig planted_fit_config(const PlantedConfig& pc) {
  FitConfig fc;
  fc.global_ranks = pc.global_ranks;
  fc.local_ranks = {pc.local_ranks};
  fc.ortho_modes = pc.ortho_modes;
  return fc;
}

double mean_global_error(const PerTuckerModel& m, const std::vector<FactorMatrix>& truth) {
  double s = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) s += subspace_error(m.global_factors[k], truth[k]);
  return s / static_cast<double>(truth.size());
}

bool bit_identical(const DenseTensor& a, const DenseTensor& b) {
  return a.dims() == b.dims() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

bool bit_identical(const PerTuckerModel& a, const PerTuckerModel& b) {
  if (a.global_factors != b.global_factors || a.sources.size() != b.sources.size()) return false;
  for (std::size_t n = 0; n < a.sources.size(); ++n) {
    if (a.sources[n].local_factors != b.sources[n].local_factors) return false;
    if (!bit_identical(a.sources[n].global_core, b.sources[n].global_core)) return false;
    if (!bit_identical(a.sources[n].local_core, b.sources[n].local_core)) return false;
  }
  return true;
}

}  // namespace

TEST(Objective, ZeroOnNoiselessPlantedModel) {
  PlantedConfig pc;
  pc.seed = 1;
  const PlantedData pd = gen_planted(pc);
  const PerTuckerModel m = planted_model(pd, pc);
  double total = 0.0;
  for (const auto& y : pd.data) total += squared_norm(y);
  EXPECT_LE(objective(m, pd.data), 1e-9 * total);
}

TEST(Objective, ZeroCoresGiveTotalEnergy) {
  PlantedConfig pc;
  pc.seed = 2;
  const PlantedData pd = gen_planted(pc);
  PerTuckerModel m = planted_model(pd, pc);
  double total = 0.0;
  for (std::size_t n = 0; n < m.num_sources(); ++n) {
    m.sources[n].global_core = DenseTensor(m.sources[n].global_core.dims());
    m.sources[n].local_core = DenseTensor(m.sources[n].local_core.dims());
    total += squared_norm(pd.data[n]);
  }
  EXPECT_NEAR(objective(m, pd.data), total, 1e-12 * total);
}

TEST(Objective, MatchesElementwiseOracle) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const props::Instance inst = props::random_instance(rng);
    double expected = 0.0;
    for (std::size_t n = 0; n < inst.data.size(); ++n) {
      const auto& src = inst.model.sources[n];
      const DenseTensor g = oracle::expand(src.global_core, props::matrices(inst.model.global_factors));
      const DenseTensor l = oracle::expand(src.local_core, props::matrices(src.local_factors));
      for (std::size_t i = 0; i < inst.data[n].size(); ++i) {
        const double d = inst.data[n].data()[i] - g.data()[i] - l.data()[i];
        expected += d * d;
      }
    }
    EXPECT_LE(props::rel(objective(inst.model, inst.data), expected), 1e-10);
  }
}

TEST(Objective, ShapeMismatch) {
  Rng rng(4);
  const props::Instance inst = props::random_instance(rng);
  const std::vector<DenseTensor> one{inst.data[0]};
  EXPECT_THROW(objective(inst.model, one), ArgumentError);
}

TEST(UpdateCores, ZeroDataGivesZeroCores) {
  Rng rng(5);
  props::Instance inst = props::random_instance(rng);
  std::vector<DenseTensor> zeros;
  for (const auto& y : inst.data) zeros.emplace_back(y.dims());
  const PerTuckerModel m = update_cores(inst.model, zeros);
  for (const auto& s : m.sources) {
    EXPECT_EQ(squared_norm(s.global_core), 0.0);
    EXPECT_EQ(squared_norm(s.local_core), 0.0);
  }
}

TEST(UpdateCores, MatchesStackedLeastSquaresOn444) {
  Rng rng(6);
  const Dims d{4, 4, 4, 3};
  FitConfig cfg;
  cfg.global_ranks = {2, 2, 2};
  cfg.local_ranks = {{2, 1, 2}};
  cfg.ortho_modes = {0, 2};
  cfg.init = InitMode::Random;
  cfg.seed = 4;
  const std::vector<DenseTensor> data{gaussian_tensor(rng, d), gaussian_tensor(rng, d)};
  const PerTuckerModel m = update_cores(init_model(data, cfg), data);
  for (std::size_t n = 0; n < 2; ++n) {
    const Matrix sol = oracle::stacked_core_solve(data[n], props::matrices(m.global_factors),
                                                  props::matrices(m.sources[n].local_factors));
    const auto& cg = m.sources[n].global_core;
    const auto& cl = m.sources[n].local_core;
    const Eigen::Index gsz = 8, lsz = 4;
    for (Eigen::Index s = 0; s < 3; ++s) {
      for (Eigen::Index i = 0; i < gsz; ++i) EXPECT_NEAR(cg.data()[s * gsz + i], sol(i, s), 1e-8);
      for (Eigen::Index i = 0; i < lsz; ++i) EXPECT_NEAR(cl.data()[s * lsz + i], sol(gsz + i, s), 1e-8);
    }
  }
}

TEST(UpdateCores, BeatsRandomCorePairs) {
  Rng rng(7);
  props::Instance inst = props::random_instance(rng);
  const PerTuckerModel m = update_cores(inst.model, inst.data);
  const double best = objective(m, inst.data);
  for (int c = 0; c < 100; ++c) {
    PerTuckerModel alt = m;
    for (auto& s : alt.sources) {
      s.global_core = s.global_core + 0.1 * gaussian_tensor(rng, s.global_core.dims());
      s.local_core = s.local_core + 0.1 * gaussian_tensor(rng, s.local_core.dims());
    }
    EXPECT_LE(best, objective(alt, inst.data) + 1e-10);
  }
}

TEST(UpdateCores, RejectsViolatedOrthogonality) {
  Rng rng(8);
  props::Instance inst = props::random_instance(rng);
  PerTuckerModel m = inst.model;
  const std::size_t k = m.config.ortho_modes[0];
  m.sources[0].local_factors[k] = FactorMatrix(m.global_factors[k].matrix().leftCols(1));
  EXPECT_THROW(update_cores(m, inst.data), StateError);
}

TEST(CoreProperties, RandomizedLeastSquaresOracle) {
  const props::Outcome o = props::cores_vs_least_squares(100, 9);
  EXPECT_TRUE(o.pass()) << o.worst;
}

TEST(UpdateGlobalFactor, HugeRhoKeepsSubspace) {
  Rng rng(10);
  for (int t = 0; t < 10; ++t) {
    const props::Instance inst = props::random_instance(rng);
    for (std::size_t k = 0; k < inst.model.modes(); ++k) {
      const FactorMatrix u = update_global_factor(inst.model, inst.data, k, 1e12);
      EXPECT_LE(subspace_error(u, inst.model.global_factors[k]), 1e-6);
    }
  }
}

TEST(UpdateGlobalFactor, SingleSourceSingleModeMatchesSvd) {
  Rng rng(11);
  const DenseTensor y = gaussian_tensor(rng, {7, 9});
  const std::vector<DenseTensor> data{y};
  FitConfig cfg;
  cfg.global_ranks = {3};
  cfg.local_ranks = {{0}};
  cfg.ortho_modes = {0};
  cfg.rho = 0.0;
  cfg.init = InitMode::Random;
  const PerTuckerModel m = init_model(data, cfg);
  const FactorMatrix u = update_global_factor(m, data, 0, 0.0);
  EXPECT_LE(subspace_error(u.matrix(), oracle::top_left_singular(unfold(y, 0), 3)), 1e-10);
}

TEST(UpdateGlobalFactor, RecoversPlantedSubspaceNoiseless) {
  PlantedConfig pc;
  pc.seed = 12;
  const PlantedData pd = gen_planted(pc);
  PerTuckerModel m = planted_model(pd, pc);
  Rng rng(13);
  for (std::size_t k = 0; k < 3; ++k) {
    PerTuckerModel start = m;
    start.global_factors[k] = FactorMatrix(oracle::random_orthonormal(rng, 12, 2));
    const FactorMatrix u = update_global_factor(start, pd.data, k, 0.0);
    EXPECT_LE(subspace_error(u, pd.global_factors[k]), 1e-6) << "mode " << k;
  }
}

TEST(UpdateGlobalFactor, ZeroGramReturnsCurrent) {
  Rng rng(14);
  const FactorMatrix u(oracle::random_orthonormal(rng, 5, 2));
  EXPECT_EQ(update_global_factor_from_gram(Matrix::Zero(5, 5), u, 1.0), u);
}

TEST(UpdateGlobalFactor, ProximalObjectiveDoesNotIncrease) {
  Rng rng(15);
  for (int t = 0; t < 50; ++t) {
    const props::Instance inst = props::random_instance(rng);
    const double rho = *inst.model.config.rho;
    for (std::size_t k = 0; k < inst.model.modes(); ++k) {
      const FactorMatrix& prev = inst.model.global_factors[k];
      const FactorMatrix next = update_global_factor(inst.model, inst.data, k, rho);
      const double before = global_factor_objective(inst.model, inst.data, k, prev, prev, rho);
      const double after = global_factor_objective(inst.model, inst.data, k, next, prev, rho);
      EXPECT_LE(after, before + 1e-8 * std::max(1.0, before));
    }
  }
}

TEST(GlobalProperties, BeatsRandomCompetitors) {
  const props::Outcome o = props::global_update_beats_competitors(100, 16);
  EXPECT_TRUE(o.pass()) << o.worst;
}

TEST(UpdateLocalFactor, FullyConstrainedComplement) {
  Rng rng(17);
  const Matrix u = oracle::random_orthonormal(rng, 5, 3);
  const FactorMatrix global(u);
  const FactorMatrix current(oracle::random_feasible(rng, u, 2));
  const Matrix gram = oracle::random_symmetric(rng, 5);
  const Matrix psd = gram * gram.transpose();
  const FactorMatrix v = update_local_factor_from_gram(psd, current, global, true, 0.3);
  const Matrix complement = Matrix::Identity(5, 5) - u * u.transpose();
  EXPECT_LE((v.projector() - complement).squaredNorm(), 1e-8);
}

TEST(UpdateLocalFactor, HooiStepEquivalence) {
  Rng rng(18);
  for (int t = 0; t < 20; ++t) {
    const DenseTensor y = gaussian_tensor(rng, {5, 4, 3, 2});
    const std::vector<DenseTensor> data{y};
    FitConfig cfg;
    cfg.global_ranks = {2, 1, 1};
    cfg.local_ranks = {{2, 2, 2}};
    cfg.ortho_modes = {0};
    cfg.init = InitMode::Random;
    cfg.seed = static_cast<std::uint64_t>(t);
    const PerTuckerModel m = init_model(data, cfg);
    const DenseTensor residual = y - global_reconstruction(m, 0);
    for (std::size_t k : {1u, 2u}) {
      const FactorMatrix v = update_local_factor(m, data, 0, k, 0.0);
      const FactorMatrix step =
          detail::leading_mode_subspace(project_except(residual, m.sources[0].local_factors, k), k, 2);
      EXPECT_LE(subspace_error(v, step), 1e-10);
    }
  }
}

TEST(LocalProperties, CompetitorsAndOrthogonality) {
  const props::Outcome a = props::local_update_beats_competitors(100, 19);
  EXPECT_TRUE(a.pass()) << a.worst;
  const props::Outcome b = props::local_update_orthogonality(100, 20);
  EXPECT_TRUE(b.pass()) << b.worst;
}

TEST(EngineProperties, NormAndOrthogonalityIdentities) {
  const props::Outcome a = props::min_to_max_identity(100, 21);
  EXPECT_TRUE(a.pass()) << a.worst;
  const props::Outcome b = props::component_orthogonality(100, 22);
  EXPECT_TRUE(b.pass()) << b.worst;
}

TEST(ValidateConfig, Errors) {
  const std::vector<DenseTensor> data{DenseTensor(Dims{5, 5, 2})};
  FitConfig cfg;
  cfg.global_ranks = {3, 3};
  cfg.local_ranks = {{3, 1}};
  cfg.ortho_modes = {0};
  EXPECT_THROW(validate_config(cfg, data), ArgumentError);  // 3 + 3 > 5 in mode 0
  cfg.local_ranks = {{2, 1}};
  EXPECT_EQ(validate_config(cfg, data).size(), 1u);        // single ortho mode warns
  cfg.ortho_modes = {0, 1};
  EXPECT_TRUE(validate_config(cfg, data).empty());
  cfg.ortho_modes = {};
  EXPECT_THROW(validate_config(cfg, data), ArgumentError);
  cfg.ortho_modes = {2};
  EXPECT_THROW(validate_config(cfg, data), ArgumentError);
  cfg.ortho_modes = {0, 0};
  EXPECT_THROW(validate_config(cfg, data), ArgumentError);
  cfg.ortho_modes = {0};
  cfg.rho = -1.0;
  EXPECT_THROW(validate_config(cfg, data), ArgumentError);
  cfg.rho.reset();
  cfg.global_ranks = {6, 1};
  EXPECT_THROW(validate_config(cfg, data), ArgumentError);
  cfg.global_ranks = {3, 3, 3};
  EXPECT_THROW(validate_config(cfg, data), ArgumentError);
  const std::vector<DenseTensor> mismatch{DenseTensor(Dims{5, 5, 2}), DenseTensor(Dims{5, 4, 2})};
  cfg.global_ranks = {1, 1};
  EXPECT_THROW(validate_config(cfg, mismatch), ArgumentError);
  EXPECT_THROW(validate_config(cfg, std::vector<DenseTensor>{}), ArgumentError);
}

TEST(DefaultRho, Formula) {
  const std::vector<DenseTensor> data{DenseTensor({2, 1}, {3, 4}), DenseTensor({2, 1}, {1, 0})};
  EXPECT_DOUBLE_EQ(default_rho(data), 0.1 * 25.0 / 2.0);
}

TEST(InitModel, SameSeedBitIdentical) {
  PlantedConfig pc;
  pc.seed = 23;
  const PlantedData pd = gen_planted(pc);
  FitConfig fc = planted_fit_config(pc);
  for (InitMode mode : {InitMode::Random, InitMode::Tucker}) {
    fc.init = mode;
    fc.seed = 99;
    EXPECT_TRUE(bit_identical(init_model(pd.data, fc), init_model(pd.data, fc)));
  }
  fc.init = InitMode::Random;
  const PerTuckerModel m = init_model(pd.data, fc);
  EXPECT_LE(orthogonality_violation(m), 1e-10);
  fc.seed = 100;
  EXPECT_FALSE(bit_identical(m, init_model(pd.data, fc)));
}

TEST(InitModel, TuckerStartNoWorseThanRandomMedian) {
  PlantedConfig pc;
  pc.seed = 24;
  const PlantedData pd = gen_planted(pc);
  FitConfig fc = planted_fit_config(pc);
  const double tucker = objective(init_model(pd.data, fc), pd.data);
  fc.init = InitMode::Random;
  std::vector<double> rnd;
  for (std::uint64_t s = 0; s < 10; ++s) {
    fc.seed = s;
    rnd.push_back(objective(init_model(pd.data, fc), pd.data));
  }
  std::nth_element(rnd.begin(), rnd.begin() + 5, rnd.end());
  EXPECT_LE(tucker, rnd[5]);
}

TEST(Fit, PlantedShrunkRecoversGlobalsWithin200) {
  PlantedConfig pc;
  pc.seed = 25;
  const PlantedData pd = gen_planted(pc);
  FitConfig fc = planted_fit_config(pc);
  fc.max_iters = 200;
  const FitResult r = fit(pd.data, fc);
  EXPECT_LE(r.trace.iterations.size(), 200u);
  EXPECT_LE(mean_global_error(r.model, pd.global_factors), 1e-3);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Fit, OrthogonalityHoldsEveryIteration) {
  PlantedConfig pc;
  pc.seed = 26;
  const PlantedData pd = gen_planted(pc);
  FitConfig fc = planted_fit_config(pc);
  fc.max_iters = 30;
  double worst = 0.0;
  std::size_t calls = 0;
  const FitResult r = fit(pd.data, fc, [&](std::size_t, const PerTuckerModel& m) {
    worst = std::max(worst, orthogonality_violation(m));
    ++calls;
  });
  EXPECT_LE(worst, 1e-8);
  EXPECT_EQ(calls, r.trace.iterations.size());
  for (const auto& rec : r.trace.iterations) {
    EXPECT_EQ(rec.global_change.size(), 3u);
    EXPECT_EQ(rec.local_change.size(), 5u);
  }
}

TEST(Fit, RankZeroLocalsReduceToHooi) {
  Rng rng(27);
  const std::vector<FactorMatrix> f{FactorMatrix(oracle::random_orthonormal(rng, 6, 2)),
                                    FactorMatrix(oracle::random_orthonormal(rng, 5, 2))};
  const DenseTensor y = expand_core(gaussian_tensor(rng, {2, 2, 4}, 5.0), f) + gaussian_tensor(rng, {6, 5, 4}, 0.1);
  const std::vector<DenseTensor> data{y};
  FitConfig fc;
  fc.global_ranks = {2, 2};
  fc.local_ranks = {{0, 0}};
  fc.ortho_modes = {0, 1};
  fc.rho = 0.0;
  fc.max_iters = 300;
  fc.stop_tol = 0.0;
  const FitResult r = fit(data, fc);
  const std::vector<std::size_t> ranks{2, 2};
  const double h = hooi(y, ranks, {500, 0.0}).errors.back();
  EXPECT_LE(std::abs(r.trace.iterations.back().objective - h) / std::max(1.0, h), 1e-8);
}

TEST(Fit, StopsOnTolerance) {
  PlantedConfig pc;
  pc.seed = 28;
  const PlantedData pd = gen_planted(pc);
  FitConfig fc = planted_fit_config(pc);
  fc.stop_tol = 1e-4;
  const FitResult r = fit(pd.data, fc);
  EXPECT_TRUE(r.trace.converged);
  EXPECT_LT(r.trace.iterations.back().total_change(), 1e-4);
  EXPECT_LT(r.trace.iterations.size(), fc.max_iters);
}

TEST(Fit, ThreadCountDoesNotChangeResult) {
  PlantedConfig pc;
  pc.seed = 29;
  const PlantedData pd = gen_planted(pc);
  FitConfig fc = planted_fit_config(pc);
  fc.max_iters = 15;
  const FitResult a = fit(pd.data, fc);
  fc.threads = 4;
  const FitResult b = fit(pd.data, fc);
  EXPECT_TRUE(bit_identical(a.model, b.model));
  for (std::size_t t = 0; t < a.trace.iterations.size(); ++t)
    EXPECT_EQ(a.trace.iterations[t].objective, b.trace.iterations[t].objective);
}

TEST(Fit, RejectsNonConformingData) {
  FitConfig fc;
  fc.global_ranks = {1};
  fc.local_ranks = {{1}};
  fc.ortho_modes = {0};
  const std::vector<DenseTensor> data{DenseTensor(Dims{3, 2, 2})};
  EXPECT_THROW(fit(data, fc), ArgumentError);
}
