#pragma once

// Benchmark harnesses: component-error comparison of perTucker against pooled
// and per-source Tucker on pattern data, and classification accuracy versus
// training-set size. Repeat r uses seed derive_seed(seed, r); repeats may run in
// parallel and results are stored by repeat index.

#include <cstdint>
#include <string>
#include <vector>

#include "pertucker/applications.hpp"
#include "pertucker/container.hpp"
#include "pertucker/engine.hpp"
#include "pertucker/metrics.hpp"
#include "pertucker/parallel.hpp"
#include "pertucker/simgen.hpp"
#include "pertucker/tucker.hpp"

namespace pertucker {

inline FitConfig default_pattern_fit_config(std::size_t local_rank) {
  FitConfig c;
  c.global_ranks = {5, 5};
  c.local_ranks = {{local_rank, local_rank}};
  c.ortho_modes = {0};
  c.max_iters = 100;
  return c;
}

struct Table1Config {
  SimConfig sim;
  FitConfig fit = default_pattern_fit_config(3);
  std::size_t repeats = 10;
  std::uint64_t seed = 0;
  std::size_t reference_samples = 100;
  std::size_t threads = 1;
};

struct Table1Result {
  std::vector<EvalReport> pertucker, global_tucker, local_tucker;  // one per repeat
  std::vector<AggregateRow> rows;
};

inline Table1Result bench_table1(const Table1Config& cfg) {
  detail::require(cfg.repeats >= 1, "bench_table1: repeats must be >= 1");
  detail::require(cfg.fit.local_ranks.size() == 1, "bench_table1: one local rank row shared by all sources");
  Table1Result out;
  out.pertucker.resize(cfg.repeats);
  out.global_tucker.resize(cfg.repeats);
  out.local_tucker.resize(cfg.repeats);
  const std::string hash = fnv1a_hex(config_to_json(cfg.fit).dump() + std::to_string(cfg.sim.sources.size()));
  const auto& lranks = cfg.fit.local_ranks.front();
  std::vector<std::size_t> combined;
  for (std::size_t k = 0; k < cfg.fit.global_ranks.size(); ++k) combined.push_back(cfg.fit.global_ranks[k] + lranks[k]);

  parallel_for(cfg.repeats, cfg.threads, [&](std::size_t r) {
    SimConfig sim = cfg.sim;
    sim.seed = derive_seed(cfg.seed, r);
    const Dataset ds = gen_dataset(sim);
    const TruthBundle truth = truth_bundle(ds.truth, reference_local_factors(sim, lranks, cfg.reference_samples));
    FitConfig fc = cfg.fit;
    fc.threads = 1;
    fc.seed = sim.seed;
    auto tag = [&](EvalReport e) {
      e.seed = sim.seed;
      e.config_hash = hash;
      return e;
    };
    out.pertucker[r] = tag(eval_against_truth(fit(ds.data, fc).model, truth));
    out.global_tucker[r] = tag(evaluate(estimate_from_global_tucker(global_tucker(ds.data, fc.global_ranks)), truth));
    // Per-source Tucker gets the combined global + local rank budget.
    out.local_tucker[r] = tag(evaluate(estimate_from_local_tucker(local_tucker(ds.data, combined)), truth));
  });
  for (const auto& [name, reps] : {std::pair{"perTucker", &out.pertucker}, std::pair{"globalTucker", &out.global_tucker},
                                   std::pair{"localTucker", &out.local_tucker}}) {
    auto rows = aggregate(name, *reps);
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
  }
  return out;
}

struct Table2Config {
  SimConfig sim;  // pattern classes; per-source sample counts are overridden
  FitConfig fit = default_pattern_fit_config(2);
  std::vector<std::size_t> train_sizes{10, 20, 30, 40, 50};
  std::size_t test_per_class = 50;
  std::size_t repeats = 20;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct Table2Row {
  std::size_t train_size = 0;
  std::vector<double> accuracies;  // per repeat
  MeanStd summary;
};

/// Per repeat: one background (global factors) shared by the training sets of
/// every size and by a held-out test set generated from its own seed.
inline std::vector<Table2Row> bench_table2(const Table2Config& cfg) {
  detail::require(cfg.repeats >= 1, "bench_table2: repeats must be >= 1");
  detail::require(!cfg.train_sizes.empty(), "bench_table2: no training sizes");
  detail::require(cfg.test_per_class >= 1, "bench_table2: test_per_class must be >= 1");
  const std::size_t S = cfg.train_sizes.size();
  std::vector<double> acc(cfg.repeats * S, 0.0);
  parallel_for(cfg.repeats * S, cfg.threads, [&](std::size_t idx) {
    const std::size_t r = idx / S;
    const std::size_t si = idx % S;
    SimConfig train = cfg.sim;
    train.seed = derive_seed(derive_seed(cfg.seed, r), 1 + si);
    for (auto& s : train.sources) s.samples = cfg.train_sizes[si];
    SimConfig base = cfg.sim;
    base.seed = derive_seed(cfg.seed, r);
    const std::vector<FactorMatrix> background = draw_global_factors(base);
    const Dataset tr = gen_dataset(train, &background);
    SimConfig test = base;
    test.seed = derive_seed(derive_seed(cfg.seed, r), 0);
    for (auto& s : test.sources) s.samples = cfg.test_per_class;
    const Dataset te = gen_dataset(test, &background);

    FitConfig fc = cfg.fit;
    fc.threads = 1;
    fc.seed = train.seed;
    const ClassifierModel cm = train_classifier(tr.data, fc);
    std::size_t correct = 0, total = 0;
    for (std::size_t n = 0; n < te.data.size(); ++n) {
      for (const auto& res : classify_samples(cm, te.data[n])) {
        correct += res.label == n;
        ++total;
      }
    }
    acc[idx] = static_cast<double>(correct) / static_cast<double>(total);
  });
  std::vector<Table2Row> rows;
  for (std::size_t si = 0; si < S; ++si) {
    Table2Row row;
    row.train_size = cfg.train_sizes[si];
    for (std::size_t r = 0; r < cfg.repeats; ++r) row.accuracies.push_back(acc[r * S + si]);
    row.summary = mean_std(row.accuracies);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_table2_csv(std::ostream& os, std::span<const Table2Row> rows) {
  os << "train_size,mean_accuracy,std_accuracy,repeats\n";
  for (const auto& r : rows) {
    os << r.train_size << ',' << format_double(r.summary.mean) << ',' << format_double(r.summary.stddev) << ','
       << r.summary.count << '\n';
  }
}

}  // namespace pertucker
