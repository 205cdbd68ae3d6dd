// pertucker command-line front end.
//
// Exit codes: 0 success, 2 usage/config/input error, 3 numeric failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pertucker/applications.hpp"
#include "pertucker/bench.hpp"
#include "pertucker/container.hpp"
#include "pertucker/engine.hpp"
#include "pertucker/metrics.hpp"
#include "pertucker/pten.hpp"
#include "pertucker/simgen.hpp"
#include "pertucker/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pertucker;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

// ---------------------------------------------------------------------------
// Strict JSON reading: every key must be consumed, bad types name the key.

class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ArgumentError(where_ + ": expected a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!j_.contains(key)) {
      used_.push_back(key);
      return fallback;
    }
    return required<T>(key);
  }

  template <class T>
  T required(const std::string& key) {
    used_.push_back(key);
    if (!j_.contains(key)) throw ArgumentError(where_ + ": missing key '" + key + "'");
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ArgumentError(where_ + ": bad value for key '" + key + "'");
    }
  }

  const json& raw(const std::string& key) {
    used_.push_back(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(used_.begin(), used_.end(), key) == used_.end()) {
        throw ArgumentError(where_ + ": unknown key '" + key + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string> used_;
};

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ArgumentError("cannot open config file: " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ArgumentError(path + ": malformed JSON: " + e.what());
  }
}

void check_schema(Reader& r, const std::string& expected) {
  const auto schema = r.required<std::string>("schema");
  if (schema != expected) {
    throw ArgumentError("config key 'schema': expected \"" + expected + "\", got \"" + schema + "\"");
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw ArgumentError("cannot write file: " + p.string());
  f << text;
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

/// Resolves `p` against `base` unless it is absolute.
std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q.string() : (base / q).lexically_normal().string();
}

struct RunContext {
  std::string command;
  std::string config_path;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;
  fs::path out_dir;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void add_output(const fs::path& p) { outputs.push_back(fs::relative(p, out_dir).generic_string()); }

  void write_manifest() const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json m{{"schema", "pertucker.run/1"},    {"command", command},   {"config", config_path},
           {"inputs", inputs},               {"outputs", outputs},   {"version", kVersionString},
           {"duration_seconds", secs}};
    m["seed"] = seed ? json(*seed) : json(nullptr);
    write_text(out_dir / "run_manifest.json", pretty(m));
  }
};

std::size_t thread_count(std::size_t flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("PERTUCKER_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ArgumentError(std::string("PERTUCKER_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

fs::path ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ArgumentError("--out-dir is required");
  fs::create_directories(dir);
  return fs::path(dir);
}

// ---------------------------------------------------------------------------
// simulate

void read_base_sim(Reader& r, SimConfig& c) {
  c.side = r.get<std::size_t>("side", c.side);
  c.global_ranks = r.get<std::vector<std::size_t>>("global_ranks", c.global_ranks);
  c.global_core_std = r.get<double>("global_core_std", c.global_core_std);
  c.noise_std = r.get<double>("noise_std", c.noise_std);
  c.amplitude = r.get<double>("amplitude", c.amplitude);
  if (r.has("background_seed")) c.background_seed = r.required<std::uint64_t>("background_seed");
}

json base_sim_echo(const SimConfig& c) {
  json j{{"side", c.side},       {"global_ranks", c.global_ranks}, {"global_core_std", c.global_core_std},
         {"noise_std", c.noise_std}, {"amplitude", c.amplitude}};
  if (c.background_seed) j["background_seed"] = *c.background_seed;
  return j;
}

std::vector<SourceSpec> read_sources(const json& arr) {
  if (!arr.is_array() || arr.empty()) throw ArgumentError("config key 'sources': expected a nonempty array");
  std::vector<SourceSpec> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    Reader s(arr[i], "config key 'sources[" + std::to_string(i) + "]'");
    SourceSpec spec;
    spec.kind = parse_pattern_kind(s.required<std::string>("pattern"));
    spec.samples = s.get<std::size_t>("samples", spec.samples);
    if (s.has("ratio_range")) {
      const auto rr = s.required<std::vector<double>>("ratio_range");
      if (rr.size() != 2) throw ArgumentError("config key 'ratio_range': expected [lo, hi]");
      spec.ratios = RatioRange{rr[0], rr[1]};
    }
    s.finish();
    out.push_back(spec);
  }
  return out;
}

json sources_echo(const std::vector<SourceSpec>& ss) {
  json arr = json::array();
  for (const auto& s : ss) {
    const RatioRange r = s.ratio_range();
    arr.push_back({{"pattern", to_string(s.kind)}, {"samples", s.samples}, {"ratio_range", {r.lo, r.hi}}});
  }
  return arr;
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed_flag, const std::string& out) {
  RunContext ctx{"simulate", config_path};
  ctx.out_dir = ensure_dir(out);
  const json cfg = config_path.empty() ? json{{"schema", "pertucker.simulate/1"}} : read_json_file(config_path);
  Reader r(cfg, "config");
  check_schema(r, "pertucker.simulate/1");
  const std::string kind = r.get<std::string>("kind", "patterns");
  std::uint64_t seed = r.get<std::uint64_t>("seed", 0);
  if (seed_flag) seed = *seed_flag;
  ctx.seed = seed;

  const fs::path data_dir = ctx.out_dir / "data";
  const fs::path truth_dir = ctx.out_dir / "truth";
  fs::create_directories(data_dir);
  fs::create_directories(truth_dir);
  json manifest{{"schema", "pertucker.dataset/1"}, {"kind", kind}, {"seed", seed}};
  json files = json::array();
  json truth = json::object();
  auto put = [&](const fs::path& dir, const std::string& name, const DenseTensor& t) {
    const fs::path p = dir / name;
    pten::write_file(p.string(), t);
    ctx.add_output(p);
    return fs::relative(p, ctx.out_dir).generic_string();
  };
  auto put_pattern_truth = [&](const Dataset& ds) {
    json gf = json::array(), gp = json::array(), lp = json::array();
    for (std::size_t k = 0; k < ds.truth.global_factors.size(); ++k) {
      gf.push_back(put(truth_dir, "global_factor_" + std::to_string(k) + ".pten",
                       pten::from_matrix(ds.truth.global_factors[k].matrix())));
    }
    for (std::size_t n = 0; n < ds.data.size(); ++n) {
      files.push_back(put(data_dir, "source_" + std::to_string(n) + ".pten", ds.data[n]));
      gp.push_back(put(truth_dir, "global_part_" + std::to_string(n) + ".pten", ds.truth.global_parts[n]));
      lp.push_back(put(truth_dir, "local_part_" + std::to_string(n) + ".pten", ds.truth.local_parts[n]));
    }
    truth = {{"global_factors", gf}, {"global_parts", gp}, {"local_parts", lp}, {"ratios", ds.truth.ratios}};
  };

  if (kind == "patterns") {
    SimConfig c;
    read_base_sim(r, c);
    if (r.has("sources")) c.sources = read_sources(r.raw("sources"));
    r.finish();
    c.seed = seed;
    put_pattern_truth(gen_dataset(c));
    json echo = base_sim_echo(c);
    echo["sources"] = sources_echo(c.sources);
    manifest["config"] = echo;
  } else if (kind == "planted") {
    PlantedConfig c = r.get<bool>("full_scale", false) ? PlantedConfig::full_scale() : PlantedConfig{};
    c.sources = r.get<std::size_t>("sources", c.sources);
    c.dims = r.get<Dims>("dims", c.dims);
    c.samples = r.get<std::size_t>("samples", c.samples);
    c.global_ranks = r.get<std::vector<std::size_t>>("global_ranks", c.global_ranks);
    c.local_ranks = r.get<std::vector<std::size_t>>("local_ranks", c.local_ranks);
    c.ortho_modes = r.get<std::vector<std::size_t>>("ortho_modes", c.ortho_modes);
    c.core_std = r.get<double>("core_std", c.core_std);
    r.finish();
    c.seed = seed;
    const PlantedData p = gen_planted(c);
    json gf = json::array(), lf = json::array();
    for (std::size_t k = 0; k < p.global_factors.size(); ++k) {
      gf.push_back(put(truth_dir, "global_factor_" + std::to_string(k) + ".pten", pten::from_matrix(p.global_factors[k].matrix())));
    }
    for (std::size_t n = 0; n < p.data.size(); ++n) {
      files.push_back(put(data_dir, "source_" + std::to_string(n) + ".pten", p.data[n]));
      json row = json::array();
      for (std::size_t k = 0; k < p.local_factors[n].size(); ++k) {
        row.push_back(put(truth_dir, "local_factor_" + std::to_string(n) + "_" + std::to_string(k) + ".pten",
                          pten::from_matrix(p.local_factors[n][k].matrix())));
      }
      lf.push_back(row);
    }
    truth = {{"global_factors", gf}, {"local_factors", lf}};
    manifest["config"] = {{"sources", c.sources},           {"dims", c.dims},
                          {"samples", c.samples},           {"global_ranks", c.global_ranks},
                          {"local_ranks", c.local_ranks},   {"ortho_modes", c.ortho_modes},
                          {"core_std", c.core_std}};
  } else if (kind == "swiss_grid") {
    SwissGridConfig g;
    read_base_sim(r, g.base);
    g.bins = r.get<std::size_t>("bins", g.bins);
    g.clients_per_bin = r.get<std::size_t>("clients_per_bin", g.clients_per_bin);
    g.samples = r.get<std::size_t>("samples", g.samples);
    g.ratio_lo = r.get<double>("ratio_lo", g.ratio_lo);
    g.ratio_hi = r.get<double>("ratio_hi", g.ratio_hi);
    r.finish();
    g.base.seed = seed;
    const SwissGrid grid = gen_swiss_grid(g);
    put_pattern_truth(grid.dataset);
    truth["bin_of_client"] = grid.bin_of_client;
    json echo = base_sim_echo(g.base);
    echo.update({{"bins", g.bins}, {"clients_per_bin", g.clients_per_bin}, {"samples", g.samples},
                 {"ratio_lo", g.ratio_lo}, {"ratio_hi", g.ratio_hi}});
    manifest["config"] = echo;
  } else if (kind == "stream") {
    StreamConfig s;
    read_base_sim(r, s.base);
    s.background = r.get<std::size_t>("background", s.background);
    s.injected = r.get<std::size_t>("injected", s.injected);
    s.kind = parse_pattern_kind(r.get<std::string>("pattern", "swiss"));
    s.ratio = r.get<double>("ratio", s.ratio);
    r.finish();
    s.base.seed = seed;
    const Stream st = gen_stream(s);
    for (std::size_t t = 0; t < st.frames.size(); ++t) {
      files.push_back(put(data_dir, "frame_" + std::to_string(t) + ".pten", st.frames[t]));
    }
    json gf = json::array();
    for (std::size_t k = 0; k < st.global_factors.size(); ++k) {
      gf.push_back(put(truth_dir, "global_factor_" + std::to_string(k) + ".pten", pten::from_matrix(st.global_factors[k].matrix())));
    }
    std::vector<int> inj(st.injected.begin(), st.injected.end());
    truth = {{"global_factors", gf}, {"injected", inj}};
    json echo = base_sim_echo(s.base);
    echo.update({{"background", s.background}, {"injected", s.injected}, {"pattern", to_string(s.kind)}, {"ratio", s.ratio}});
    manifest["config"] = echo;
  } else {
    throw ArgumentError("config key 'kind': unknown dataset kind '" + kind +
                        "' (expected patterns, planted, swiss_grid or stream)");
  }
  manifest["inputs"] = files;
  manifest["truth"] = truth;
  write_text(ctx.out_dir / "dataset.json", pretty(manifest));
  ctx.add_output(ctx.out_dir / "dataset.json");
  ctx.write_manifest();
  std::cout << "wrote " << files.size() << " data files to " << (ctx.out_dir / "data").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Dataset manifests

struct DatasetRef {
  std::vector<std::string> inputs;
  std::vector<std::string> truth_global_factors;
};

DatasetRef read_dataset_manifest(const std::string& path) {
  const json m = read_json_file(path);
  const fs::path base = fs::path(path).parent_path();
  DatasetRef d;
  try {
    if (m.at("schema") != "pertucker.dataset/1") throw ArgumentError(path + ": not a pertucker.dataset/1 manifest");
    for (const auto& p : m.at("inputs")) d.inputs.push_back(resolve(base, p.get<std::string>()));
    if (m.contains("truth") && m.at("truth").contains("global_factors")) {
      for (const auto& p : m.at("truth").at("global_factors")) d.truth_global_factors.push_back(resolve(base, p.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ArgumentError(path + ": malformed dataset manifest: " + e.what());
  }
  return d;
}

std::vector<DenseTensor> load_inputs(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ArgumentError("no input tensors given");
  std::vector<DenseTensor> out;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw ArgumentError("input file not found: " + p);
    out.push_back(pten::read_file(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// fit

int cmd_fit(const std::string& config_path, std::optional<std::uint64_t> seed_flag, const std::string& out,
            std::vector<std::string> inputs, std::size_t threads) {
  if (config_path.empty()) throw ArgumentError("fit: --config is required");
  RunContext ctx{"fit", config_path};
  ctx.out_dir = ensure_dir(out);
  const json cfg = read_json_file(config_path);
  const fs::path base = fs::path(config_path).parent_path();
  Reader r(cfg, "config");
  check_schema(r, "pertucker.fit/1");
  FitConfig fc = config_from_json(r.required<json>("model"));
  std::vector<std::string> truth_paths;
  if (r.has("dataset")) {
    const DatasetRef d = read_dataset_manifest(resolve(base, r.required<std::string>("dataset")));
    if (inputs.empty()) inputs = d.inputs;
    truth_paths = d.truth_global_factors;
  }
  if (r.has("inputs")) {
    for (const auto& p : r.required<std::vector<std::string>>("inputs")) inputs.push_back(resolve(base, p));
  }
  r.finish();
  if (seed_flag) fc.seed = *seed_flag;
  fc.threads = thread_count(threads);
  ctx.seed = fc.seed;
  ctx.inputs = inputs;

  const auto data = load_inputs(inputs);
  const FitResult res = fit(data, fc);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";

  const fs::path model_path = ctx.out_dir / "model.ptmc";
  save_container(model_path.string(), to_container(res.model));
  ctx.add_output(model_path);
  std::ostringstream trace;
  write_trace_csv(trace, res.trace);
  write_text(ctx.out_dir / "trace.csv", trace.str());
  ctx.add_output(ctx.out_dir / "trace.csv");

  json summary{{"schema", "pertucker.fit_summary/1"},
               {"iterations", res.trace.iterations.size()},
               {"converged", res.trace.converged},
               {"objective", res.trace.iterations.empty() ? objective(res.model, data) : res.trace.iterations.back().objective},
               {"rho", *res.model.config.rho},
               {"warnings", res.warnings}};
  if (!truth_paths.empty()) {
    std::vector<FactorMatrix> truth;
    for (const auto& p : truth_paths) truth.push_back(FactorMatrix(pten::to_matrix(pten::read_file(p)), 1e-8));
    if (truth.size() != res.model.modes()) throw ArgumentError("ground-truth factor count does not match model modes");
    double mean = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) mean += subspace_error(truth[k], res.model.global_factors[k]);
    summary["global_subspace_error"] = mean / static_cast<double>(truth.size());
    summary["global_subspace_error_kron"] = normalized_subspace_error(truth, res.model.global_factors);
    std::cout << "global subspace error " << summary["global_subspace_error"].get<double>() << "\n";
  }
  write_text(ctx.out_dir / "fit_summary.json", pretty(summary));
  ctx.add_output(ctx.out_dir / "fit_summary.json");
  ctx.write_manifest();
  std::cout << "fit " << res.trace.iterations.size() << " iterations, objective "
            << summary["objective"].get<double>() << (res.trace.converged ? " (converged)" : "") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// classify

int cmd_classify(const std::string& model_path, const std::string& out, const std::vector<std::string>& inputs,
                 bool source_labels) {
  RunContext ctx{"classify", ""};
  ctx.out_dir = ensure_dir(out);
  ctx.inputs = inputs;
  ctx.inputs.insert(ctx.inputs.begin(), model_path);
  if (!fs::exists(model_path)) throw ArgumentError("model file not found: " + model_path);
  const ClassifierModel cm = classifier_from_container(load_container(model_path));
  const auto data = load_inputs(inputs);
  if (source_labels && data.size() != cm.num_classes()) {
    throw ArgumentError("--source-labels needs one input per class (" + std::to_string(cm.num_classes()) + ")");
  }
  std::ostringstream csv;
  csv.precision(17);
  csv << "input,sample,label,tie";
  for (const auto& l : cm.labels) csv << ",score_" << l;
  if (source_labels) csv << ",truth,correct";
  csv << '\n';
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto results = data[i].order() == cm.ambient.size() ? std::vector<ClassifyResult>{classify(cm, data[i])}
                                                              : classify_samples(cm, data[i]);
    for (std::size_t s = 0; s < results.size(); ++s) {
      const auto& res = results[s];
      csv << i << ',' << s << ',' << cm.labels[res.label] << ',' << (res.tie ? 1 : 0);
      for (double v : res.scores) csv << ',' << v;
      if (source_labels) {
        csv << ',' << cm.labels[i] << ',' << (res.label == i ? 1 : 0);
        correct += res.label == i;
      }
      ++total;
      csv << '\n';
    }
  }
  write_text(ctx.out_dir / "classify.csv", csv.str());
  ctx.add_output(ctx.out_dir / "classify.csv");
  if (source_labels) {
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    write_text(ctx.out_dir / "accuracy.json", pretty({{"correct", correct}, {"total", total}, {"accuracy", acc}}));
    ctx.add_output(ctx.out_dir / "accuracy.json");
    std::cout << "accuracy " << acc << " (" << correct << "/" << total << ")\n";
  } else {
    std::cout << "classified " << total << " samples\n";
  }
  ctx.write_manifest();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// monitor: one statistic per fitted source (e.g. one frame per source)

int cmd_monitor(const std::string& model_path, const std::string& config_path, const std::string& out) {
  RunContext ctx{"monitor", config_path};
  ctx.out_dir = ensure_dir(out);
  ctx.inputs = {model_path};
  std::size_t training = 0;
  ControlPolicy policy;
  if (!config_path.empty()) {
    const json cfg = read_json_file(config_path);
    Reader r(cfg, "config");
    check_schema(r, "pertucker.monitor/1");
    training = r.get<std::size_t>("training", 0);
    policy.sigmas = r.get<double>("sigmas", policy.sigmas);
    const auto scale = r.get<std::string>("scale", "raw");
    if (scale == "raw") policy.scale = LimitScale::Raw;
    else if (scale == "log") policy.scale = LimitScale::Log;
    else throw ArgumentError("config key 'scale': expected raw or log");
    r.finish();
  }
  if (!fs::exists(model_path)) throw ArgumentError("model file not found: " + model_path);
  const PerTuckerModel m = model_from_container(load_container(model_path));
  std::vector<double> stats;
  for (std::size_t n = 0; n < m.num_sources(); ++n) stats.push_back(monitor_statistic(m, n));
  if (training == 0) training = stats.size();
  if (training > stats.size()) throw ArgumentError("config key 'training': exceeds the number of sources");
  const MonitorConfig mc = fit_control_limit(std::span<const double>(stats).first(training), policy);
  std::ostringstream csv;
  csv.precision(17);
  csv << "index,statistic,control_limit,alarm,training\n";
  std::size_t alarms = 0;
  for (std::size_t n = 0; n < stats.size(); ++n) {
    const bool a = detect(mc, stats[n]);
    alarms += a;
    csv << n << ',' << stats[n] << ',' << mc.control_limit << ',' << (a ? 1 : 0) << ',' << (n < training ? 1 : 0) << '\n';
  }
  write_text(ctx.out_dir / "monitor.csv", csv.str());
  ctx.add_output(ctx.out_dir / "monitor.csv");
  write_text(ctx.out_dir / "control_limit.json",
             pretty({{"control_limit", mc.control_limit},
                     {"mean", mc.mean},
                     {"stddev", mc.stddev},
                     {"sigmas", mc.sigmas},
                     {"scale", mc.scale == LimitScale::Log ? "log" : "raw"},
                     {"training_count", mc.training_count}}));
  ctx.add_output(ctx.out_dir / "control_limit.json");
  ctx.write_manifest();
  std::cout << alarms << " alarms over " << stats.size() << " sources (limit " << mc.control_limit << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// cluster

int cmd_cluster(const std::string& model_path, const std::string& out, std::size_t clusters,
                std::optional<std::uint64_t> seed) {
  RunContext ctx{"cluster", ""};
  ctx.out_dir = ensure_dir(out);
  ctx.inputs = {model_path};
  ctx.seed = seed.value_or(0);
  if (!fs::exists(model_path)) throw ArgumentError("model file not found: " + model_path);
  const PerTuckerModel m = model_from_container(load_container(model_path));
  std::vector<std::vector<FactorMatrix>> clients;
  for (const auto& s : m.sources) clients.push_back(s.local_factors);
  const ClusterReport rep = cluster_clients(clients, clusters, *ctx.seed);
  std::ostringstream d, c;
  write_matrix_csv(d, rep.distances);
  write_cluster_csv(c, rep);
  write_text(ctx.out_dir / "distances.csv", d.str());
  write_text(ctx.out_dir / "clusters.csv", c.str());
  ctx.add_output(ctx.out_dir / "distances.csv");
  ctx.add_output(ctx.out_dir / "clusters.csv");
  ctx.write_manifest();
  std::cout << "clustered " << clients.size() << " clients into " << clusters << " groups\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// benchmarks

void read_bench_common(Reader& r, SimConfig& sim, FitConfig& fc) {
  read_base_sim(r, sim);
  if (r.has("sources")) sim.sources = read_sources(r.raw("sources"));
  if (r.has("model")) fc = config_from_json(r.raw("model"));
}

int cmd_bench_table1(const std::string& config_path, std::optional<std::uint64_t> seed, std::size_t repeats,
                     const std::string& out, std::size_t threads) {
  RunContext ctx{"bench-table1", config_path};
  ctx.out_dir = ensure_dir(out);
  Table1Config cfg;
  if (!config_path.empty()) {
    const json j = read_json_file(config_path);
    Reader r(j, "config");
    check_schema(r, "pertucker.bench_table1/1");
    read_bench_common(r, cfg.sim, cfg.fit);
    cfg.reference_samples = r.get<std::size_t>("reference_samples", cfg.reference_samples);
    cfg.repeats = r.get<std::size_t>("repeats", cfg.repeats);
    cfg.seed = r.get<std::uint64_t>("seed", cfg.seed);
    r.finish();
  }
  if (repeats > 0) cfg.repeats = repeats;
  if (seed) cfg.seed = *seed;
  cfg.threads = thread_count(threads);
  ctx.seed = cfg.seed;
  const Table1Result res = bench_table1(cfg);
  std::ostringstream runs, agg;
  write_eval_csv_header(runs);
  for (std::size_t i = 0; i < cfg.repeats; ++i) {
    write_eval_csv_row(runs, "perTucker", res.pertucker[i]);
    write_eval_csv_row(runs, "globalTucker", res.global_tucker[i]);
    write_eval_csv_row(runs, "localTucker", res.local_tucker[i]);
  }
  write_aggregate_csv(agg, res.rows);
  write_text(ctx.out_dir / "table1_runs.csv", runs.str());
  write_text(ctx.out_dir / "table1.csv", agg.str());
  ctx.add_output(ctx.out_dir / "table1_runs.csv");
  ctx.add_output(ctx.out_dir / "table1.csv");
  ctx.write_manifest();
  std::cout << agg.str();
  return kExitOk;
}

int cmd_bench_table2(const std::string& config_path, std::optional<std::uint64_t> seed, std::size_t repeats,
                     const std::string& out, std::size_t threads) {
  RunContext ctx{"bench-table2", config_path};
  ctx.out_dir = ensure_dir(out);
  Table2Config cfg;
  if (!config_path.empty()) {
    const json j = read_json_file(config_path);
    Reader r(j, "config");
    check_schema(r, "pertucker.bench_table2/1");
    read_bench_common(r, cfg.sim, cfg.fit);
    cfg.train_sizes = r.get<std::vector<std::size_t>>("train_sizes", cfg.train_sizes);
    cfg.test_per_class = r.get<std::size_t>("test_per_class", cfg.test_per_class);
    cfg.repeats = r.get<std::size_t>("repeats", cfg.repeats);
    cfg.seed = r.get<std::uint64_t>("seed", cfg.seed);
    r.finish();
  }
  if (repeats > 0) cfg.repeats = repeats;
  if (seed) cfg.seed = *seed;
  cfg.threads = thread_count(threads);
  ctx.seed = cfg.seed;
  const auto rows = bench_table2(cfg);
  std::ostringstream agg, runs;
  write_table2_csv(agg, rows);
  runs << "train_size,repeat,accuracy\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.accuracies.size(); ++i) runs << row.train_size << ',' << i << ',' << format_double(row.accuracies[i]) << '\n';
  }
  write_text(ctx.out_dir / "table2.csv", agg.str());
  write_text(ctx.out_dir / "table2_runs.csv", runs.str());
  ctx.add_output(ctx.out_dir / "table2.csv");
  ctx.add_output(ctx.out_dir / "table2_runs.csv");
  ctx.write_manifest();
  std::cout << agg.str();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// transform: generic preprocessing of a single PTEN file

DenseTensor subtract_sample_mean(const DenseTensor& x) {
  const std::size_t s = x.dims().back();
  const std::size_t per = x.size() / std::max<std::size_t>(s, 1);
  std::vector<double> mean(per, 0.0);
  for (std::size_t j = 0; j < s; ++j)
    for (std::size_t i = 0; i < per; ++i) mean[i] += x.data()[i + per * j];
  for (double& m : mean) m /= static_cast<double>(s);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t j = 0; j < s; ++j)
    for (std::size_t i = 0; i < per; ++i) out[i + per * j] -= mean[i];
  return DenseTensor(x.dims(), std::move(out));
}

/// (H, W, s) → (p, p, s·(H/p)·(W/p)); blocks ordered row-block fastest, then
/// column block, then sample.
DenseTensor to_patches(const DenseTensor& x, std::size_t p) {
  if (x.order() != 3) throw ArgumentError("patch: expected a 3-mode (H, W, samples) tensor");
  const std::size_t H = x.dim(0), W = x.dim(1), S = x.dim(2);
  if (p == 0 || H % p || W % p) throw ArgumentError("patch: image extents must be multiples of the patch size");
  const std::size_t bh = H / p, bw = W / p;
  std::vector<double> out(x.size());
  std::size_t idx = 0;
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t cb = 0; cb < bw; ++cb)
      for (std::size_t rb = 0; rb < bh; ++rb)
        for (std::size_t j = 0; j < p; ++j)
          for (std::size_t i = 0; i < p; ++i) out[idx++] = x.data()[(rb * p + i) + H * ((cb * p + j) + W * s)];
  return DenseTensor({p, p, S * bh * bw}, std::move(out));
}

int cmd_transform(const std::string& op, std::size_t patch, const std::string& in, const std::string& out) {
  if (!fs::exists(in)) throw ArgumentError("input file not found: " + in);
  const DenseTensor x = pten::read_file(in);
  DenseTensor y;
  if (op == "mean-subtract") y = subtract_sample_mean(x);
  else if (op == "patch") y = to_patches(x, patch);
  else throw ArgumentError("transform: unknown op '" + op + "' (expected mean-subtract or patch)");
  pten::write_file(out, y);
  std::cout << "wrote " << dims_to_string(y.dims()) << " to " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized Tucker decomposition toolkit"};
  app.set_version_flag("--version", std::string(kVersionString));
  app.require_subcommand(1);

  std::string config, out_dir, model;
  std::optional<std::uint64_t> seed;
  std::size_t repeats = 0, threads = 0, clusters = 3, patch = 8;
  std::vector<std::string> inputs;
  bool source_labels = false;
  std::string op, transform_in, transform_out;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out-dir", out_dir, "Output directory")->required();
  };

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim->add_option("--config", config, "Simulation config (pertucker.simulate/1)");
  sim->add_option("--seed", seed, "Override the config seed");
  add_common(sim);

  auto* fitc = app.add_subcommand("fit", "Fit a perTucker model");
  fitc->add_option("--config", config, "Fit config (pertucker.fit/1)")->required();
  fitc->add_option("--seed", seed, "Override the initialization seed");
  fitc->add_option("--threads", threads, "Worker threads (default: PERTUCKER_THREADS or 1)");
  fitc->add_option("inputs", inputs, "Input PTEN files, one per source");
  add_common(fitc);

  auto* cls = app.add_subcommand("classify", "Classify samples with a fitted model");
  cls->add_option("--model", model, "Model container")->required();
  cls->add_flag("--source-labels", source_labels, "Input i holds samples of class i; report accuracy");
  cls->add_option("inputs", inputs, "Input PTEN files")->required();
  add_common(cls);

  auto* mon = app.add_subcommand("monitor", "Per-source local-core statistics and alarms");
  mon->add_option("--model", model, "Model container")->required();
  mon->add_option("--config", config, "Monitor config (pertucker.monitor/1)");
  add_common(mon);

  auto* clu = app.add_subcommand("cluster", "Cluster sources by local-subspace distance");
  clu->add_option("--model", model, "Model container")->required();
  clu->add_option("--clusters", clusters, "Number of clusters");
  clu->add_option("--seed", seed, "k-means seed");
  add_common(clu);

  auto* b1 = app.add_subcommand("bench-table1", "Component-error benchmark");
  b1->add_option("--config", config, "Benchmark config (pertucker.bench_table1/1)");
  b1->add_option("--seed", seed, "Base seed");
  b1->add_option("--repeats", repeats, "Number of repeats");
  b1->add_option("--threads", threads, "Worker threads (default: PERTUCKER_THREADS or 1)");
  add_common(b1);

  auto* b2 = app.add_subcommand("bench-table2", "Classification-accuracy benchmark");
  b2->add_option("--config", config, "Benchmark config (pertucker.bench_table2/1)");
  b2->add_option("--seed", seed, "Base seed");
  b2->add_option("--repeats", repeats, "Number of repeats");
  b2->add_option("--threads", threads, "Worker threads (default: PERTUCKER_THREADS or 1)");
  add_common(b2);

  auto* tr = app.add_subcommand("transform", "Preprocess a PTEN tensor");
  tr->add_option("--op", op, "mean-subtract or patch")->required();
  tr->add_option("--patch", patch, "Patch side for --op patch");
  tr->add_option("input", transform_in, "Input PTEN file")->required();
  tr->add_option("output", transform_out, "Output PTEN file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(config, seed, out_dir);
    if (*fitc) return cmd_fit(config, seed, out_dir, inputs, threads);
    if (*cls) return cmd_classify(model, out_dir, inputs, source_labels);
    if (*mon) return cmd_monitor(model, config, out_dir);
    if (*clu) return cmd_cluster(model, out_dir, clusters, seed);
    if (*b1) return cmd_bench_table1(config, seed, repeats, out_dir, threads);
    if (*b2) return cmd_bench_table2(config, seed, repeats, out_dir, threads);
    if (*tr) return cmd_transform(op, patch, transform_in, transform_out);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DegenerateInputError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const StateError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
