#pragma once

// PTMC v1 model container.
//
//   bytes 0..3   magic "PTMC"
//   byte  4      version, must be 1
//   u64 LE       manifest length M
//   M bytes      manifest, UTF-8 JSON (keys sorted, no whitespace)
//   per entry, in manifest order:
//     u64 LE     payload length P
//     P bytes    one PTEN v1 tensor (matrices as 2-mode tensors)
//
// The manifest holds {"format","version","kind","meta","entries":[{"name","dims"}]}.
// No timestamps or host data are written, so equal models give equal bytes.

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "pertucker/applications.hpp"
#include "pertucker/engine.hpp"
#include "pertucker/errors.hpp"
#include "pertucker/pten.hpp"
#include "pertucker/tensor.hpp"

namespace pertucker {

namespace container {

using json = nlohmann::json;

inline constexpr std::array<std::uint8_t, 4> kMagic{0x50, 0x54, 0x4D, 0x43};
inline constexpr std::uint8_t kVersion = 1;

struct Container {
  std::string kind;
  json meta = json::object();
  std::vector<std::pair<std::string, DenseTensor>> entries;

  const DenseTensor& get(const std::string& name) const {
    for (const auto& [n, t] : entries) {
      if (n == name) return t;
    }
    throw FormatError("container: missing entry '" + name + "'");
  }
};

inline std::vector<std::uint8_t> encode(const Container& c) {
  json manifest{{"format", "PTMC"}, {"version", kVersion}, {"kind", c.kind}, {"meta", c.meta}};
  json entries = json::array();
  for (const auto& [name, t] : c.entries) entries.push_back({{"name", name}, {"dims", t.dims()}});
  manifest["entries"] = std::move(entries);
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  pten::detail::put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : c.entries) {
    const auto payload = pten::encode(t);
    pten::detail::put_u64(out, payload.size());
    out.insert(out.end(), payload.begin(), payload.end());
  }
  return out;
}

inline Container decode(std::span<const std::uint8_t> in) {
  if (in.size() < 5 || !std::equal(kMagic.begin(), kMagic.end(), in.begin())) throw FormatError("PTMC: bad magic");
  if (in[4] != kVersion) throw FormatError("PTMC: unsupported version " + std::to_string(in[4]));
  std::size_t pos = 5;
  const std::uint64_t mlen = pten::detail::get_u64(in, pos);
  if (mlen > in.size() - pos) throw FormatError("PTMC: truncated manifest");
  json manifest;
  try {
    manifest = json::parse(in.begin() + static_cast<std::ptrdiff_t>(pos),
                           in.begin() + static_cast<std::ptrdiff_t>(pos + mlen));
  } catch (const json::exception& e) {
    throw FormatError(std::string("PTMC: manifest is not valid JSON: ") + e.what());
  }
  pos += mlen;
  Container c;
  try {
    if (manifest.at("format") != "PTMC" || manifest.at("version") != kVersion) {
      throw FormatError("PTMC: manifest format/version mismatch");
    }
    c.kind = manifest.at("kind").get<std::string>();
    c.meta = manifest.at("meta");
    for (const auto& e : manifest.at("entries")) {
      const std::uint64_t plen = pten::detail::get_u64(in, pos);
      if (plen > in.size() - pos) throw FormatError("PTMC: truncated payload");
      DenseTensor t = pten::decode(in.subspan(pos, plen));
      pos += plen;
      if (t.dims() != e.at("dims").get<Dims>()) throw FormatError("PTMC: entry dims disagree with manifest");
      c.entries.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("PTMC: malformed manifest: ") + e.what());
  }
  if (pos != in.size()) throw FormatError("PTMC: trailing bytes");
  return c;
}

}  // namespace container

// ---------------------------------------------------------------------------
// FitConfig <-> JSON

inline nlohmann::json config_to_json(const FitConfig& c) {
  nlohmann::json j{{"global_ranks", c.global_ranks}, {"local_ranks", c.local_ranks},
                   {"ortho_modes", c.ortho_modes},   {"max_iters", c.max_iters},
                   {"stop_tol", c.stop_tol},         {"init", to_string(c.init)},
                   {"seed", c.seed}};
  j["rho"] = c.rho ? nlohmann::json(*c.rho) : nlohmann::json(nullptr);
  return j;
}

/// Strict: unknown keys are rejected. `threads` is a runtime knob and is not part
/// of the echo, but is accepted on input.
inline FitConfig config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{"global_ranks", "local_ranks", "ortho_modes", "rho", "max_iters",
                                              "stop_tol",     "init",        "seed",        "threads"};
  if (!j.is_object()) throw ArgumentError("fit config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ArgumentError("fit config: unknown key '" + key + "'");
    }
  }
  FitConfig c;
  auto field = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception&) {
      throw ArgumentError(std::string("fit config: bad value for '") + key + "'");
    }
  };
  if (!j.contains("global_ranks")) throw ArgumentError("fit config: missing key 'global_ranks'");
  if (!j.contains("local_ranks")) throw ArgumentError("fit config: missing key 'local_ranks'");
  if (!j.contains("ortho_modes")) throw ArgumentError("fit config: missing key 'ortho_modes'");
  field("global_ranks", c.global_ranks);
  if (j.at("local_ranks").is_array() && !j.at("local_ranks").empty() && j.at("local_ranks").front().is_number()) {
    std::vector<std::size_t> row;
    field("local_ranks", row);
    c.local_ranks = {row};
  } else {
    field("local_ranks", c.local_ranks);
  }
  field("ortho_modes", c.ortho_modes);
  field("max_iters", c.max_iters);
  field("stop_tol", c.stop_tol);
  field("seed", c.seed);
  field("threads", c.threads);
  if (j.contains("rho") && !j.at("rho").is_null()) {
    double rho = 0.0;
    field("rho", rho);
    c.rho = rho;
  }
  if (j.contains("init")) {
    std::string init;
    field("init", init);
    if (init == "tucker") c.init = InitMode::Tucker;
    else if (init == "random") c.init = InitMode::Random;
    else throw ArgumentError("fit config: bad value for 'init' (expected tucker or random)");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Models

inline container::Container to_container(const PerTuckerModel& m) {
  container::Container c;
  c.kind = "pertucker_model";
  c.meta = {{"config", config_to_json(m.config)}, {"modes", m.modes()}, {"sources", m.num_sources()}};
  for (std::size_t k = 0; k < m.modes(); ++k) {
    c.entries.emplace_back("global_factor/" + std::to_string(k), pten::from_matrix(m.global_factors[k].matrix()));
  }
  for (std::size_t n = 0; n < m.num_sources(); ++n) {
    const auto& s = m.sources[n];
    const std::string p = "source/" + std::to_string(n) + "/";
    for (std::size_t k = 0; k < s.local_factors.size(); ++k) {
      c.entries.emplace_back(p + "local_factor/" + std::to_string(k), pten::from_matrix(s.local_factors[k].matrix()));
    }
    c.entries.emplace_back(p + "global_core", s.global_core);
    c.entries.emplace_back(p + "local_core", s.local_core);
  }
  return c;
}

namespace detail {

inline FactorMatrix factor_entry(const container::Container& c, const std::string& name) {
  try {
    // Stored values round-trip exactly; the tolerance only guards against foreign files.
    return FactorMatrix(pten::to_matrix(c.get(name)), 1e-8);
  } catch (const ArgumentError& e) {
    throw FormatError("container entry '" + name + "': " + e.what());
  }
}

}  // namespace detail

inline PerTuckerModel model_from_container(const container::Container& c) {
  if (c.kind != "pertucker_model") throw FormatError("container holds '" + c.kind + "', expected pertucker_model");
  PerTuckerModel m;
  try {
    m.config = config_from_json(c.meta.at("config"));
    const auto K = c.meta.at("modes").get<std::size_t>();
    const auto N = c.meta.at("sources").get<std::size_t>();
    for (std::size_t k = 0; k < K; ++k) m.global_factors.push_back(detail::factor_entry(c, "global_factor/" + std::to_string(k)));
    for (std::size_t n = 0; n < N; ++n) {
      const std::string p = "source/" + std::to_string(n) + "/";
      SourceComponents s;
      for (std::size_t k = 0; k < K; ++k) s.local_factors.push_back(detail::factor_entry(c, p + "local_factor/" + std::to_string(k)));
      s.global_core = c.get(p + "global_core");
      s.local_core = c.get(p + "local_core");
      m.sources.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container metadata: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("container config: ") + e.what());
  }
  return m;
}

inline container::Container to_container(const ClassifierModel& m) {
  validate(m);
  container::Container c;
  c.kind = "classifier";
  c.meta = {{"labels", m.labels}, {"ambient", m.ambient}};
  for (std::size_t n = 0; n < m.num_classes(); ++n) {
    for (std::size_t k = 0; k < m.ambient.size(); ++k) {
      c.entries.emplace_back("class/" + std::to_string(n) + "/local_factor/" + std::to_string(k),
                             pten::from_matrix(m.local_factors[n][k].matrix()));
    }
  }
  return c;
}

inline ClassifierModel classifier_from_container(const container::Container& c) {
  if (c.kind == "pertucker_model") return classifier_from_model(model_from_container(c));
  if (c.kind != "classifier") throw FormatError("container holds '" + c.kind + "', expected classifier");
  ClassifierModel m;
  try {
    m.labels = c.meta.at("labels").get<std::vector<std::string>>();
    m.ambient = c.meta.at("ambient").get<Dims>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container metadata: ") + e.what());
  }
  for (std::size_t n = 0; n < m.labels.size(); ++n) {
    std::vector<FactorMatrix> fs;
    for (std::size_t k = 0; k < m.ambient.size(); ++k) {
      fs.push_back(detail::factor_entry(c, "class/" + std::to_string(n) + "/local_factor/" + std::to_string(k)));
    }
    m.local_factors.push_back(std::move(fs));
  }
  validate(m);
  return m;
}

inline void save_container(const std::string& path, const container::Container& c) {
  pten::write_bytes(path, container::encode(c));
}

inline container::Container load_container(const std::string& path) {
  const auto bytes = pten::read_bytes(path);
  try {
    return container::decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Trace CSV

/// iteration (1-based), objective, global_change (sum over modes),
/// global_change_k per mode, local_change_n_k per source and mode.
inline void write_trace_csv(std::ostream& os, const FitTrace& trace) {
  os.precision(17);
  os << "iteration,objective,global_change";
  const std::size_t K = trace.iterations.empty() ? 0 : trace.iterations.front().global_change.size();
  const std::size_t N = trace.iterations.empty() ? 0 : trace.iterations.front().local_change.size();
  for (std::size_t k = 0; k < K; ++k) os << ",global_change_" << k;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k) os << ",local_change_" << n << '_' << k;
  os << '\n';
  for (std::size_t t = 0; t < trace.iterations.size(); ++t) {
    const auto& it = trace.iterations[t];
    os << t + 1 << ',' << it.objective << ',' << it.global_total();
    for (double v : it.global_change) os << ',' << v;
    for (const auto& row : it.local_change)
      for (double v : row) os << ',' << v;
    os << '\n';
  }
}

}  // namespace pertucker
