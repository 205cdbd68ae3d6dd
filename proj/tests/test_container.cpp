#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "pertucker/pertucker.hpp"

using namespace pertucker;
namespace fs = std::filesystem;

namespace {

PerTuckerModel sample_model(std::uint64_t seed = 3) {
  PlantedConfig pc;
  pc.seed = seed;
  pc.sources = 2;
  pc.dims = {6, 5, 4};
  pc.samples = 3;
  pc.global_ranks = {2, 2, 1};
  pc.local_ranks = {1, 2, 1};
  const PlantedData pd = gen_planted(pc);
  PerTuckerModel m = planted_model(pd, pc);
  m.config.rho = 0.25;
  m.config.seed = 99;
  return m;
}

void expect_same_model(const PerTuckerModel& a, const PerTuckerModel& b) {
  ASSERT_EQ(a.modes(), b.modes());
  ASSERT_EQ(a.num_sources(), b.num_sources());
  for (std::size_t k = 0; k < a.modes(); ++k) EXPECT_EQ(a.global_factors[k].matrix(), b.global_factors[k].matrix());
  for (std::size_t n = 0; n < a.num_sources(); ++n) {
    for (std::size_t k = 0; k < a.modes(); ++k)
      EXPECT_EQ(a.sources[n].local_factors[k].matrix(), b.sources[n].local_factors[k].matrix());
    EXPECT_EQ(a.sources[n].global_core.dims(), b.sources[n].global_core.dims());
    EXPECT_EQ(squared_distance(a.sources[n].global_core, b.sources[n].global_core), 0.0);
    EXPECT_EQ(squared_distance(a.sources[n].local_core, b.sources[n].local_core), 0.0);
  }
  EXPECT_EQ(config_to_json(a.config), config_to_json(b.config));
}

}  // namespace

TEST(Container, ModelRoundTripIsExact) {
  const PerTuckerModel m = sample_model();
  const auto bytes = container::encode(to_container(m));
  expect_same_model(m, model_from_container(container::decode(bytes)));
}

TEST(Container, EncodingIsByteDeterministic) {
  EXPECT_EQ(container::encode(to_container(sample_model(4))), container::encode(to_container(sample_model(4))));
  EXPECT_NE(container::encode(to_container(sample_model(4))), container::encode(to_container(sample_model(5))));
}

TEST(Container, LayoutStartsWithMagicVersionAndManifest) {
  const auto bytes = container::encode(to_container(sample_model()));
  ASSERT_GT(bytes.size(), 13u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PTMC");
  EXPECT_EQ(bytes[4], 1);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[5 + i]) << (8 * i);
  const auto manifest = nlohmann::json::parse(bytes.begin() + 13, bytes.begin() + 13 + static_cast<std::ptrdiff_t>(len));
  EXPECT_EQ(manifest.at("kind"), "pertucker_model");
  EXPECT_EQ(manifest.at("entries").size(), 3u + 2u * (3u + 2u));
  EXPECT_EQ(manifest.at("entries")[0].at("name"), "global_factor/0");
  EXPECT_EQ(manifest.at("entries")[0].at("dims"), nlohmann::json::array({6, 2}));
  // The first payload is a PTEN record.
  EXPECT_EQ(std::string(bytes.begin() + 13 + static_cast<std::ptrdiff_t>(len) + 8,
                        bytes.begin() + 13 + static_cast<std::ptrdiff_t>(len) + 12),
            "PTEN");
}

TEST(Container, RejectsCorruption) {
  const auto good = container::encode(to_container(sample_model()));
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(container::decode(bad), FormatError);
  bad = good;
  bad[4] = 7;
  EXPECT_THROW(container::decode(bad), FormatError);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(container::decode(bad), FormatError);
  bad = good;
  bad.resize(bad.size() - 3);
  EXPECT_THROW(container::decode(bad), FormatError);
  bad = good;
  bad[13] = '#';  // first manifest byte
  EXPECT_THROW(container::decode(bad), FormatError);
  EXPECT_THROW(container::decode(std::vector<std::uint8_t>{}), FormatError);
}

TEST(Container, MissingEntryAndWrongKind) {
  auto c = to_container(sample_model());
  EXPECT_THROW(c.get("nope"), FormatError);
  auto dropped = c;
  dropped.entries.pop_back();
  EXPECT_THROW(model_from_container(container::decode(container::encode(dropped))), FormatError);
  auto other = c;
  other.kind = "something";
  EXPECT_THROW(model_from_container(other), FormatError);
  EXPECT_THROW(classifier_from_container(other), FormatError);
}

TEST(Container, NonOrthonormalFactorIsFormatError) {
  auto c = to_container(sample_model());
  auto& t = c.entries[0].second;
  std::vector<double> v(t.data().begin(), t.data().end());
  v[0] += 0.5;
  t = DenseTensor(t.dims(), v);
  EXPECT_THROW(model_from_container(c), FormatError);
}

TEST(Container, ClassifierRoundTrip) {
  const ClassifierModel cm = classifier_from_model(sample_model(), {"a", "b"});
  const ClassifierModel back = classifier_from_container(container::decode(container::encode(to_container(cm))));
  EXPECT_EQ(back.labels, cm.labels);
  EXPECT_EQ(back.ambient, cm.ambient);
  ASSERT_EQ(back.num_classes(), 2u);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(back.local_factors[n][k].matrix(), cm.local_factors[n][k].matrix());
  // A full model container also yields a classifier.
  const ClassifierModel from_model = classifier_from_container(to_container(sample_model()));
  EXPECT_EQ(from_model.num_classes(), 2u);
}

TEST(Container, FileRoundTrip) {
  const fs::path p = fs::temp_directory_path() / "pertucker_container_test.ptmc";
  const PerTuckerModel m = sample_model();
  save_container(p.string(), to_container(m));
  expect_same_model(m, model_from_container(load_container(p.string())));
  fs::remove(p);
  EXPECT_THROW(load_container(p.string()), ArgumentError);
}

TEST(ConfigJson, RoundTrip) {
  FitConfig c;
  c.global_ranks = {3, 4};
  c.local_ranks = {{1, 2}, {2, 1}};
  c.ortho_modes = {1};
  c.rho = 0.5;
  c.max_iters = 17;
  c.stop_tol = 1e-5;
  c.init = InitMode::Random;
  c.seed = 12;
  const FitConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(back.global_ranks, c.global_ranks);
  EXPECT_EQ(back.local_ranks, c.local_ranks);
  EXPECT_EQ(back.ortho_modes, c.ortho_modes);
  EXPECT_EQ(back.rho, c.rho);
  EXPECT_EQ(back.max_iters, 17u);
  EXPECT_EQ(back.stop_tol, 1e-5);
  EXPECT_EQ(back.init, InitMode::Random);
  EXPECT_EQ(back.seed, 12u);
}

TEST(ConfigJson, UnsetRhoIsNullAndThreadsOmitted) {
  FitConfig c;
  c.global_ranks = {1};
  c.local_ranks = {{1}};
  c.ortho_modes = {0};
  c.threads = 4;
  const auto j = config_to_json(c);
  EXPECT_TRUE(j.at("rho").is_null());
  EXPECT_FALSE(j.contains("threads"));
  EXPECT_FALSE(config_from_json(j).rho.has_value());
}

TEST(ConfigJson, FlatLocalRanksApplyToEverySource) {
  const auto c = config_from_json(nlohmann::json::parse(R"({"global_ranks":[2,2],"local_ranks":[1,3],"ortho_modes":[0]})"));
  ASSERT_EQ(c.local_ranks.size(), 1u);
  EXPECT_EQ(c.local_ranks_for(5), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(c.max_iters, 500u);
  EXPECT_EQ(c.stop_tol, 1e-8);
  EXPECT_EQ(c.init, InitMode::Tucker);
}

TEST(ConfigJson, StrictParsing) {
  auto parse = [](const char* s) { return config_from_json(nlohmann::json::parse(s)); };
  try {
    parse(R"({"global_ranks":[2],"local_ranks":[1],"ortho_modes":[0],"rhoo":1})");
    FAIL() << "expected ArgumentError";
  } catch (const ArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find("'rhoo'"), std::string::npos);
  }
  EXPECT_THROW(parse(R"({"local_ranks":[1],"ortho_modes":[0]})"), ArgumentError);
  EXPECT_THROW(parse(R"({"global_ranks":[2],"ortho_modes":[0]})"), ArgumentError);
  EXPECT_THROW(parse(R"({"global_ranks":[2],"local_ranks":[1]})"), ArgumentError);
  EXPECT_THROW(parse(R"({"global_ranks":[2],"local_ranks":[1],"ortho_modes":[0],"init":"hosvd"})"), ArgumentError);
  EXPECT_THROW(parse(R"({"global_ranks":"two","local_ranks":[1],"ortho_modes":[0]})"), ArgumentError);
  EXPECT_THROW(parse(R"([1,2])"), ArgumentError);
}

TEST(TraceCsv, HeaderAndRows) {
  FitTrace tr;
  IterationRecord a;
  a.objective = 2.5;
  a.global_change = {0.5, 0.25};
  a.local_change = {{1.0, 2.0}, {3.0, 4.0}};
  tr.iterations = {a, a};
  std::ostringstream os;
  write_trace_csv(os, tr);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line,
            "iteration,objective,global_change,global_change_0,global_change_1,local_change_0_0,local_change_0_1,"
            "local_change_1_0,local_change_1_1");
  std::getline(in, line);
  EXPECT_EQ(line, "1,2.5,0.75,0.5,0.25,1,2,3,4");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 2), "2,");
  EXPECT_FALSE(std::getline(in, line));
}
