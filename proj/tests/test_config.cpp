#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "ru/config.hpp"
#include "ru/pipeline.hpp"

namespace {

using nlohmann::json;

json base() {
  return json::parse(R"({
    "name": "t",
    "market": {"d": 1, "n": 1, "alpha": [0.04], "sigma": [[0.2]], "s0": [1.0]},
    "utility": {"family": "crra:p=0.5"},
    "x0": 1.0,
    "grid": {"T": 1.0, "N": 16},
    "n_paths": 2000,
    "seed": 7
  })");
}

std::string field_of(const json& j) {
  try {
    ru::parse_config(j);
  } catch (const ru::ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

TEST(Config, MinimalConfigFillsDefaults) {
  const auto c = ru::parse_config(base());
  EXPECT_EQ(c.steps, 16u);
  EXPECT_EQ(c.threads, 0u);
  EXPECT_EQ(c.market.ellipticity_eps, 1e-8);
  ASSERT_EQ(c.stopping_rules.size(), 1u);
  EXPECT_EQ(ru::label(c.stopping_rules[0]), "deterministic(t=1)");
  EXPECT_EQ(c.perturbations.size(), ru::default_perturbations().size());
  EXPECT_EQ(c.epsilons, ru::default_epsilons());

  const auto echo = ru::to_json(c);
  EXPECT_EQ(echo["hedge"]["basis_order"], 2);
  EXPECT_EQ(echo["martingale_times"], 8);
  EXPECT_EQ(echo["output"]["dir"], "out");
  EXPECT_EQ(echo["perturbations"][0], "const(0.5)");
}

TEST(Config, UnknownKeysAreRejectedWithTheirPath) {
  auto j = base();
  j["n_path"] = 3;
  EXPECT_EQ(field_of(j), "n_path");
  j = base();
  j["market"]["drift"] = 1;
  EXPECT_EQ(field_of(j), "market.drift");
  j = base();
  j["stopping_rules"] = json::parse(R"([{"kind": "hitting", "asset": 0, "level": 1.1, "dir": "up"}])");
  EXPECT_EQ(field_of(j), "stopping_rules[0].dir");
}

TEST(Config, InvalidValuesNameTheField) {
  auto j = base();
  j["market"]["ellipticity_eps"] = -0.01;
  EXPECT_EQ(field_of(j), "market.ellipticity_eps");
  j = base();
  j["market"]["sigma"] = json::parse("[[0.0]]");
  EXPECT_EQ(field_of(j), "market.sigma");
  j = base();
  j["utility"]["family"] = "crra:p=2";
  EXPECT_EQ(field_of(j), "utility.family");
  j = base();
  j["x0"] = -1.0;
  EXPECT_EQ(field_of(j), "x0");
  j = base();
  j["grid"]["N"] = 2.5;
  EXPECT_EQ(field_of(j), "grid.N");
  j = base();
  j.erase("n_paths");
  EXPECT_EQ(field_of(j), "n_paths");
  j = base();
  j["perturbations"] = json::parse(R"([{"kind": "shift", "lag": 40}])");
  EXPECT_EQ(field_of(j), "perturbations");
}

TEST(Config, SyntaxErrorsReportPosition) {
  const auto path = std::filesystem::temp_directory_path() / "ru_bad_syntax.json";
  {
    std::ofstream os(path);
    os << "{\n  \"name\": \"x\",\n  \"x0\": 1.0,,\n}\n";
  }
  try {
    ru::load_config(path.string());
    FAIL();
  } catch (const ru::ConfigError& e) {
    EXPECT_EQ(e.field(), "<syntax>");
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
  EXPECT_THROW(ru::load_config("/nonexistent/ru.json"), ru::ConfigError);
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"log_merton", "crra_half", "exp_two_assets", "crra_piecewise"}) {
    const auto c = ru::load_config(std::string(RU_SOURCE_DIR) + "/configs/" + name + ".json");
    EXPECT_EQ(c.name, name);
  }
}

TEST(Stage, NamesRoundTrip) {
  for (auto s : {ru::Stage::Simulate, ru::Stage::Correct, ru::Stage::Hedge, ru::Stage::Verify, ru::Stage::Report})
    EXPECT_EQ(ru::parse_stage(ru::stage_name(s)), s);
  EXPECT_FALSE(ru::parse_stage("plot").has_value());
}

TEST(Pipeline, ReportIsReproducibleAcrossThreadCounts) {
  auto cfg = ru::parse_config(base());
  cfg.stopping_rules = {ru::Deterministic{1.0}, ru::Hitting{0, 1.1, ru::Direction::Up}};
  cfg.threads = 1;
  const auto a = ru::run_pipeline(cfg, ru::Stage::Report);
  cfg.threads = 4;
  const auto b = ru::run_pipeline(cfg, ru::Stage::Report);
  EXPECT_EQ(a.report.dump(2), b.report.dump(2));
  EXPECT_FALSE(a.checks.empty());
  EXPECT_TRUE(a.artifacts.empty());

  cfg.seed = 8;
  EXPECT_NE(ru::run_pipeline(cfg, ru::Stage::Report).report.dump(), a.report.dump());
}

TEST(Pipeline, StagesAreCumulative) {
  const auto cfg = ru::parse_config(base());
  const auto sim = ru::run_pipeline(cfg, ru::Stage::Simulate);
  EXPECT_TRUE(sim.report.contains("simulation"));
  EXPECT_FALSE(sim.report.contains("correction"));
  const auto hedge = ru::run_pipeline(cfg, ru::Stage::Hedge);
  EXPECT_TRUE(hedge.report.contains("correction"));
  EXPECT_TRUE(hedge.report.contains("hedge"));
  EXPECT_FALSE(hedge.report.contains("verification"));
}

TEST(Pipeline, CsvArtifactsAreWrittenOnRequest) {
  auto cfg = ru::parse_config(base());
  cfg.n_paths = 50;
  cfg.output.paths_csv = cfg.output.correction_csv = cfg.output.hedge_csv = true;
  const auto dir = std::filesystem::temp_directory_path() / "ru_pipeline_csv";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto r = ru::run_pipeline(cfg, ru::Stage::Hedge, dir.string());
  EXPECT_EQ(r.artifacts.size(), 3u);
  for (const auto& f : r.artifacts) EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::filesystem::remove_all(dir);
}

}  // namespace
