#include "glip/config.hpp"
#include "glip/report.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace glip;
namespace fs = std::filesystem;

namespace {

LandmarkSet triple(double dz) {
  LandmarkSet s;
  s.points = {{"RCC", Vec3(0, 0, dz)}, {"LCC", Vec3(10, 0, 0)}, {"NCC", Vec3(0, 10, 0)}};
  return s;
}

EvalReport sample_report() {
  EvalReport r;
  r.records.push_back(make_record("a", QualityGrade::Q1, "GLIP", 1, triple(0), triple(1)));
  r.records.push_back(make_record("b", QualityGrade::Q4, "GLIP", 1, triple(0), triple(2), true));
  r.records.push_back(make_record("c", QualityGrade::Q4, "MSE", 2, triple(0), triple(0.5)));
  return r;
}

}  // namespace

TEST_CASE("records carry errors, plane metrics and summaries") {
  const auto r = sample_report();
  CHECK(r.records[0].errors[0].error_mm == 1.0);
  CHECK(r.records[0].errors[1].error_mm == 0.0);
  CHECK(r.records[0].dpp_mm > 0.0);
  CHECK(r.landmark_errors().size() == 9);
  CHECK(r.landmark_errors("RCC") == std::vector<double>{1.0, 2.0, 0.5});
  const auto s = summarize({1, 2, 3, 4, std::nan("")});
  CHECK(s.count == 4);
  CHECK(s.median == 2.5);
  CHECK(s.worst == 4.0);
  LandmarkSet line;
  line.points = {{"RCC", Vec3(0, 0, 0)}, {"LCC", Vec3(1, 0, 0)}, {"NCC", Vec3(2, 0, 0)}};
  CHECK(std::isnan(make_record("d", QualityGrade::Q1, "GLIP", 1, triple(0), line).dpp_mm));
}

TEST_CASE("grouping by quality, loss and stage") {
  const auto r = sample_report();
  const auto q = r.group_by(GroupKey::Quality);
  CHECK(q.size() == 2);
  CHECK(q.at(to_string(QualityGrade::Q4)).records.size() == 2);
  CHECK(r.group_by(GroupKey::Loss).at("MSE").records.size() == 1);
  CHECK(r.group_by(GroupKey::Stage).at("2").records.size() == 1);
  CHECK(parse_group_key("quality") == GroupKey::Quality);
  CHECK_THROWS_AS(parse_group_key("colour"), std::invalid_argument);
}

TEST_CASE("reports round-trip through JSON and write CSV with a schema column") {
  const auto dir = fs::temp_directory_path() / "glip_unit_report";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto r = sample_report();
  r.write_json(dir / "r.json", {GroupKey::Quality});
  const auto back = EvalReport::read_json(dir / "r.json");
  REQUIRE(back.records.size() == 3);
  CHECK(back.records[1].ambiguous);
  CHECK(back.records[2].stage == 2);
  CHECK(back.landmark_errors() == r.landmark_errors());
  CHECK(back.records[0].dpp_mm == r.records[0].dpp_mm);
  CHECK(back.sdr_curve() == r.sdr_curve());

  r.write_csv(dir / "r.csv");
  std::ifstream is(dir / "r.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header.rfind("schema_version,sample_id", 0) == 0);
  int rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  CHECK(rows == 9);
}

TEST_CASE("config round-trips and hashes stably") {
  RunConfig c;
  c.loss.kind = LossKind::Mse;
  c.loss.add_grid_penalty = true;
  c.sigma_grid = {1, 2};
  c.patch.patch_size = 16;
  c.inference.decode = DecodeRule::Centroid;
  c.inference.ensemble = EnsembleRule::CoordinateMean;
  const auto back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());
  RunConfig d = c;
  d.epochs += 1;
  CHECK(d.hash() != c.hash());
  CHECK(c.hash().size() == 16);
}

TEST_CASE("config errors are reported all at once") {
  nlohmann::json j = {{"training", {{"epochs", 0}, {"folds", "four"}}},
                      {"network", {{"depth", 0}, {"width", 3}}},
                      {"loss", {{"kind", "nope"}}},
                      {"inference", {{"decode", "mean"}, {"ensemble", "vote"}}},
                      {"extra", 1}};
  try {
    RunConfig::from_json(j);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    const auto& p = e.problems();
    CHECK(p.size() >= 6);
    auto has = [&](const std::string& needle) {
      for (const auto& s : p)
        if (s.find(needle) != std::string::npos) return true;
      return false;
    };
    CHECK(has("training.folds"));
    CHECK(has("training.epochs"));
    CHECK(has("network.depth"));
    CHECK(has("'width'"));
    CHECK(has("loss.kind"));
    CHECK(has("'extra'"));
    CHECK(has("inference.decode"));
    CHECK(has("inference.ensemble"));
  }
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("phantom section parses with defaults and strict keys") {
  const auto c = phantom_config_from_json({{"phantom", {{"count", 12}, {"spacing", {1.0, 1.0, 1.0}}}}});
  CHECK(c.count == 12);
  CHECK(c.spacing == Vec3::Ones());
  CHECK(c.shape == PhantomConfig{}.shape);
  CHECK_THROWS_AS(phantom_config_from_json({{"phantom", {{"count", 0}, {"colour", 1}}}}), ConfigError);
  CHECK(phantom_config_from_json(phantom_config_json(c)).count == PhantomConfig{}.count);
  CHECK(phantom_config_from_json({{"phantom", phantom_config_json(c)}}).count == 12);
}
