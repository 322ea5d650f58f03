#include "glip/plot.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace glip;
namespace fs = std::filesystem;

namespace {

LandmarkSet hinge(double dz) {
  LandmarkSet s;
  s.points = {{"RCC", Vec3(0, 0, dz)}, {"LCC", Vec3(10, 0, -dz)}, {"NCC", Vec3(0, 10, 0.5 * dz)}};
  return s;
}

EvalReport two_stage(const std::string& loss, double scale) {
  EvalReport r;
  for (int i = 0; i < 4; ++i) {
    const std::string id = "s" + std::to_string(i);
    r.records.push_back(make_record(id, QualityGrade::Q1, loss, 1, hinge(0), hinge(scale * (i + 1))));
    r.records.push_back(make_record(id, QualityGrade::Q1, loss, 2, hinge(0), hinge(0.5 * scale * (i + 1))));
  }
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("plots emit SVG files with the expected element counts") {
  const auto dir = fs::temp_directory_path() / "glip_unit_plots";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::vector<LabeledReport> reports{{"GLIP", two_stage("GLIP", 0.5)}, {"MSE", two_stage("MSE", 1.0)}};

  CHECK(plot_box(reports, dir / "box.svg") == 2 * 3);
  CHECK(plot_sdr(reports, dir / "sdr.svg") == 2 * 2);
  CHECK(plot_plane(reports[0].second.records[1], dir / "plane.svg") == 2 * 3);
  for (const char* f : {"box.svg", "sdr.svg", "plane.svg"}) {
    const auto text = slurp(dir / f);
    CHECK(text.rfind("<svg", 0) == 0);
    CHECK(text.find("</svg>") != std::string::npos);
  }
  CHECK(slurp(dir / "plane.svg").find("projected distance (mm)") != std::string::npos);
  CHECK_THROWS(plot_box({}, dir / "empty.svg"));
  CHECK_THROWS(plot_box({{"x", EvalReport{}}}, dir / "empty.svg"));
}
