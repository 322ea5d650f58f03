#include "glip/report.hpp"

#include "glip/util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace glip {

using nlohmann::json;

SampleRecord make_record(std::string sample_id, QualityGrade quality, std::string loss, int stage, LandmarkSet gt,
                         LandmarkSet pred, bool ambiguous) {
  SampleRecord r;
  r.sample_id = std::move(sample_id);
  r.quality = quality;
  r.loss = std::move(loss);
  r.stage = stage;
  r.errors = euclid_errors(gt, pred);
  r.dpp_mm = r.angle_deg = std::numeric_limits<double>::quiet_NaN();
  if (gt.size() == 3) {
    try {
      r.dpp_mm = avg_projection_distance(gt, pred);
      r.angle_deg = plane_angle(plane_from_landmarks(gt), plane_from_landmarks(pred));
    } catch (const std::domain_error&) {
    }
  }
  r.gt = std::move(gt);
  r.pred = std::move(pred);
  r.ambiguous = ambiguous;
  return r;
}

Summary summarize(const std::vector<double>& values) {
  std::vector<double> v;
  for (double x : values)
    if (std::isfinite(x)) v.push_back(x);
  Summary s;
  s.count = v.size();
  if (v.empty()) {
    s.q25 = s.median = s.q75 = s.worst = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.q25 = quantile(v, 0.25);
  s.median = quantile(v, 0.5);
  s.q75 = quantile(v, 0.75);
  s.worst = *std::max_element(v.begin(), v.end());
  return s;
}

std::string to_string(GroupKey key) {
  switch (key) {
    case GroupKey::Quality: return "quality";
    case GroupKey::Loss: return "loss";
    case GroupKey::Stage: return "stage";
  }
  return "?";
}

GroupKey parse_group_key(std::string_view text) {
  if (text == "quality") return GroupKey::Quality;
  if (text == "loss") return GroupKey::Loss;
  if (text == "stage") return GroupKey::Stage;
  throw std::invalid_argument(concat("unknown group key '", text, "' (expected quality, loss or stage)"));
}

std::vector<double> default_sdr_thresholds() { return {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 8.0}; }

std::vector<double> EvalReport::landmark_errors(const std::string& name) const {
  std::vector<double> out;
  for (const auto& r : records)
    for (const auto& e : r.errors)
      if (name.empty() || e.name == name) out.push_back(e.error_mm);
  return out;
}

std::vector<double> EvalReport::dpp_values() const {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.dpp_mm);
  return out;
}

std::vector<double> EvalReport::angle_values() const {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.angle_deg);
  return out;
}

std::vector<double> EvalReport::sdr_curve() const {
  const auto e = landmark_errors();
  if (e.empty()) return std::vector<double>(sdr_thresholds.size(), 0.0);
  return sdr(e, sdr_thresholds);
}

std::map<std::string, EvalReport> EvalReport::group_by(GroupKey key) const {
  std::map<std::string, EvalReport> out;
  for (const auto& r : records) {
    std::string k;
    switch (key) {
      case GroupKey::Quality: k = to_string(r.quality); break;
      case GroupKey::Loss: k = r.loss; break;
      case GroupKey::Stage: k = std::to_string(r.stage); break;
    }
    auto& g = out[k];
    g.sdr_thresholds = sdr_thresholds;
    g.records.push_back(r);
  }
  return out;
}

namespace {

json summary_json(const Summary& s) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"count", s.count}, {"q25", num(s.q25)}, {"median", num(s.median)}, {"q75", num(s.q75)}, {"worst", num(s.worst)}};
}

json landmarks_json(const LandmarkSet& set) {
  json j = json::object();
  for (const auto& l : set.points) j[l.name] = {l.position.x(), l.position.y(), l.position.z()};
  return j;
}

json ordered_names(const LandmarkSet& set) {
  json j = json::array();
  for (const auto& l : set.points) j.push_back(l.name);
  return j;
}

LandmarkSet landmarks_from_json(const json& j, const json& order) {
  LandmarkSet s;
  for (const auto& name : order) {
    const auto& p = j.at(name.get<std::string>());
    s.points.push_back({name.get<std::string>(), Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>())});
  }
  return s;
}

double number_or_nan(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

}  // namespace

json aggregates_json(const EvalReport& r) {
  json a;
  a["landmark_error_mm"] = summary_json(summarize(r.landmark_errors()));
  json per = json::object();
  if (!r.records.empty())
    for (const auto& l : r.records.front().gt.points) per[l.name] = summary_json(summarize(r.landmark_errors(l.name)));
  a["per_landmark_error_mm"] = per;
  a["dpp_mm"] = summary_json(summarize(r.dpp_values()));
  a["angle_deg"] = summary_json(summarize(r.angle_values()));
  a["sdr"] = r.sdr_curve();
  std::size_t ambiguous = 0;
  for (const auto& rec : r.records) ambiguous += rec.ambiguous;
  a["samples"] = r.records.size();
  a["ambiguous_samples"] = ambiguous;
  return a;
}

json EvalReport::to_json(const std::vector<GroupKey>& groups) const {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["sdr_thresholds_mm"] = sdr_thresholds;
  j["aggregates"] = aggregates_json(*this);
  json g = json::object();
  for (GroupKey key : groups) {
    json by = json::object();
    for (const auto& [k, sub] : group_by(key)) by[k] = aggregates_json(sub);
    g[to_string(key)] = by;
  }
  j["groups"] = g;
  json samples = json::array();
  for (const auto& r : records) {
    json s;
    s["sample_id"] = r.sample_id;
    s["quality"] = to_string(r.quality);
    s["loss"] = r.loss;
    s["stage"] = r.stage;
    s["landmark_order"] = ordered_names(r.gt);
    s["gt"] = landmarks_json(r.gt);
    s["pred"] = landmarks_json(r.pred);
    json e = json::object();
    for (const auto& le : r.errors) e[le.name] = le.error_mm;
    s["error_mm"] = e;
    s["dpp_mm"] = std::isfinite(r.dpp_mm) ? json(r.dpp_mm) : json(nullptr);
    s["angle_deg"] = std::isfinite(r.angle_deg) ? json(r.angle_deg) : json(nullptr);
    s["ambiguous"] = r.ambiguous;
    samples.push_back(s);
  }
  j["samples"] = samples;
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kReportSchemaVersion) throw std::runtime_error(concat("unsupported report schema_version ", version));
  EvalReport r;
  r.sdr_thresholds = j.at("sdr_thresholds_mm").get<std::vector<double>>();
  for (const auto& s : j.at("samples")) {
    SampleRecord rec;
    rec.sample_id = s.at("sample_id").get<std::string>();
    rec.quality = parse_quality(s.at("quality").get<std::string>());
    rec.loss = s.at("loss").get<std::string>();
    rec.stage = s.at("stage").get<int>();
    const auto& order = s.at("landmark_order");
    rec.gt = landmarks_from_json(s.at("gt"), order);
    rec.pred = landmarks_from_json(s.at("pred"), order);
    for (const auto& name : order)
      rec.errors.push_back({name.get<std::string>(), s.at("error_mm").at(name.get<std::string>()).get<double>()});
    rec.dpp_mm = number_or_nan(s.at("dpp_mm"));
    rec.angle_deg = number_or_nan(s.at("angle_deg"));
    rec.ambiguous = s.value("ambiguous", false);
    r.records.push_back(std::move(rec));
  }
  return r;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os << text;
    if (!os) throw std::runtime_error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "schema_version,sample_id,quality,loss,stage,landmark,error_mm,dpp_mm,angle_deg,gt_x,gt_y,gt_z,pred_x,pred_y,pred_z,"
        "ambiguous\n";
  for (const auto& r : records)
    for (std::size_t i = 0; i < r.errors.size(); ++i) {
      const auto& name = r.errors[i].name;
      const Vec3 g = r.gt.find(name)->position, p = r.pred.find(name)->position;
      os << kReportSchemaVersion << ',' << r.sample_id << ',' << to_string(r.quality) << ',' << r.loss << ',' << r.stage
         << ',' << name << ',' << r.errors[i].error_mm << ',' << r.dpp_mm << ',' << r.angle_deg << ',' << g.x() << ','
         << g.y() << ',' << g.z() << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << (r.ambiguous ? 1 : 0) << '\n';
    }
  write_text_atomic(path, os.str());
}

void EvalReport::write_json(const std::filesystem::path& path, const std::vector<GroupKey>& groups) const {
  write_text_atomic(path, to_json(groups).dump(2) + "\n");
}

EvalReport EvalReport::read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open report " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  // A run report.json embeds the evaluation under "test".
  if (!j.contains("samples") && j.contains("test")) return from_json(j.at("test"));
  return from_json(j);
}

}  // namespace glip
