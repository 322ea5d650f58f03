#pragma once

#include "glip/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace glip {

inline constexpr int kReportSchemaVersion = 1;

struct SampleRecord {
  std::string sample_id;
  QualityGrade quality = QualityGrade::Q3Plus;
  std::string loss;
  int stage = 1;
  LandmarkSet gt;
  LandmarkSet pred;
  std::vector<LandmarkError> errors;
  /// NaN when either triple is degenerate.
  double dpp_mm = 0.0;
  double angle_deg = 0.0;
  bool ambiguous = false;
};

/// Fills errors, d^PP and the plane angle from gt and pred.
SampleRecord make_record(std::string sample_id, QualityGrade quality, std::string loss, int stage, LandmarkSet gt,
                         LandmarkSet pred, bool ambiguous = false);

struct Summary {
  std::size_t count = 0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double worst = 0.0;
};

/// Quartiles and maximum over the finite entries.
Summary summarize(const std::vector<double>& values);

enum class GroupKey { Quality, Loss, Stage };
std::string to_string(GroupKey key);
GroupKey parse_group_key(std::string_view text);

std::vector<double> default_sdr_thresholds();

struct EvalReport {
  std::vector<double> sdr_thresholds = default_sdr_thresholds();
  std::vector<SampleRecord> records;

  /// All per-landmark errors, optionally for one landmark name.
  std::vector<double> landmark_errors(const std::string& name = {}) const;
  std::vector<double> dpp_values() const;
  std::vector<double> angle_values() const;
  std::vector<double> sdr_curve() const;

  std::map<std::string, EvalReport> group_by(GroupKey key) const;

  /// Aggregates, optional group aggregates and per-sample records.
  nlohmann::json to_json(const std::vector<GroupKey>& groups = {}) const;
  static EvalReport from_json(const nlohmann::json& j);

  /// One row per sample per landmark.
  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path, const std::vector<GroupKey>& groups = {}) const;
  static EvalReport read_json(const std::filesystem::path& path);
};

nlohmann::json aggregates_json(const EvalReport& r);

/// Writes text to `path` via a temporary file and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace glip
