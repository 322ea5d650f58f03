#pragma once

#include "glip/report.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace glip {

using LabeledReport = std::pair<std::string, EvalReport>;

/// One box per (report, landmark): quartile box, median bar, whiskers to the
/// extremes. Returns the number of boxes drawn.
int plot_box(const std::vector<LabeledReport>& reports, const std::filesystem::path& out_svg);

/// SDR curves, one per (report, stage). Returns the number of curves.
int plot_sdr(const std::vector<LabeledReport>& reports, const std::filesystem::path& out_svg);

/// Two panels for one sample: predicted points projected into the
/// ground-truth plane and vice versa, each point annotated with its
/// point-to-plane distance. Returns the number of distance annotations.
int plot_plane(const SampleRecord& record, const std::filesystem::path& out_svg);

}  // namespace glip
