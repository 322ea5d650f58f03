#include "glip/plot.hpp"

#include "glip/util.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace glip {

namespace {

const std::vector<std::string> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string num(double v, int precision = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Svg {
 public:
  Svg(int w, int h) : w_(w), h_(h) {}

  void line(double x1, double y1, double x2, double y2, const std::string& color, double width = 1.0,
            const std::string& dash = "") {
    os_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
        << "\" stroke=\"" << color << "\" stroke-width=\"" << num(width) << "\"";
    if (!dash.empty()) os_ << " stroke-dasharray=\"" << dash << "\"";
    os_ << "/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& stroke) {
    os_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" fill=\"" << fill << "\" fill-opacity=\"0.35\" stroke=\"" << stroke << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& color, bool filled = true) {
    os_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" fill=\""
        << (filled ? color : "none") << "\" stroke=\"" << color << "\"/>\n";
  }
  void cross(double x, double y, double r, const std::string& color) {
    line(x - r, y - r, x + r, y + r, color, 1.5);
    line(x - r, y + r, x + r, y - r, color, 1.5);
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color, const std::string& dash = "") {
    os_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"";
    if (!dash.empty()) os_ << " stroke-dasharray=\"" << dash << "\"";
    os_ << " points=\"";
    for (const auto& [x, y] : pts) os_ << num(x) << "," << num(y) << " ";
    os_ << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12, const std::string& anchor = "middle",
            const std::string& color = "#000", double rotate = 0.0) {
    os_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\" font-size=\"" << size
        << "\" text-anchor=\"" << anchor << "\" fill=\"" << color << "\"";
    if (rotate != 0.0) os_ << " transform=\"rotate(" << num(rotate) << " " << num(x) << " " << num(y) << ")\"";
    os_ << ">" << escape(s) << "</text>\n";
  }
  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 " << w_
        << " " << h_ << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << os_.str() << "</svg>\n";
    return out.str();
  }

 private:
  int w_, h_;
  std::ostringstream os_;
};

struct Axis {
  double lo, hi, px_lo, px_hi;
  double map(double v) const { return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo); }
};

double nice_step(double range) {
  const double raw = range / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

void y_axis(Svg& svg, const Axis& ax, double x, double x_end, const std::string& label) {
  const double step = nice_step(ax.hi - ax.lo);
  for (double t = std::ceil(ax.lo / step) * step; t <= ax.hi + 1e-9; t += step) {
    const double y = ax.map(t);
    svg.line(x, y, x_end, y, "#ddd");
    svg.text(x - 6, y + 4, num(t, step < 1 ? 2 : 0), 11, "end");
  }
  svg.line(x, ax.px_lo, x, ax.px_hi, "#000");
  svg.text(x - 45, (ax.px_lo + ax.px_hi) / 2, label, 12, "middle", "#000", -90);
}

}  // namespace

int plot_box(const std::vector<LabeledReport>& reports, const std::filesystem::path& out_svg) {
  if (reports.empty()) throw std::invalid_argument("plot_box: no reports");
  std::vector<std::string> names;
  for (const auto& [label, r] : reports)
    if (!r.records.empty()) {
      names = r.records.front().gt.names();
      break;
    }
  if (names.empty()) throw std::invalid_argument("plot_box: reports are empty");

  double hi = 0.0;
  for (const auto& [label, r] : reports)
    for (double e : r.landmark_errors()) hi = std::max(hi, e);
  hi = hi > 0.0 ? hi * 1.05 : 1.0;

  const int n_boxes = static_cast<int>(reports.size() * names.size());
  const int width = std::max(420, 110 + n_boxes * 40 + static_cast<int>(reports.size()) * 20);
  Svg svg(width, 400);
  const Axis ay{0.0, hi, 340.0, 40.0};
  y_axis(svg, ay, 70, width - 20, "Euclid distance error (mm)");
  svg.text(width / 2.0, 22, "Test landmark error", 14);

  int drawn = 0;
  double x = 90.0;
  for (const auto& [label, r] : reports) {
    const double group_start = x;
    for (std::size_t li = 0; li < names.size(); ++li) {
      const auto errs = r.landmark_errors(names[li]);
      const std::string color = kPalette[li % kPalette.size()];
      if (!errs.empty()) {
        const Summary s = summarize(errs);
        const double lo = *std::min_element(errs.begin(), errs.end());
        const double cx = x + 15;
        svg.line(cx, ay.map(lo), cx, ay.map(s.q25), color);
        svg.line(cx, ay.map(s.q75), cx, ay.map(s.worst), color);
        svg.line(cx - 6, ay.map(lo), cx + 6, ay.map(lo), color);
        svg.line(cx - 6, ay.map(s.worst), cx + 6, ay.map(s.worst), color);
        svg.rect(x + 3, ay.map(s.q75), 24, std::max(1.0, ay.map(s.q25) - ay.map(s.q75)), color, color);
        svg.line(x + 3, ay.map(s.median), x + 27, ay.map(s.median), "#000", 2);
        ++drawn;
      }
      x += 40;
    }
    svg.text((group_start + x - 10) / 2, 362, label, 12);
    x += 20;
  }
  for (std::size_t li = 0; li < names.size(); ++li) {
    const double lx = 90 + li * 70.0;
    svg.rect(lx, 378, 12, 12, kPalette[li % kPalette.size()], kPalette[li % kPalette.size()]);
    svg.text(lx + 16, 389, names[li], 11, "start");
  }
  write_text_atomic(out_svg, svg.str());
  return drawn;
}

int plot_sdr(const std::vector<LabeledReport>& reports, const std::filesystem::path& out_svg) {
  if (reports.empty()) throw std::invalid_argument("plot_sdr: no reports");
  const auto& thresholds = reports.front().second.sdr_thresholds;
  if (thresholds.empty()) throw std::invalid_argument("plot_sdr: no thresholds");
  Svg svg(560, 400);
  const Axis ax{0.0, thresholds.back(), 70.0, 400.0};
  const Axis ay{0.0, 1.0, 340.0, 40.0};
  y_axis(svg, ay, 70, 400, "success detection rate");
  svg.line(70, 340, 400, 340, "#000");
  const double step = nice_step(thresholds.back());
  for (double t = 0.0; t <= thresholds.back() + 1e-9; t += step) svg.text(ax.map(t), 356, num(t, step < 1 ? 1 : 0), 11);
  svg.text(235, 378, "distance threshold (mm)", 12);
  svg.text(280, 22, "Success detection rate", 14);

  int curves = 0;
  double legend_y = 50;
  for (std::size_t ri = 0; ri < reports.size(); ++ri) {
    const auto& [label, r] = reports[ri];
    for (const auto& [stage, sub] : r.group_by(GroupKey::Stage)) {
      if (sub.records.empty()) continue;
      const auto curve = sub.sdr_curve();
      std::vector<std::pair<double, double>> pts;
      for (std::size_t i = 0; i < thresholds.size(); ++i) pts.emplace_back(ax.map(thresholds[i]), ay.map(curve[i]));
      const std::string color = kPalette[ri % kPalette.size()];
      const std::string dash = stage == "1" ? "6,4" : "";
      svg.polyline(pts, color, dash);
      for (const auto& [px, py] : pts) svg.circle(px, py, 2.5, color);
      svg.line(415, legend_y, 440, legend_y, color, 2, dash);
      svg.text(446, legend_y + 4, label + " stage " + stage, 11, "start");
      legend_y += 18;
      ++curves;
    }
  }
  write_text_atomic(out_svg, svg.str());
  return curves;
}

int plot_plane(const SampleRecord& record, const std::filesystem::path& out_svg) {
  if (record.gt.size() != 3 || record.pred.size() != 3) throw std::invalid_argument("plot_plane: need 3 landmarks");
  const Plane pg = plane_from_landmarks(record.gt);
  LandmarkSet pred_ordered;
  for (const auto& l : record.gt.points) pred_ordered.points.push_back(*record.pred.find(l.name));
  const Plane pp = plane_from_landmarks(pred_ordered);

  Svg svg(820, 430);
  svg.text(410, 22, "Sample " + record.sample_id + ": projected distance (mm)", 14);
  int annotations = 0;

  struct Panel {
    const Plane* plane;
    const LandmarkSet* own;
    const LandmarkSet* other;
    std::string title;
    double x0;
  };
  const std::vector<Panel> panels{{&pg, &record.gt, &pred_ordered, "ground-truth plane: prediction projected", 20},
                                  {&pp, &pred_ordered, &record.gt, "predicted plane: ground truth projected", 420}};
  for (const auto& panel : panels) {
    const Vec3 e1 = (panel.own->points[1].position - panel.own->points[0].position).normalized();
    const Vec3 e2 = panel.plane->normal.cross(e1);
    const Vec3 o = panel.plane->point;
    auto project = [&](const Vec3& p) { return std::pair<double, double>((p - o).dot(e1), (p - o).dot(e2)); };
    std::vector<std::pair<double, double>> all;
    for (const auto& l : panel.own->points) all.push_back(project(l.position));
    for (const auto& l : panel.other->points) all.push_back(project(l.position));
    double minx = 1e300, maxx = -1e300, miny = 1e300, maxy = -1e300;
    for (const auto& [u, v] : all) {
      minx = std::min(minx, u), maxx = std::max(maxx, u), miny = std::min(miny, v), maxy = std::max(maxy, v);
    }
    const double span = std::max({maxx - minx, maxy - miny, 1e-6}) * 1.3;
    const double cx = (minx + maxx) / 2, cy = (miny + maxy) / 2;
    const double scale = 320.0 / span;
    auto px = [&](double u) { return panel.x0 + 190 + (u - cx) * scale; };
    auto py = [&](double v) { return 230 - (v - cy) * scale; };

    svg.rect(panel.x0, 40, 380, 370, "#f8f8f8", "#999");
    svg.text(panel.x0 + 190, 58, panel.title, 12);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto [u0, v0] = project(panel.own->points[i].position);
      const auto [u1, v1] = project(panel.own->points[(i + 1) % 3].position);
      svg.line(px(u0), py(v0), px(u1), py(v1), "#1f77b4", 1.5);
    }
    for (std::size_t i = 0; i < 3; ++i) {
      const auto [u, v] = project(panel.own->points[i].position);
      svg.circle(px(u), py(v), 5, "#1f77b4");
      svg.text(px(u), py(v) - 9, panel.own->points[i].name, 11);
      const auto [qu, qv] = project(panel.other->points[i].position);
      svg.cross(px(qu), py(qv), 5, "#333");
      svg.text(px(qu) + 8, py(qv) + 14, num(point_plane_distance(*panel.plane, panel.other->points[i].position)), 12, "start",
               "#d62728");
      ++annotations;
    }
  }
  write_text_atomic(out_svg, svg.str());
  return annotations;
}

}  // namespace glip
