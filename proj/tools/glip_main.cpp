// glip: phantom generation, training, sweeps, two-stage runs, evaluation and plots.
//
// Every RunConfig field can be overridden by a --kebab-case flag or by the
// environment variable GLIP_<FLAG> (upper case, dashes as underscores), e.g.
// --batch-size / GLIP_BATCH_SIZE. Precedence: flag, environment, config file.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "glip/config.hpp"
#include "glip/pipeline.hpp"
#include "glip/plot.hpp"
#include "glip/second_stage.hpp"
#include "glip/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class ValueKind { Number, String, Bool, List };

struct Override {
  std::string flag;
  std::string section;
  std::string key;
  ValueKind kind;
  std::string help;
  std::string value;
};

std::vector<Override> run_overrides() {
  using K = ValueKind;
  return {
      {"loss", "loss", "kind", K::String, "GLIP, OT_ONLY, WCE, FOCAL, MSE, L1 or SMOOTH_L1", {}},
      {"lambda", "loss", "lambda", K::Number, "grid penalty weight", {}},
      {"add-grid-penalty", "loss", "add_grid_penalty", K::Bool, "add the grid penalty to a non-OT loss", {}},
      {"one-sided-penalty", "loss", "one_sided_penalty", K::Bool, "penalize only slopes above 1", {}},
      {"focal-gamma", "loss", "focal_gamma", K::Number, "", {}},
      {"focal-alpha", "loss", "focal_alpha", K::Number, "", {}},
      {"wce-pos-weight", "loss", "wce_pos_weight", K::Number, "", {}},
      {"smooth-l1-beta", "loss", "smooth_l1_beta", K::Number, "", {}},
      {"sigma", "heatmap", "sigma", K::Number, "heatmap width (mm)", {}},
      {"squared-distance", "heatmap", "squared_distance", K::Bool, "Gaussian kernel on squared distance", {}},
      {"sigma-grid", "sweep", "sigma_grid", K::List, "comma-separated sigma values", {}},
      {"lambda-grid", "sweep", "lambda_grid", K::List, "comma-separated lambda values", {}},
      {"optimizer", "optimizer", "name", K::String, "", {}},
      {"learning-rate", "optimizer", "learning_rate", K::Number, "", {}},
      {"epochs", "training", "epochs", K::Number, "", {}},
      {"batch-size", "training", "batch_size", K::Number, "", {}},
      {"folds", "training", "folds", K::Number, "", {}},
      {"split-ratio", "training", "split_ratio", K::List, "CV:test proportions, e.g. 4,1", {}},
      {"seed", "training", "seed", K::Number, "", {}},
      {"divergence-patience", "training", "divergence_patience", K::Number, "", {}},
      {"depth", "network", "depth", K::Number, "", {}},
      {"base-channels", "network", "base_channels", K::Number, "", {}},
      {"batch-norm", "network", "batch_norm", K::Bool, "", {}},
      {"target-spacing-mm", "preprocess", "target_spacing_mm", K::Number, "0 disables resampling", {}},
      {"downsample", "preprocess", "downsample", K::Number, "", {}},
      {"patch-size", "patch", "patch_size", K::Number, "", {}},
      {"disturbance", "patch", "disturbance", K::Number, "", {}},
      {"disturbance-grid", "patch", "disturbance_grid", K::List, "", {}},
      {"patch-sigma-grid", "patch", "sigma_grid", K::List, "", {}},
      {"patch-lambda-grid", "patch", "lambda_grid", K::List, "", {}},
      {"patch-sigma", "patch", "sigma", K::Number, "", {}},
      {"patch-lambda", "patch", "lambda", K::Number, "", {}},
      {"patch-epochs", "patch", "epochs", K::Number, "", {}},
      {"patch-batch-size", "patch", "batch_size", K::Number, "", {}},
      {"patch-depth", "patch", "depth", K::Number, "", {}},
      {"patch-base-channels", "patch", "base_channels", K::Number, "", {}},
      {"decode", "inference", "decode", K::String, "argmax or centroid", {}},
      {"ensemble", "inference", "ensemble", K::String, "heatmap_mean or coordinate_mean", {}},
  };
}

std::vector<Override> phantom_overrides() {
  using K = ValueKind;
  return {
      {"count", "phantom", "count", K::Number, "number of samples", {}},
      {"base-seed", "phantom", "base_seed", K::Number, "", {}},
      {"shape", "phantom", "shape", K::List, "grid shape, e.g. 64,64,64", {}},
      {"spacing", "phantom", "spacing", K::List, "voxel spacing (mm)", {}},
      {"noise-sigma", "phantom", "noise_sigma", K::Number, "", {}},
      {"marker-intensity", "phantom", "marker_intensity", K::Number, "", {}},
  };
}

std::string env_name(const std::string& flag) {
  std::string s = "GLIP_" + flag;
  for (char& c : s) c = c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

void add_overrides(CLI::App* app, std::vector<Override>& overrides) {
  for (auto& o : overrides)
    app->add_option("--" + o.flag, o.value, o.help)->envname(env_name(o.flag))->group("Overrides");
}

json parse_value(const Override& o, std::vector<std::string>& problems) {
  const std::string where = "--" + o.flag;
  auto number = [&](const std::string& text) -> json {
    try {
      json v = json::parse(text);
      if (v.is_number()) return v;
    } catch (const json::exception&) {
    }
    problems.push_back(where + ": expected a number, got '" + text + "'");
    return nullptr;
  };
  switch (o.kind) {
    case ValueKind::String:
      return o.value;
    case ValueKind::Number:
      return number(o.value);
    case ValueKind::Bool: {
      std::string v = o.value;
      std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      problems.push_back(where + ": expected true or false, got '" + o.value + "'");
      return nullptr;
    }
    case ValueKind::List: {
      json arr = json::array();
      std::stringstream ss(o.value);
      std::string item;
      while (std::getline(ss, item, ',')) arr.push_back(number(item));
      return arr;
    }
  }
  return nullptr;
}

/// Config file merged with flag and environment overrides. Throws ConfigError
/// listing every problem.
json merged_config(const std::string& path, const std::vector<Override>& overrides) {
  json j = json::object();
  std::vector<std::string> problems;
  std::ifstream is(path);
  if (!is) throw glip::ConfigError({"cannot open config file " + path});
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw glip::ConfigError({path + ": " + e.what()});
  }
  if (!j.is_object()) throw glip::ConfigError({path + ": top level must be an object"});
  for (const auto& o : overrides) {
    if (o.value.empty()) continue;
    json v = parse_value(o, problems);
    if (!v.is_null()) j[o.section][o.key] = v;
  }
  if (!problems.empty()) {
    // Surface the file's own problems too.
    try {
      glip::RunConfig::from_json(j);
    } catch (const glip::ConfigError& e) {
      for (const auto& p : e.problems()) problems.push_back(p);
    } catch (const std::exception&) {
    }
    throw glip::ConfigError(std::move(problems));
  }
  return j;
}

struct Common {
  std::string config;
  std::string data;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c, bool needs_data = true) {
  app->add_option("--config", c.config, "JSON config file")->required()->check(CLI::ExistingFile);
  if (needs_data) app->add_option("--data", c.data, "dataset directory with manifest.json")->required();
  app->add_option("--out", c.out, "output directory (runs root)")->required();
  app->add_flag("--quiet", c.quiet, "no progress output");
}

struct Loaded {
  glip::RunConfig cfg;
  glip::Dataset data;
  glip::SplitPlan plan;
};

Loaded load_run(const Common& c, const std::vector<Override>& overrides, const glip::Logger& log) {
  Loaded l;
  l.cfg = glip::RunConfig::from_json(merged_config(c.config, overrides));
  const auto samples = glip::load_dataset(c.data);
  l.data = glip::prepare_dataset(samples, l.cfg);
  l.plan = glip::split_cv_test(l.data.manifest(), l.cfg.folds, l.cfg.split_ratio, l.cfg.seed);
  log(glip::concat("loaded ", l.data.size(), " samples: ", l.plan.test.size(), " test, ", l.cfg.folds, " folds"));
  fs::create_directories(c.out);
  return l;
}

std::string mm(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

void print_summary(const std::string& label, const glip::EvalReport& r) {
  const auto s = glip::summarize(r.landmark_errors());
  std::cout << label << ": n=" << r.records.size() << " median=" << mm(s.median) << " mm q25=" << mm(s.q25)
            << " q75=" << mm(s.q75) << " worst=" << mm(s.worst) << "\n";
}

int run_train(const Common& c, const std::vector<Override>& overrides, bool no_test) {
  const auto log = c.quiet ? glip::null_logger() : glip::stderr_logger();
  auto l = load_run(c, overrides, log);
  const auto cv = glip::run_cv(l.cfg, l.plan, l.data, c.out, log);
  std::cout << "run " << cv.hash << " -> " << cv.run_dir.string() << "\n";
  for (const auto& f : cv.folds)
    std::cout << "fold " << f.fold << ": " << (f.diverged ? "DIVERGED (" + f.divergence_reason + ")" : "ok")
              << " val_median=" << mm(f.val_median_mm) << " mm\n";
  std::cout << "cv_median=" << mm(cv.cv_median_mm) << " mm\n";
  if (no_test || cv.diverged) {
    glip::write_run_report(cv, nullptr);
  } else {
    const auto test = glip::evaluate_test(cv, l.plan, l.data, log);
    glip::write_run_report(cv, &test);
    print_summary("test", test);
  }
  return cv.diverged ? 1 : 0;
}

int run_sweep(const Common& c, const std::vector<Override>& overrides, const std::string& axis, int jobs,
              bool no_test) {
  const auto log = c.quiet ? glip::null_logger() : glip::stderr_logger();
  const auto sweep_axis = glip::parse_sweep_axis(axis);
  auto l = load_run(c, overrides, log);
  if (jobs > 1) log(glip::concat("--jobs ", jobs, ": grid points run sequentially in this build"));
  const auto r = glip::sensitivity_sweep(l.cfg, sweep_axis, l.plan, l.data, c.out, log, !no_test);
  glip::write_sweep(r, c.out);
  for (const auto& row : r.rows)
    std::cout << "sigma=" << glip::format_number(row.point.sigma) << " lambda=" << glip::format_number(row.point.lambda)
              << " cv_median=" << (row.point.diverged ? std::string("DIVERGED") : mm(row.point.cv_median_mm)) << "\n";
  if (r.best)
    std::cout << "best: sigma=" << glip::format_number(r.best->sigma) << " lambda=" << glip::format_number(r.best->lambda)
              << "\n";
  std::cout << "wrote " << (fs::path(c.out) / ("sweep_" + glip::to_string(r.axis) + ".json")).string() << "\n";
  return 0;
}

int run_second_stage(const Common& c, const std::vector<Override>& overrides) {
  const auto log = c.quiet ? glip::null_logger() : glip::stderr_logger();
  auto l = load_run(c, overrides, log);
  const auto cv = glip::run_cv(l.cfg, l.plan, l.data, c.out, log);
  if (cv.diverged) {
    std::cerr << "error: first stage diverged; see " << cv.run_dir.string() << "\n";
    return 1;
  }
  const auto r = glip::second_stage_run(cv, l.plan, l.data, log);
  std::cout << "best local: p_d=" << r.best.disturbance << " sigma=" << glip::format_number(r.best.sigma)
            << " lambda=" << glip::format_number(r.best.lambda) << "\n";
  for (const auto& [stage, sub] : r.report.group_by(glip::GroupKey::Stage)) print_summary("stage " + stage, sub);
  std::cout << "threshold_mm,sdr_stage1,sdr_stage2\n";
  for (std::size_t i = 0; i < r.report.sdr_thresholds.size(); ++i)
    std::cout << glip::format_number(r.report.sdr_thresholds[i]) << "," << mm(r.sdr_stage1[i]) << ","
              << mm(r.sdr_stage2[i]) << "\n";
  std::cout << "wrote " << (cv.run_dir / "stage2" / "report.json").string() << "\n";
  return 0;
}

int run_eval(const Common& c, const std::vector<Override>& overrides, const std::string& report_path,
             const std::vector<std::string>& group_names) {
  std::vector<glip::GroupKey> groups;
  for (const auto& g : group_names) groups.push_back(glip::parse_group_key(g));
  glip::EvalReport report;
  fs::path out_dir = c.out;
  if (!report_path.empty()) {
    report = glip::EvalReport::read_json(report_path);
    fs::create_directories(out_dir);
  } else {
    if (c.config.empty() || c.data.empty()) throw CLI::ValidationError("eval needs --report or --config with --data");
    const auto log = c.quiet ? glip::null_logger() : glip::stderr_logger();
    auto l = load_run(c, overrides, log);
    const auto cv = glip::run_cv(l.cfg, l.plan, l.data, c.out, log);
    if (cv.diverged) {
      std::cerr << "error: run diverged; see " << cv.run_dir.string() << "\n";
      return 1;
    }
    report = glip::evaluate_test(cv, l.plan, l.data, log);
    out_dir = cv.run_dir;
  }
  if (report.records.empty()) {
    std::cerr << "error: empty report\n";
    return 1;
  }
  report.write_json(out_dir / "eval.json", groups);
  report.write_csv(out_dir / "eval.csv");
  print_summary("all", report);
  for (auto key : groups)
    for (const auto& [name, sub] : report.group_by(key)) print_summary(glip::to_string(key) + "=" + name, sub);
  std::cout << "wrote " << (out_dir / "eval.json").string() << "\n";
  return 0;
}

int run_plot(const std::vector<std::string>& reports, std::vector<std::string> labels, const std::string& kind,
             const std::string& out, const std::string& sample) {
  if (!labels.empty() && labels.size() != reports.size())
    throw CLI::ValidationError("--label must be given once per --report");
  std::vector<glip::LabeledReport> loaded;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    auto r = glip::EvalReport::read_json(reports[i]);
    if (r.records.empty()) {
      std::cerr << "error: empty report " << reports[i] << "\n";
      return 1;
    }
    std::string label = labels.empty() ? r.records.front().loss : labels[i];
    loaded.emplace_back(label, std::move(r));
  }
  if (!fs::path(out).parent_path().empty()) fs::create_directories(fs::path(out).parent_path());
  if (kind == "box") {
    std::cout << "box plot: " << glip::plot_box(loaded, out) << " boxes\n";
  } else if (kind == "sdr") {
    std::cout << "sdr plot: " << glip::plot_sdr(loaded, out) << " curves\n";
  } else {
    const auto& recs = loaded.front().second.records;
    int stage = 0;
    for (const auto& r : recs) stage = std::max(stage, r.stage);
    const glip::SampleRecord* pick = nullptr;
    for (const auto& r : recs)
      if (r.stage == stage && (sample.empty() ? true : r.sample_id == sample)) {
        pick = &r;
        break;
      }
    if (!pick) {
      std::cerr << "error: sample '" << sample << "' not in report\n";
      return 1;
    }
    std::cout << "plane plot of " << pick->sample_id << ": " << glip::plot_plane(*pick, out) << " annotations\n";
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GLiP landmark localization: synthetic phantoms, training, sweeps and evaluation"};
  app.require_subcommand(1);

  auto* phantom = app.add_subcommand("phantom", "generate a synthetic phantom dataset");
  std::string phantom_config, phantom_out;
  auto p_over = phantom_overrides();
  phantom->add_option("--config", phantom_config, "JSON config file (\"phantom\" section)")
      ->required()
      ->check(CLI::ExistingFile);
  phantom->add_option("--out", phantom_out, "output directory")->required();
  add_overrides(phantom, p_over);

  Common train_c, sweep_c, stage_c, eval_c;
  auto train_over = run_overrides(), sweep_over = run_overrides(), stage_over = run_overrides(),
       eval_over = run_overrides();

  auto* train = app.add_subcommand("train", "one cross-validated run plus test evaluation");
  add_common(train, train_c);
  add_overrides(train, train_over);
  bool train_no_test = false;
  train->add_flag("--no-test", train_no_test, "skip the test-set evaluation");

  auto* sweep = app.add_subcommand("sweep", "sensitivity sweep over sigma, lambda or both");
  add_common(sweep, sweep_c);
  add_overrides(sweep, sweep_over);
  std::string axis = "sigma";
  int jobs = 1;
  bool sweep_no_test = false;
  sweep->add_option("--axis", axis, "sigma, lambda or grid")->check(CLI::IsMember({"sigma", "lambda", "grid"}));
  sweep->add_option("--jobs", jobs, "maximum parallel grid points")->check(CLI::PositiveNumber)->envname("GLIP_JOBS");
  sweep->add_flag("--no-test", sweep_no_test, "skip the test-set evaluation of each point");

  auto* stage = app.add_subcommand("second-stage", "train local patch networks on top of a first-stage run");
  add_common(stage, stage_c);
  add_overrides(stage, stage_over);

  auto* eval = app.add_subcommand("eval", "grouped test-set aggregates of a run or an existing report");
  std::string eval_report;
  std::vector<std::string> group_by{"quality"};
  eval->add_option("--config", eval_c.config, "JSON config file")->check(CLI::ExistingFile);
  eval->add_option("--data", eval_c.data, "dataset directory");
  eval->add_option("--out", eval_c.out, "runs root, or output directory with --report")->required();
  eval->add_option("--report", eval_report, "existing report.json")->check(CLI::ExistingFile);
  eval->add_option("--group-by", group_by, "quality, loss or stage")
      ->check(CLI::IsMember({"quality", "loss", "stage"}))
      ->capture_default_str();
  eval->add_flag("--quiet", eval_c.quiet, "no progress output");
  add_overrides(eval, eval_over);

  auto* plot = app.add_subcommand("plot", "SVG box plots, SDR curves or plane plots from reports");
  std::vector<std::string> plot_reports, plot_labels;
  std::string plot_kind = "box", plot_out, plot_sample;
  plot->add_option("--report", plot_reports, "report.json, repeatable")->required()->check(CLI::ExistingFile);
  plot->add_option("--label", plot_labels, "legend label per report");
  plot->add_option("--kind", plot_kind, "box, sdr or plane")->check(CLI::IsMember({"box", "sdr", "plane"}));
  plot->add_option("--out", plot_out, "output .svg file")->required();
  plot->add_option("--sample", plot_sample, "sample id for the plane plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*phantom) {
      auto j = merged_config(phantom_config, p_over);
      const auto cfg = glip::phantom_config_from_json(j);
      const auto entries = glip::generate_dataset(cfg, phantom_out);
      std::cout << "wrote " << entries.size() << " samples to " << phantom_out << "\n";
      return 0;
    }
    if (*train) return run_train(train_c, train_over, train_no_test);
    if (*sweep) return run_sweep(sweep_c, sweep_over, axis, jobs, sweep_no_test);
    if (*stage) return run_second_stage(stage_c, stage_over);
    if (*eval) return run_eval(eval_c, eval_over, eval_report, group_by);
    if (*plot) return run_plot(plot_reports, plot_labels, plot_kind, plot_out, plot_sample);
  } catch (const glip::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
