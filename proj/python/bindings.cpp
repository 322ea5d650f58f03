#include "glip/config.hpp"
#include "glip/losses.hpp"
#include "glip/metrics.hpp"
#include "glip/ot1d.hpp"
#include "glip/phantom.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace glip;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Batch to_batch(const Array& a) {
  if (a.ndim() != 5) throw std::invalid_argument("expected a (B, C, D1, D2, D3) array");
  Batch b;
  b.shape = {static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
             {static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3)), static_cast<int>(a.shape(4))}};
  b.values.assign(a.data(), a.data() + a.size());
  return b;
}

Array to_array(const std::vector<double>& v, const BatchShape& s) {
  Array out({s.batch, s.channels, s.spatial[0], s.spatial[1], s.spatial[2]});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::tuple loss_result(const LossValue& v, const BatchShape& s) {
  return py::make_tuple(v.value, to_array(v.grad, s), v.clamped);
}

Grid make_grid(std::array<int, 3> shape, std::array<double, 3> spacing, std::array<double, 3> origin) {
  Grid g{shape, Vec3(spacing[0], spacing[1], spacing[2]), Vec3(origin[0], origin[1], origin[2])};
  g.validate();
  return g;
}

LandmarkSet make_landmarks(const std::vector<Vec3>& points) {
  LandmarkSet s;
  const auto names = default_landmark_names(static_cast<int>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) s.points.push_back({names[i], points[i]});
  return s;
}

std::array<Vec3, 3> triple(const std::vector<Vec3>& p) {
  if (p.size() != 3) throw std::invalid_argument("expected three points");
  return {p[0], p[1], p[2]};
}

}  // namespace

PYBIND11_MODULE(_glip, m) {
  m.doc() = "glip C++ core";

  py::class_<LossSpec>(m, "LossSpec")
      .def(py::init([](const std::string& kind, double lambda, bool add_grid_penalty, bool one_sided_penalty) {
             LossSpec s;
             s.kind = parse_loss_kind(kind);
             s.lambda = lambda;
             s.add_grid_penalty = add_grid_penalty;
             s.one_sided_penalty = one_sided_penalty;
             s.validate();
             return s;
           }),
           py::arg("kind") = "GLIP", py::arg("lambda_") = 10.0, py::arg("add_grid_penalty") = false,
           py::arg("one_sided_penalty") = false)
      .def_property_readonly("kind", [](const LossSpec& s) { return to_string(s.kind); })
      .def_readwrite("lambda_", &LossSpec::lambda)
      .def_readwrite("focal_gamma", &LossSpec::focal_gamma)
      .def_readwrite("focal_alpha", &LossSpec::focal_alpha)
      .def_readwrite("wce_pos_weight", &LossSpec::wce_pos_weight)
      .def_readwrite("smooth_l1_beta", &LossSpec::smooth_l1_beta)
      .def_property_readonly("label", &LossSpec::label);

  m.def(
      "loss",
      [](const Array& pred, const Array& target, const LossSpec& spec) {
        const Batch p = to_batch(pred), t = to_batch(target);
        return loss_result(make_loss(spec)(p, t), p.shape);
      },
      py::arg("pred"), py::arg("target"), py::arg("spec"), "Returns (value, grad, clamped).");
  m.def(
      "ot_loss",
      [](const Array& pred, const Array& target) {
        const Batch p = to_batch(pred), t = to_batch(target);
        return loss_result(glip::ot_loss(p, t), p.shape);
      },
      py::arg("pred"), py::arg("target"));
  m.def(
      "grid_lipschitz_penalty",
      [](const Array& pred, bool one_sided) {
        const Batch p = to_batch(pred);
        return loss_result(glip::grid_lipschitz_penalty(p, one_sided), p.shape);
      },
      py::arg("pred"), py::arg("one_sided") = false);

  m.def("w1_oracle_1d", &w1_oracle_1d, py::arg("mu"), py::arg("nu"), py::arg("spacing") = 1.0);
  m.def(
      "dual_value_1d",
      [](const std::vector<double>& mu, const std::vector<double>& nu, int steps, double lambda, double spacing) {
        const auto r = glip::dual_value_1d(mu, nu, steps, lambda, spacing);
        return py::dict(py::arg("value") = r.value, py::arg("phi") = r.phi, py::arg("iterations") = r.iterations,
                        py::arg("converged") = r.converged);
      },
      py::arg("mu"), py::arg("nu"), py::arg("steps") = 20000, py::arg("lambda_") = 20.0, py::arg("spacing") = 1.0);

  m.def(
      "generate_heatmap",
      [](std::array<int, 3> shape, std::array<double, 3> spacing, std::array<double, 3> origin,
         const std::vector<Vec3>& points, double sigma, bool squared_distance) {
        const Grid g = make_grid(shape, spacing, origin);
        const Heatmap h = glip::generate_heatmap(g, make_landmarks(points), {sigma, squared_distance});
        py::array_t<double> out({h.channels, shape[0], shape[1], shape[2]});
        std::copy(h.data.begin(), h.data.end(), out.mutable_data());
        return out;
      },
      py::arg("shape"), py::arg("spacing"), py::arg("origin"), py::arg("points"), py::arg("sigma") = 1.0,
      py::arg("squared_distance") = false);
  m.def(
      "extract_landmarks",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& heatmap, std::array<double, 3> spacing,
         std::array<double, 3> origin) {
        if (heatmap.ndim() != 4) throw std::invalid_argument("expected a (C, D1, D2, D3) array");
        const Grid g = make_grid({static_cast<int>(heatmap.shape(1)), static_cast<int>(heatmap.shape(2)),
                                  static_cast<int>(heatmap.shape(3))},
                                 spacing, origin);
        const auto ex = glip::extract_landmarks(g, heatmap.data(), static_cast<int>(heatmap.shape(0)));
        std::vector<Vec3> pts;
        for (const auto& l : ex.landmarks.points) pts.push_back(l.position);
        return py::make_tuple(pts, ex.ambiguous);
      },
      py::arg("heatmap"), py::arg("spacing") = std::array<double, 3>{1, 1, 1},
      py::arg("origin") = std::array<double, 3>{0, 0, 0});

  m.def(
      "plane_from_points",
      [](const Vec3& a, const Vec3& b, const Vec3& c) {
        const Plane p = glip::plane_from_points(a, b, c);
        return py::make_tuple(p.point, p.normal);
      },
      py::arg("p1"), py::arg("p2"), py::arg("p3"));
  m.def(
      "avg_projection_distance",
      [](const std::vector<Vec3>& gt, const std::vector<Vec3>& pred) {
        return glip::avg_projection_distance(triple(gt), triple(pred));
      },
      py::arg("gt"), py::arg("pred"));
  m.def(
      "plane_angle",
      [](const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
        const auto ta = triple(a), tb = triple(b);
        return glip::plane_angle(glip::plane_from_points(ta[0], ta[1], ta[2]),
                                 glip::plane_from_points(tb[0], tb[1], tb[2]));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "euclid_errors",
      [](const std::vector<Vec3>& gt, const std::vector<Vec3>& pred) {
        std::vector<double> out;
        for (const auto& e : glip::euclid_errors(make_landmarks(gt), make_landmarks(pred))) out.push_back(e.error_mm);
        return out;
      },
      py::arg("gt"), py::arg("pred"));
  m.def("sdr", &glip::sdr, py::arg("errors"), py::arg("thresholds"));

  m.def(
      "generate_phantom",
      [](int index, std::uint64_t base_seed, std::array<int, 3> shape, double spacing) {
        PhantomConfig cfg;
        cfg.shape = shape;
        cfg.spacing = Vec3::Constant(spacing);
        cfg.base_seed = base_seed;
        const Sample s = glip::generate_phantom(cfg, index);
        py::array_t<float> vol({shape[0], shape[1], shape[2]});
        std::copy(s.volume.data.begin(), s.volume.data.end(), vol.mutable_data());
        py::dict landmarks;
        for (const auto& l : s.landmarks.points) landmarks[py::str(l.name)] = l.position;
        return py::dict(py::arg("id") = s.meta.sample_id, py::arg("volume") = vol, py::arg("landmarks") = landmarks,
                        py::arg("quality") = to_string(s.meta.quality),
                        py::arg("origin") = s.volume.grid.origin);
      },
      py::arg("index"), py::arg("base_seed") = 0, py::arg("shape") = std::array<int, 3>{64, 64, 64},
      py::arg("spacing") = 0.5);

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("from_json", [](const std::string& text) { return RunConfig::from_json(nlohmann::json::parse(text)); })
      .def("to_json", [](const RunConfig& c) { return c.to_json().dump(); })
      .def("hash", &RunConfig::hash)
      .def("problems", &RunConfig::problems);
}
