// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "owl/pipeline.hpp"

namespace py = pybind11;
using namespace owl;

namespace {

PointCloud cloud_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2 || (arr.shape(1) != 3 && arr.shape(1) != 4))
    throw py::value_error("expected an (N, 3) or (N, 4) array of points");
  PointCloud cloud;
  const auto view = arr.unchecked<2>();
  const bool has_intensity = arr.shape(1) == 4;
  cloud.points.reserve(static_cast<std::size_t>(arr.shape(0)));
  for (py::ssize_t i = 0; i < arr.shape(0); ++i) {
    cloud.points.push_back(
        {view(i, 0), view(i, 1), view(i, 2), has_intensity ? view(i, 3) : 0.0});
  }
  return cloud;
}

py::array_t<double> cloud_to_array(const PointCloud& cloud) {
  py::array_t<double> arr({static_cast<py::ssize_t>(cloud.size()), py::ssize_t(4)});
  auto view = arr.mutable_unchecked<2>();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    view(i, 0) = cloud.points[i].x;
    view(i, 1) = cloud.points[i].y;
    view(i, 2) = cloud.points[i].z;
    view(i, 3) = cloud.points[i].intensity;
  }
  return arr;
}

py::dict metrics_to_dict(const PrMetrics& m) {
  py::dict d;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["ap"] = m.ap;
  d["tp"] = m.tp;
  d["fp"] = m.fp;
  d["fn"] = m.fn;
  return d;
}

py::dict report_to_dict(const EvalReport& report) {
  py::dict overall;
  for (const auto& [thr, m] : report.overall) overall[py::float_(thr)] = metrics_to_dict(m);
  py::dict d;
  d["overall"] = overall;
  d["matched_pairs"] = report.matched_pairs;
  py::list hist;
  for (int h : report.iou_histogram) hist.append(h);
  d["iou_histogram"] = hist;
  return d;
}

}  // namespace

PYBIND11_MODULE(_owl, m) {
  m.doc() = "Unsupervised 3D pseudo-labeling pipeline";

  py::enum_<ClassId>(m, "ClassId")
      .value("Unknown", ClassId::Unknown)
      .value("Vehicle", ClassId::Vehicle)
      .value("Pedestrian", ClassId::Pedestrian)
      .value("Cyclist", ClassId::Cyclist);

  py::class_<Box3D>(m, "Box3D")
      .def(py::init<>())
      .def_readwrite("x", &Box3D::x)
      .def_readwrite("y", &Box3D::y)
      .def_readwrite("z", &Box3D::z)
      .def_readwrite("l", &Box3D::l)
      .def_readwrite("w", &Box3D::w)
      .def_readwrite("h", &Box3D::h)
      .def_readwrite("yaw", &Box3D::yaw)
      .def_readwrite("class_id", &Box3D::class_id)
      .def_readwrite("score", &Box3D::score)
      .def_readwrite("weight", &Box3D::weight)
      .def("__repr__", [](const Box3D& b) {
        return "Box3D(x=" + std::to_string(b.x) + ", y=" + std::to_string(b.y) +
               ", z=" + std::to_string(b.z) + ", l=" + std::to_string(b.l) +
               ", w=" + std::to_string(b.w) + ", h=" + std::to_string(b.h) +
               ", yaw=" + std::to_string(b.yaw) + ")";
      });

  py::class_<PointCloud>(m, "PointCloud")
      .def(py::init(&cloud_from_array), py::arg("points"))
      .def("numpy", &cloud_to_array)
      .def("__len__", [](const PointCloud& c) { return c.size(); })
      .def_readwrite("frame_id", &PointCloud::frame_id);

  m.def(
      "dynamic_radius",
      [](double alpha, double beta, double r0, double rho) {
        ClusteringParams p;
        p.alpha = alpha;
        p.beta = beta;
        p.r0 = r0;
        return dynamic_radius(p, rho);
      },
      py::arg("alpha"), py::arg("beta"), py::arg("r0"), py::arg("rho"));

  m.def(
      "cluster",
      [](const PointCloud& cloud, double alpha, double beta, double r0, int min_points) {
        ClusteringParams p;
        p.alpha = alpha;
        p.beta = beta;
        p.r0 = r0;
        p.min_points = min_points;
        std::vector<std::vector<int>> out;
        for (const Cluster& c : cluster(cloud, p)) out.push_back(c.members);
        return out;
      },
      py::arg("cloud"), py::arg("alpha") = 1.0, py::arg("beta") = 0.6, py::arg("r0") = 0.6,
      py::arg("min_points") = 5);

  m.def(
      "initial_labels",
      [](const PointCloud& scene, double alpha, double beta, double r0, int min_points,
         double nms_iou) {
        ClusteringParams p;
        p.alpha = alpha;
        p.beta = beta;
        p.r0 = r0;
        p.min_points = min_points;
        return initial_labels(scene, p, nms_iou);
      },
      py::arg("scene"), py::arg("alpha") = 1.0, py::arg("beta") = 0.6, py::arg("r0") = 0.6,
      py::arg("min_points") = 5, py::arg("nms_iou") = 0.2);

  m.def("iou_bev", [](const Box3D& a, const Box3D& b) { return iou_bev(a, b); }, py::arg("a"),
        py::arg("b"));
  m.def("iou_3d", [](const Box3D& a, const Box3D& b) { return iou_3d(a, b); }, py::arg("a"),
        py::arg("b"));
  m.def("nms", &nms, py::arg("boxes"), py::arg("iou_threshold"));

  m.def(
      "remove_ground",
      [](const PointCloud& cloud, std::uint64_t seed) {
        GroundParams p;
        p.seed = seed;
        const GroundResult r = remove_ground(cloud, p);
        return py::make_tuple(r.nonground, r.ground, r.warning);
      },
      py::arg("cloud"), py::arg("seed") = 0);

  m.def(
      "filter_motion_artifacts",
      [](const std::vector<PointCloud>& sweeps, double neighborhood_radius, double tau_static) {
        SweepSequence seq;
        for (const PointCloud& c : sweeps) seq.sweeps.emplace_back(c, Pose::identity());
        const PersistenceField field = persistence_scores(seq, neighborhood_radius);
        const FilteredCloud filtered = filter_motion_artifacts(seq, field, tau_static);
        return py::make_tuple(filtered.cloud, filtered.kept_indices, field.scores);
      },
      py::arg("sweeps"), py::arg("neighborhood_radius") = 0.3, py::arg("tau_static") = 0.7);

  m.def(
      "consistency_score",
      [](const Box3D& box) { return consistency_score(box, SizePrototypes::defaults()); },
      py::arg("box"));
  m.def(
      "distribution_score",
      [](const Box3D& box, const PointCloud& scene, int resolution, double norm_range) {
        return distribution_score(box, scene, resolution, norm_range);
      },
      py::arg("box"), py::arg("scene"), py::arg("resolution") = 8, py::arg("norm_range") = 75.0);

  m.def(
      "generate_frames",
      [](int num_frames, std::uint64_t seed, int vehicles, int pedestrians, int cyclists,
         double mover_fraction) {
        SceneSpec spec;
        spec.seed = seed;
        spec.vehicles = vehicles;
        spec.pedestrians = pedestrians;
        spec.cyclists = cyclists;
        spec.mover_fraction = mover_fraction;
        py::list out;
        for (const GeneratedFrame& f : generate_frames(spec, num_frames))
          out.append(py::make_tuple(f.cloud, f.truth));
        return out;
      },
      py::arg("num_frames") = 1, py::arg("seed") = 1, py::arg("vehicles") = 5,
      py::arg("pedestrians") = 3, py::arg("cyclists") = 2, py::arg("mover_fraction") = 0.4);

  m.def(
      "evaluate",
      [](const std::vector<std::vector<Box3D>>& predictions,
         const std::vector<std::vector<Box3D>>& truths, const std::vector<double>& thresholds) {
        return report_to_dict(evaluate(predictions, truths, thresholds));
      },
      py::arg("predictions"), py::arg("truths"),
      py::arg("thresholds") = std::vector<double>{0.5, 0.7});

  m.def(
      "normalize_config",
      [](const std::string& json_text) { return config_to_json(config_from_json_text(json_text)); },
      py::arg("json_text"),
      "Parse, validate and re-serialize a pipeline config; raises on unknown keys.");

  m.def(
      "run_e2e",
      [](const std::string& config_json, const std::string& output_dir) {
        const E2eResult res = run_e2e(config_from_json_text(config_json), output_dir);
        py::dict d;
        d["initial"] = report_to_dict(res.initial_eval);
        d["refined"] = report_to_dict(res.refined_eval);
        d["final"] = report_to_dict(res.final_eval);
        return d;
      },
      py::arg("config_json") = "{}", py::arg("output_dir") = "",
      "Run the full pipeline on a generated scene; returns evaluation metrics.");
}
