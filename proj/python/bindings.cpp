// Python bindings for the main operations. Fields cross the boundary as
// float64 numpy arrays shaped (channels, rows, cols) or (rows, cols).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "bpdo/cli.hpp"
#include "bpdo/data_io.hpp"
#include "bpdo/error.hpp"
#include "bpdo/eval.hpp"
#include "bpdo/geometry.hpp"
#include "bpdo/loss.hpp"
#include "bpdo/pipeline.hpp"
#include "bpdo/priors.hpp"
#include "bpdo/proposal.hpp"

namespace py = pybind11;
using namespace bpdo;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Points = std::vector<std::pair<double, double>>;

std::vector<Point2> to_points(const Points& pts) {
  std::vector<Point2> out;
  for (const auto& [x, y] : pts) out.push_back({x, y});
  return out;
}

Points from_points(const std::vector<Point2>& pts) {
  Points out;
  for (const auto& p : pts) out.emplace_back(p.x, p.y);
  return out;
}

TensorField to_field(const Array& a) {
  if (a.ndim() == 2) {
    return TensorField(1, static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                       std::vector<double>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() == 3) {
    return TensorField(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                       static_cast<std::size_t>(a.shape(2)), std::vector<double>(a.data(), a.data() + a.size()));
  }
  throw InvalidInput("expected a 2-D or 3-D array");
}

Array from_field(const TensorField& f, bool squeeze) {
  std::vector<py::ssize_t> shape;
  if (!(squeeze && f.channels() == 1)) shape.push_back(static_cast<py::ssize_t>(f.channels()));
  shape.push_back(static_cast<py::ssize_t>(f.rows()));
  shape.push_back(static_cast<py::ssize_t>(f.cols()));
  Array out(shape);
  std::copy(f.data().begin(), f.data().end(), out.mutable_data());
  return out;
}

BinaryMask to_mask(const py::array_t<bool, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw InvalidInput("mask must be 2-D");
  BinaryMask m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  const bool* d = a.data();
  for (std::size_t i = 0; i < m.size(); ++i)
    if (d[i]) m.set(i / m.cols(), i % m.cols());
  return m;
}

std::vector<Polygon> to_polygons(const std::vector<Points>& polys) {
  std::vector<Polygon> out;
  for (const auto& p : polys) out.emplace_back(to_points(p));
  return out;
}

py::dict scene_dict(const SceneRecord& s) {
  py::dict d;
  d["id"] = s.id;
  d["rows"] = s.rows;
  d["cols"] = s.cols;
  std::vector<Points> polys;
  for (const auto& p : s.polygons) polys.push_back(from_points(p.vertices()));
  d["polygons"] = polys;
  d["dont_care"] = s.dont_care;
  d["features"] = s.features ? py::object(from_field(*s.features, false)) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Boundary-point text detection engine";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("distance_transform", [](const py::array_t<bool, py::array::c_style | py::array::forcecast>& mask) {
    return from_field(distance_transform(to_mask(mask)), true);
  }, py::arg("mask"), "Euclidean distance from each set cell to the nearest unset cell.");

  m.def("polygon_iou", [](const Points& a, const Points& b, std::size_t resolution) {
    return polygon_iou(Polygon(to_points(a)), Polygon(to_points(b)), resolution);
  }, py::arg("a"), py::arg("b"), py::arg("resolution") = 512);

  m.def("resample_polygon", [](const Points& poly, std::size_t k) {
    return from_points(resample_polygon(Polygon(to_points(poly)), k).points());
  }, py::arg("polygon"), py::arg("k") = 20);

  m.def("rasterize", [](const Points& poly, std::size_t rows, std::size_t cols) {
    const BinaryMask mask = rasterize(Polygon(to_points(poly)), rows, cols);
    py::array_t<bool> out({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
    for (std::size_t i = 0; i < mask.size(); ++i) out.mutable_data()[i] = mask[i];
    return out;
  }, py::arg("polygon"), py::arg("rows"), py::arg("cols"));

  m.def("make_prior_maps", [](const std::vector<Points>& polys, std::size_t rows, std::size_t cols) {
    const PriorMaps p = make_prior_maps(to_polygons(polys), rows, cols);
    py::dict d;
    d["cls"] = from_field(p.cls, true);
    d["dist"] = from_field(p.dist, true);
    d["dir_x"] = from_field(p.dir_x, true);
    d["dir_y"] = from_field(p.dir_y, true);
    return d;
  }, py::arg("polygons"), py::arg("rows"), py::arg("cols"));

  m.def("extract_proposals", [](const Array& dist, double theta, std::size_t min_area, std::size_t k_points) {
    ProposalConfig cfg{theta, min_area, k_points};
    cfg.validate();
    std::vector<Points> out;
    for (const auto& b : extract_proposals(to_field(dist), cfg)) out.push_back(from_points(b.points()));
    return out;
  }, py::arg("dist"), py::arg("theta") = 0.3, py::arg("min_area") = 16, py::arg("k_points") = 20);

  m.def("parse_annotations", [](const std::string& text, const std::string& format) {
    py::list out;
    for (const auto& a : parse_annotations(text, parse_annotation_format(format)))
      out.append(py::make_tuple(from_points(a.polygon.vertices()), a.dont_care));
    return out;
  }, py::arg("text"), py::arg("format"), "List of (polygon, dont_care) pairs. Formats: ctw1500, totaltext, msratd500.");

  m.def("synth_scene", [](std::uint64_t seed, std::size_t rows, std::size_t cols, std::size_t n, std::size_t c) {
    return scene_dict(synth_scene(seed, rows, cols, n, c));
  }, py::arg("seed"), py::arg("rows") = 128, py::arg("cols") = 128, py::arg("n_instances") = 2,
     py::arg("c_channels") = 32);

  m.def("pm_loss", [](const std::vector<Points>& snapshots, const Points& gt, std::size_t k) {
    std::vector<BoundaryPoints> s;
    for (const auto& p : snapshots) s.emplace_back(to_points(p));
    return pm_loss(s, Polygon(to_points(gt)), k);
  }, py::arg("snapshots"), py::arg("gt"), py::arg("k"));

  m.def("schedule_factor", [](double gamma, std::size_t eps, std::size_t epoch) {
    LossWeights w;
    w.gamma = gamma;
    w.eps_epochs = eps;
    w.validate();
    return schedule_factor(w, epoch);
  }, py::arg("gamma"), py::arg("eps_epochs"), py::arg("epoch"));

  m.def("evaluate", [](const std::vector<std::vector<Points>>& preds, const std::vector<std::vector<Points>>& gts,
                       double threshold) {
    if (preds.size() != gts.size()) throw InvalidInput("evaluate: need one prediction list per GT scene");
    std::vector<PredScene> p;
    std::vector<GtScene> g;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      const std::string id = std::to_string(i);
      p.push_back({id, to_polygons(preds[i])});
      g.push_back({id, to_polygons(gts[i]), {}});
    }
    const EvalReport r = evaluate(p, g, threshold);
    py::dict d;
    d["precision"] = r.precision;
    d["recall"] = r.recall;
    d["f_measure"] = r.f_measure;
    d["n_gt"] = r.n_gt;
    d["n_pred"] = r.n_pred;
    d["n_matched"] = r.n_matched;
    return d;
  }, py::arg("preds"), py::arg("gts"), py::arg("iou_threshold") = 0.5,
     "Scores per-scene prediction lists against per-scene GT lists.");

  m.def("gradcheck", [](const std::string& suite, std::uint64_t seed) {
    py::list out;
    for (const auto& r : run_gradcheck_suite(suite, seed)) {
      py::dict d;
      d["op_name"] = r.op_name;
      d["max_rel_err"] = r.max_rel_err;
      d["max_abs_err"] = r.max_abs_err;
      d["n_params_checked"] = r.n_params_checked;
      d["passed"] = r.passed;
      out.append(d);
    }
    return out;
  }, py::arg("suite") = "all", py::arg("seed") = 0);

  m.def("detect", [](const std::string& checkpoint, const Array& features) {
    const Model model = load_checkpoint(checkpoint).model;
    SceneRecord s;
    s.id = "scene";
    s.features = to_field(features);
    s.rows = s.features->rows();
    s.cols = s.features->cols();
    const Detection d = detect(model, s);
    std::vector<Points> polys;
    for (const auto& p : d.polygons) polys.push_back(from_points(p.vertices()));
    std::vector<std::vector<Points>> iters;
    for (const auto& it : d.iterations) {
      iters.emplace_back();
      for (const auto& b : it) iters.back().push_back(from_points(b.points()));
    }
    py::dict out;
    out["polygons"] = polys;
    out["iterations"] = iters;
    out["predicted"] = from_field(d.predicted, false);
    return out;
  }, py::arg("checkpoint"), py::arg("features"), "Detects boundaries in a (C, rows, cols) feature array.");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::vector<std::string> all{"bpdo"};
    all.insert(all.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : all) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs a bpdo subcommand in-process; returns (exit_code, stdout, stderr).");
}
