#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>

#include "bsms/bistride.hpp"
#include "bsms/error.hpp"
#include "bsms/graph.hpp"
#include "bsms/heat1d.hpp"
#include "bsms/hierarchy.hpp"
#include "bsms/mesh_io.hpp"
#include "bsms/model.hpp"
#include "bsms/train.hpp"
#include "bsms/transition.hpp"

namespace py = pybind11;
using namespace bsms;

namespace {

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<Edge> to_edges(const std::vector<std::pair<Index, Index>>& e) { return {e.begin(), e.end()}; }

std::optional<Adjacency> contact_of(Index n, const std::optional<std::vector<std::pair<Index, Index>>>& c) {
  if (!c) return std::nullopt;
  const auto edges = to_edges(*c);
  return build_adjacency(n, edges);
}

// Model bound to one hierarchy, for inference from Python.
class PyModel {
 public:
  PyModel(const py::object& config, std::shared_ptr<const Hierarchy> h, std::uint64_t seed)
      : cfg_(ModelConfig::from_json(from_python(config))),
        graph_(std::make_shared<ModelGraph>(std::move(h), cfg_)),
        params_(init_model(cfg_, seed)) {}

  Matrix forward(const Matrix& features, const std::optional<Matrix>& world) const {
    ModelInput in{features, world.value_or(Matrix())};
    return model_forward(params_, *graph_, in, cfg_);
  }

  int mp_blocks_run(const Matrix& features) const {
    ForwardTape tape;
    model_forward(params_, *graph_, ModelInput{features, Matrix()}, cfg_, &tape);
    return tape.mp_blocks_run;
  }

  std::size_t parameter_count() const { return params_.parameter_count(); }
  py::object config() const { return to_python(cfg_.to_json()); }

 private:
  ModelConfig cfg_;
  std::shared_ptr<ModelGraph> graph_;
  BsmsParams params_;
};

}  // namespace

PYBIND11_MODULE(_bsms, m) {
  m.doc() = "Bi-stride multi-scale graph hierarchies and message passing";

  static py::exception<Error> base(m, "BsmsError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::InvalidArgument:
          PyErr_SetString(PyExc_ValueError, e.what());
          return;
        case ErrorKind::Io:
          PyErr_SetString(PyExc_OSError, e.what());
          return;
        case ErrorKind::Numerical:
          PyErr_SetString(PyExc_ArithmeticError, e.what());
          return;
      }
      py::set_error(base, e.what());
    }
  });

  py::class_<Adjacency>(m, "Adjacency")
      .def(py::init([](Index n, const std::vector<std::pair<Index, Index>>& edges) {
             const auto e = to_edges(edges);
             return build_adjacency(n, e);
           }),
           py::arg("n"), py::arg("edges"))
      .def_property_readonly("size", &Adjacency::size)
      .def_property_readonly("edge_count", &Adjacency::edge_count)
      .def("edges", &Adjacency::edges)
      .def("neighbors", [](const Adjacency& a, Index i) {
        const auto r = a.neighbors(i);
        return std::vector<Index>(r.begin(), r.end());
      })
      .def("degree", &Adjacency::degree)
      .def("has_edge", &Adjacency::has_edge)
      .def("__eq__", [](const Adjacency& a, const Adjacency& b) { return a == b; });

  m.def("bfs_distances", [](const Adjacency& a, const std::vector<Index>& seeds) { return bfs_distances(a, seeds).dist; },
        py::arg("adj"), py::arg("seeds"), "Multi-source BFS; unreachable nodes get 2**31 - 1.");
  m.def("two_hop", [](const Adjacency& a) { return Adjacency(bool_product(a.matrix(), a.matrix())).edges(); },
        "Edges of (A+I)^2 without the diagonal.");
  m.def("determine_clusters", &determine_clusters);
  m.def("seed_min_ave", &seed_min_ave);
  m.def("seed_close_center", &seed_close_center);
  m.def(
      "bistride_pool",
      [](const Adjacency& a, const std::vector<Index>& seeds, const std::string& parity) {
        const auto p = bistride_pool(a, seeds, parse_parity(parity));
        return py::dict(py::arg("seeds") = p.seeds, py::arg("pooled") = p.pooled, py::arg("parity") = to_string(p.parity));
      },
      py::arg("adj"), py::arg("seeds"), py::arg("parity") = "even");

  py::class_<Hierarchy, std::shared_ptr<Hierarchy>>(m, "Hierarchy")
      .def_property_readonly("depth", &Hierarchy::depth)
      .def_property_readonly("level_sizes", &Hierarchy::level_sizes)
      .def("adjacency", [](const Hierarchy& h, int l) { return h.levels.at(l).adjacency; })
      .def("edges", [](const Hierarchy& h, int l) { return h.levels.at(l).adjacency.edges(); })
      .def("contact_edges",
           [](const Hierarchy& h, int l) -> std::optional<std::vector<Edge>> {
             const auto& c = h.levels.at(l).contact;
             if (!c) return std::nullopt;
             return c->edges();
           })
      .def("positions", [](const Hierarchy& h, int l) { return h.levels.at(l).positions; })
      .def("weights", [](const Hierarchy& h, int l) { return h.levels.at(l).weights; })
      .def("pooled", [](const Hierarchy& h, int l) { return h.plans.at(l).pooled; })
      .def("origin", &Hierarchy::origin)
      .def("transition_dense", [](const Hierarchy& h, int l) { return h.transitions.at(l).table.to_dense(); })
      .def(
          "downsample",
          [](const Hierarchy& h, int l, const Matrix& v, const std::string& mode) {
            return downsample(v, h.transitions.at(l), parse_transition_mode(mode));
          },
          py::arg("level"), py::arg("values"), py::arg("mode") = "weighted")
      .def(
          "upsample",
          [](const Hierarchy& h, int l, const Matrix& v, const std::string& mode) {
            return upsample(v, h.transitions.at(l), parse_transition_mode(mode));
          },
          py::arg("level"), py::arg("values"), py::arg("mode") = "weighted")
      .def("to_json", [](const Hierarchy& h) { return to_python(hierarchy_to_json(h)); })
      .def_static("from_json", [](const py::object& o) { return std::make_shared<Hierarchy>(hierarchy_from_json(from_python(o))); })
      .def("__eq__", [](const Hierarchy& a, const Hierarchy& b) { return a == b; });

  m.def(
      "build_hierarchy",
      [](Index n, const std::vector<std::pair<Index, Index>>& edges, const Matrix& positions, int depth,
         const std::string& heuristic, const std::string& parity,
         const std::optional<std::vector<std::pair<Index, Index>>>& contact) {
        const auto e = to_edges(edges);
        HierarchyOptions opts;
        opts.depth = depth;
        opts.heuristic = parse_heuristic(heuristic);
        opts.parity = parse_parity(parity);
        return std::make_shared<Hierarchy>(build_hierarchy(build_adjacency(n, e), positions, contact_of(n, contact), opts));
      },
      py::arg("n"), py::arg("edges"), py::arg("positions"), py::arg("depth"), py::arg("heuristic") = "minave",
      py::arg("parity") = "even", py::arg("contact") = py::none());
  m.def(
      "build_hierarchy_from_mesh",
      [](const std::string& path, int depth, const std::string& heuristic, const std::string& parity) {
        const Mesh mesh = load_mesh(path);
        HierarchyOptions opts;
        opts.depth = depth > 0 ? depth : suggest_depth(mesh.size());
        opts.heuristic = parse_heuristic(heuristic);
        opts.parity = parse_parity(parity);
        return std::make_shared<Hierarchy>(build_hierarchy(mesh_to_graph(mesh), mesh.positions, std::nullopt, opts));
      },
      py::arg("path"), py::arg("depth") = 0, py::arg("heuristic") = "minave", py::arg("parity") = "even");
  m.def("suggest_depth", &suggest_depth);

  py::class_<PyModel>(m, "Model")
      .def(py::init<const py::object&, std::shared_ptr<const Hierarchy>, std::uint64_t>(), py::arg("config"),
           py::arg("hierarchy"), py::arg("seed") = 0)
      .def("forward", &PyModel::forward, py::arg("features"), py::arg("world_positions") = py::none())
      .def("mp_blocks_run", &PyModel::mp_blocks_run)
      .def_property_readonly("parameter_count", &PyModel::parameter_count)
      .def_property_readonly("config", &PyModel::config);

  m.def(
      "eval_metrics",
      [](const std::vector<Matrix>& pred, const std::vector<Matrix>& truth) {
        return to_python(eval_metrics(pred, truth).to_json());
      },
      py::arg("predicted"), py::arg("truth"));

  auto heat = m.def_submodule("heat1d", "Steady 1-D heat sticks");
  heat.def(
      "analytic_steady_state",
      [](int nodes, double length, double t0, double q, bool right_fixed) {
        heat1d::StickConfig c;
        c.nodes = nodes;
        c.length = length;
        c.t0 = t0;
        c.q = q;
        c.gap = 0.5 * length / (nodes - 1);
        c.orientation = right_fixed ? heat1d::Orientation::RightFixed : heat1d::Orientation::LeftFixed;
        return heat1d::analytic_steady_state(c);
      },
      py::arg("nodes"), py::arg("length") = 1.0, py::arg("t0") = 0.0, py::arg("q") = 1.0, py::arg("right_fixed") = false);
  heat.def(
      "proximity_edges",
      [](const Matrix& positions, double r) { return heat1d::proximity_edges(positions, r).edges(); },
      py::arg("positions"), py::arg("radius"));
  heat.def(
      "run_demo",
      [](std::uint64_t seed, int max_epochs, double target_rmse) {
        heat1d::DemoConfig c;
        c.seed = seed;
        c.max_epochs = max_epochs;
        c.target_rmse = target_rmse;
        heat1d::DemoReport r;
        {
          py::gil_scoped_release release;
          r = heat1d::run_demo(c);
        }
        return to_python(r.to_json());
      },
      py::arg("seed") = 0, py::arg("max_epochs") = 4000, py::arg("target_rmse") = 0.005);
}
