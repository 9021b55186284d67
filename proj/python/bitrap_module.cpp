// Python bindings: scenes, windows, training, sampling and metrics.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bitrap/config.hpp"
#include "bitrap/errors.hpp"
#include "bitrap/metrics.hpp"

namespace py = pybind11;
using namespace bitrap;

namespace {

// Applies keyword overrides through the same key table as the CLI.
RunConfig run_config(const py::dict& options) {
  RunConfig c;
  for (const auto& [k, v] : options) {
    std::string value;
    if (py::isinstance<py::bool_>(v)) {
      value = v.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      for (const auto& item : v) value += (value.empty() ? "" : ",") + py::str(item).cast<std::string>();
    } else {
      value = py::str(v).cast<std::string>();
    }
    set_config_value(c, k.cast<std::string>(), value);
  }
  c.sync();
  return c;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["variant"] = r.variant;
  d["units"] = r.units;
  d["windows"] = r.windows;
  d["best_of"] = r.best_of;
  auto put = [&](const char* name, const std::optional<double>& v) {
    d[name] = v ? py::cast(*v) : py::none();
  };
  put("ade", r.ade);
  put("fde", r.fde);
  put("c_ade", r.c_ade);
  put("c_fde", r.c_fde);
  put("anll", r.anll);
  put("fnll", r.fnll);
  d["ade_at"] = r.ade_at;
  d["nll_per_step"] = r.nll_per_step;
  d["best_per_step"] = r.best_per_step;
  return d;
}

}  // namespace

PYBIND11_MODULE(_bitrap, m) {
  m.doc() = "Goal-conditioned bi-directional trajectory prediction";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", data.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());

  py::class_<AgentTrack>(m, "AgentTrack")
      .def_readonly("agent_id", &AgentTrack::agent_id)
      .def_readonly("frames", &AgentTrack::frames)
      .def_readonly("states", &AgentTrack::states);

  py::class_<Scene>(m, "Scene")
      .def_readonly("id", &Scene::id)
      .def_readonly("dt", &Scene::dt)
      .def_readonly("frame_step", &Scene::frame_step)
      .def_readonly("tracks", &Scene::tracks)
      .def_readonly("labels", &Scene::labels)
      .def("__eq__", [](const Scene& a, const Scene& b) { return a == b; })
      .def("__len__", [](const Scene& s) { return s.tracks.size(); });

  py::class_<TrajectoryWindow>(m, "Window")
      .def(py::init([](const Mat& past, const Mat& future) {
             if (past.rows() < 1 || future.rows() < 1 || past.cols() != future.cols()) {
               throw ShapeError("past and future need rows and equal widths");
             }
             TrajectoryWindow w;
             w.past = past;
             w.future = future;
             w.origin = past.row(past.rows() - 1).transpose();
             w.goal = future.row(future.rows() - 1).transpose();
             return w;
           }),
           py::arg("past"), py::arg("future"))
      .def_readonly("past", &TrajectoryWindow::past)
      .def_readonly("future", &TrajectoryWindow::future)
      .def_readonly("goal", &TrajectoryWindow::goal)
      .def_readonly("origin", &TrajectoryWindow::origin)
      .def_readonly("scene_id", &TrajectoryWindow::scene_id)
      .def_readonly("agent_id", &TrajectoryWindow::agent_id)
      .def_readonly("t", &TrajectoryWindow::t)
      .def_readonly("label", &TrajectoryWindow::label);

  m.def(
      "synth",
      [](const py::kwargs& options) {
        return synth_multimodal_dataset(run_config(options).synth);
      },
      "Synthetic branching scene; keywords are config keys (n_agents, branch_probs, noise_std, seed, ...).");
  m.def("load_bev", &load_bev_scene, py::arg("path"), py::arg("dt") = 0.4, py::arg("frame_step") = 0);
  m.def("load_fpv", &load_fpv_tracks, py::arg("path"), py::arg("dt") = 1.0 / 30.0, py::arg("frame_step") = 0);
  m.def("save_bev", &save_bev_scene, py::arg("scene"), py::arg("path"));
  m.def(
      "windows",
      [](const Scene& s, int tau, int delta, int stride) { return make_windows(s, tau, delta, stride).windows; },
      py::arg("scene"), py::arg("tau") = 8, py::arg("delta") = 12, py::arg("stride") = 1);

  py::class_<Checkpoint>(m, "Model")
      .def_property_readonly("variant", [](const Checkpoint& c) { return to_string(c.config.model.variant); })
      .def_readonly("epoch", &Checkpoint::epoch)
      .def_property_readonly("curve",
                             [](const Checkpoint& c) {
                               py::list out;
                               for (const auto& r : c.curve) {
                                 out.append(py::dict(py::arg("epoch") = r.epoch, py::arg("split") = r.split,
                                                     py::arg("loss") = r.loss, py::arg("lr") = r.lr));
                               }
                               return out;
                             })
      .def_property_readonly("parameter_count",
                             [](const Checkpoint& c) { return c.model ? c.model->params().total_size() : 0; })
      .def("save", [](const Checkpoint& c, const std::string& path) { save_checkpoint(c, path); })
      .def_static("load", &load_checkpoint)
      .def(
          "predict",
          [](const Checkpoint& c, const TrajectoryWindow& w, int n, std::uint64_t seed) {
            PredictionSet p;
            {
              py::gil_scoped_release release;
              p = predict(c, w, n, seed);
            }
            py::dict d;
            d["samples"] = p.samples;
            d["components"] = p.components;
            if (p.goal) {
              d["goal_pi"] = p.goal->pi;
              d["goal_mu"] = Mat(p.goal->mu);
              std::vector<Mat> covs;
              for (const auto& cov : p.goal->cov) covs.push_back(cov);
              d["goal_cov"] = covs;
            }
            return d;
          },
          py::arg("window"), py::arg("n") = 20, py::arg("seed") = 0)
      .def(
          "evaluate",
          [](const Checkpoint& c, const std::vector<TrajectoryWindow>& windows, const py::kwargs& options) {
            const EvalConfig e = run_config(options).eval;
            MetricReport r;
            {
              py::gil_scoped_release release;
              r = evaluate(c, windows, e);
            }
            return report_dict(r);
          },
          py::arg("windows"));

  m.def(
      "train",
      [](const std::vector<TrajectoryWindow>& windows, double dt, const py::kwargs& options) {
        const TrainConfig t = run_config(options).train;
        py::gil_scoped_release release;
        return train(t, windows, dt);
      },
      py::arg("windows"), py::arg("dt") = 0.4,
      "Trains a model; keywords are config keys (variant, epochs, hidden, lr, seed, ...).");

  m.def("config_keys", [] {
    py::dict d;
    const RunConfig defaults;
    for (const auto& k : config_keys()) d[py::str(k.name)] = get_config_value(defaults, k.name);
    return d;
  });

  m.def("ade", [](const Mat& p, const Mat& g, bool squared) {
    return ade(p, g, squared ? DisplacementMode::kSquaredPx : DisplacementMode::kEuclidean);
  }, py::arg("pred"), py::arg("gt"), py::arg("squared_px") = false);
  m.def("fde", [](const Mat& p, const Mat& g, bool squared) {
    return fde(p, g, squared ? DisplacementMode::kSquaredPx : DisplacementMode::kEuclidean);
  }, py::arg("pred"), py::arg("gt"), py::arg("squared_px") = false);
  m.def("kde_nll", [](const std::vector<Mat>& samples, const Mat& gt, double floor) {
    KdeOptions o;
    o.bandwidth_floor = floor;
    return kde_nll(samples, gt, o).per_step;
  }, py::arg("samples"), py::arg("gt"), py::arg("bandwidth_floor") = 0.01);
}
