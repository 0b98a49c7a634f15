#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rssiloc/error.hpp"
#include "rssiloc/experiment.hpp"
#include "rssiloc/model/train.hpp"
#include "rssiloc/segmentation.hpp"
#include "rssiloc/synthetic.hpp"

namespace py = pybind11;
using namespace rssiloc;

namespace {

using Series = std::vector<std::pair<std::int64_t, double>>;

SampleStream to_stream(const Series& series) {
  SampleStream s;
  std::uint64_t seq = 0;
  for (const auto& [t, rssi] : series) {
    RssiSample r;
    r.t_ms = t;
    r.rssi_dbm = rssi;
    r.seq = seq++;
    s.append(r);
  }
  return s;
}

WindowSpec make_spec(double total_s, double sub_s, const std::string& mode, std::optional<int> steps) {
  WindowSpec w;
  w.total_span_s = total_s;
  w.sub_span_s = sub_s > 0 ? sub_s : default_sub_span_s(total_s);
  w.mode = parse_window_mode(mode);
  w.steps_override = steps;
  w.validate();
  return w;
}

std::optional<FeatureFrame> frame_from_series(const std::vector<Series>& sources, const WindowSpec& spec,
                                              std::int64_t t_star) {
  std::vector<SampleStream> streams;
  streams.reserve(sources.size());
  for (const auto& s : sources) streams.push_back(to_stream(s));
  std::vector<const SampleStream*> ptrs;
  for (const auto& s : streams) ptrs.push_back(&s);
  return try_build_feature_frame(ptrs, spec, t_star);
}

LoadedDataset load_flat(const FloorPlan& plan, std::optional<Tech> tech) {
  LoadOptions lo;
  lo.only_tech = tech;
  return load_dataset(plan, lo);
}

std::vector<LabelSample> to_labels(const std::vector<std::tuple<std::int64_t, double, double>>& rows) {
  std::vector<LabelSample> labels;
  for (const auto& [t, x, y] : rows) labels.push_back({t, x, y, {}});
  return labels;
}

// Python-side handle; the model itself is move-only.
struct PyModel {
  std::shared_ptr<model::TrainedModel> m;

  std::optional<std::pair<double, double>> predict(const std::vector<Series>& sources, std::int64_t t_star) const {
    const auto frame = frame_from_series(sources, m->meta.window, t_star);
    if (!frame) return std::nullopt;
    const auto p = m->predict(*frame);
    if (!p.position) return std::nullopt;
    return std::pair(p.position->x_px, p.position->y_px);
  }
};

}  // namespace

PYBIND11_MODULE(_rssiloc, mod) {
  static py::exception<Error> error_type(mod, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type.ptr())(e.what());
      exc.attr("code") = std::string(errc_name(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  mod.attr("RSSI_FLOOR_DBM") = kRssiFloorDbm;
  mod.attr("MAX_LABEL_GAP_MS") = kMaxLabelGapMs;

  mod.def("parse_epoch_ms", [](const std::string& token, const std::string& unit) {
    const EpochUnit u = unit == "s" ? EpochUnit::Seconds : unit == "ms" ? EpochUnit::Milliseconds : EpochUnit::Auto;
    if (unit != "s" && unit != "ms" && unit != "auto") throw Error(Errc::InvalidConfig, "unit must be auto, s or ms");
    return parse_epoch_ms(token, u);
  }, py::arg("token"), py::arg("unit") = "auto");

  mod.def("interpolate_label", [](const std::vector<std::tuple<std::int64_t, double, double>>& labels,
                                  std::int64_t t_star, std::int64_t max_gap_ms) -> std::optional<std::pair<double, double>> {
    const auto p = interpolate_label(to_labels(labels), t_star, max_gap_ms);
    if (!p) return std::nullopt;
    return std::pair(p->x, p->y);
  }, py::arg("labels"), py::arg("t_star_ms"), py::arg("max_gap_ms") = kMaxLabelGapMs);

  mod.def("aggregate_window", [](const Series& samples, std::int64_t lo, std::int64_t hi)
              -> std::optional<std::tuple<double, double, double>> {
    const auto a = aggregate_window(to_stream(samples), Interval{lo, hi});
    if (!a) return std::nullopt;
    return std::tuple(a->mean, a->max, a->min);
  }, py::arg("samples"), py::arg("lo_ms"), py::arg("hi_ms"));

  mod.def("sub_windows", [](double total_s, double sub_s, const std::string& mode, std::int64_t t_star,
                            std::optional<int> steps) {
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    for (const auto& iv : make_spec(total_s, sub_s, mode, steps).sub_windows(t_star)) out.emplace_back(iv.lo, iv.hi);
    return out;
  }, py::arg("total_s"), py::arg("sub_s"), py::arg("mode"), py::arg("t_star_ms"), py::arg("steps") = py::none());

  // values and mask shaped (sources, 3, steps); slots are mean, max, min.
  mod.def("build_feature_frame", [](const std::vector<Series>& sources, double total_s, double sub_s,
                                    const std::string& mode, std::int64_t t_star, std::optional<int> steps) {
    const auto spec = make_spec(total_s, sub_s, mode, steps);
    const auto frame = frame_from_series(sources, spec, t_star);
    if (!frame) throw Error(Errc::AllMissing, "no samples in any sub-window");
    const std::vector<py::ssize_t> shape{frame->n_sources, kAggregationCount, frame->n_steps};
    py::array_t<double> values(shape);
    py::array_t<bool> missing(shape);
    std::copy(frame->values.begin(), frame->values.end(), values.mutable_data());
    auto* m = missing.mutable_data();
    for (std::size_t i = 0; i < frame->missing.size(); ++i) m[i] = frame->missing[i] != 0;
    return py::make_tuple(values, missing);
  }, py::arg("sources"), py::arg("total_s"), py::arg("sub_s"), py::arg("mode"), py::arg("t_star_ms"),
     py::arg("steps") = py::none());

  mod.def("floorplan_json", [](const std::filesystem::path& path) { return floorplan_to_json_text(load_floorplan(path)); },
          py::arg("path"));

  mod.def("px_to_mm", [](const std::filesystem::path& flat, double x, double y) {
    const auto p = px_to_mm({x, y}, load_floorplan(flat));
    return std::pair(p.x, p.y);
  }, py::arg("flat"), py::arg("x_px"), py::arg("y_px"));

  mod.def("write_synthetic", [](const std::filesystem::path& dir, int sessions, double duration_s, int anchors,
                                double noise_db, std::uint64_t seed, const std::string& tech) {
    SyntheticOptions o;
    o.sessions = sessions;
    o.session_duration_s = duration_s;
    o.anchors = anchors;
    o.noise_sigma_db = noise_db;
    o.seed = seed;
    o.tech = parse_tech(tech);
    write_synthetic(generate_synthetic(o), dir);
    return dir / "flat.json";
  }, py::arg("dir"), py::arg("sessions") = 3, py::arg("duration_s") = 600.0, py::arg("anchors") = 4,
     py::arg("noise_db") = 2.0, py::arg("seed") = 11, py::arg("tech") = "uwb");

  mod.def("evaluate", [](const std::filesystem::path& flat, const std::string& matrix, const std::string& tech_name,
                         int folds, int max_folds, int max_epochs, std::uint64_t seed, bool relaxed_shapes,
                         const std::string& split) {
    const auto plan = load_floorplan(flat);
    const Tech tech = parse_tech(tech_name);
    const auto data = load_flat(plan, tech);
    auto configs = named_matrix(matrix, tech, seed, folds);
    for (auto& c : configs) {
      c.split = parse_split_mode(split);
      c.model.reference_shapes = !relaxed_shapes;
    }
    MatrixOptions mo;
    mo.train.max_epochs = max_epochs;
    mo.max_folds = max_folds;
    py::gil_scoped_release unlock;
    return run_matrix(data, plan, plan.default_tag, configs, mo).to_csv();
  }, py::arg("flat"), py::arg("matrix") = "quick", py::arg("tech") = "uwb", py::arg("folds") = 10,
     py::arg("max_folds") = 0, py::arg("max_epochs") = 200, py::arg("seed") = 7, py::arg("relaxed_shapes") = false,
     py::arg("split") = "sample");

  mod.def("score_estimates", [](const std::filesystem::path& flat, const std::filesystem::path& estimates,
                                std::int64_t max_gap_ms) {
    const auto plan = load_floorplan(flat);
    const auto data = load_flat(plan, std::nullopt);
    const auto s = score_external_estimates(load_estimates_csv(estimates), data.labels, plan, max_gap_ms);
    py::dict d;
    d["matched"] = s.matched;
    d["scored"] = s.scored;
    d["lost"] = s.lost;
    d["outside_labels"] = s.outside_labels;
    d["lost_fraction"] = s.lost_fraction;
    d["mae_m"] = s.metrics ? py::cast(s.metrics->mae_m) : py::none();
    return d;
  }, py::arg("flat"), py::arg("estimates"), py::arg("max_gap_ms") = kMaxLabelGapMs);

  py::class_<PyModel>(mod, "Model")
      .def_static("train", [](const std::filesystem::path& flat, const std::string& kind, double window_s, double sub_s,
                              const std::string& mode, const std::string& tech_name, int max_epochs, std::uint64_t seed,
                              bool relaxed_shapes) {
        const auto plan = load_floorplan(flat);
        const Tech tech = parse_tech(tech_name);
        const auto data = load_flat(plan, tech);
        const auto set = generate_training_set(data, plan, tech, plan.roster(tech), plan.default_tag,
                                               make_spec(window_s, sub_s, mode, std::nullopt));
        model::ModelConfig c;
        c.kind = model::parse_model_kind(kind);
        c.seed = seed;
        c.reference_shapes = !relaxed_shapes;
        model::TrainOptions o;
        o.max_epochs = max_epochs;
        py::gil_scoped_release unlock;
        return PyModel{std::make_shared<model::TrainedModel>(model::train(c, set, o))};
      }, py::arg("flat"), py::arg("kind") = "cnn_lstm", py::arg("window_s") = 12.0, py::arg("sub_s") = 0.0,
         py::arg("mode") = "past+future", py::arg("tech") = "uwb", py::arg("max_epochs") = 200, py::arg("seed") = 7,
         py::arg("relaxed_shapes") = false)
      .def_static("load", [](const std::filesystem::path& path) {
        return PyModel{std::make_shared<model::TrainedModel>(model::load_model(path))};
      }, py::arg("path"))
      .def("save", [](const PyModel& self, const std::filesystem::path& path) { model::save_model(*self.m, path); },
           py::arg("path"))
      .def_property_readonly("kind", [](const PyModel& self) { return std::string(model::model_kind_name(self.m->config.kind)); })
      .def_property_readonly("roster", [](const PyModel& self) { return self.m->meta.roster; })
      .def_property_readonly("window", [](const PyModel& self) { return self.m->meta.window.describe(); })
      .def_property_readonly("train_size", [](const PyModel& self) { return self.m->info.train_size; })
      .def("predict", &PyModel::predict, py::arg("sources"), py::arg("t_star_ms"),
           "Per-anchor [(t_ms, rssi)] lists in roster order; (x_px, y_px) or None.");
}
