#include "rssiloc/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "rssiloc/error.hpp"
#include "rssiloc/rng.hpp"

namespace rssiloc {

std::string_view split_mode_name(SplitMode mode) { return mode == SplitMode::Sample ? "sample" : "block"; }

SplitMode parse_split_mode(std::string_view text) {
  if (text == "sample") return SplitMode::Sample;
  if (text == "block" || text == "track") return SplitMode::Block;
  throw Error(Errc::InvalidConfig, "unknown split mode '" + std::string(text) + "'");
}

std::vector<Fold> kfold_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::InvalidConfig, "k must be at least 2");
  if (n < static_cast<std::size_t>(k)) {
    throw Error(Errc::DatasetTooSmall, std::to_string(n) + " pairs cannot fill " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "kfold"));
  rng.shuffle(std::span(order));

  const auto kk = static_cast<std::size_t>(k);
  std::vector<Fold> folds(kk);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < kk; ++f) {
    const std::size_t size = n / kk + (f < n % kk ? 1 : 0);
    folds[f].test.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  for (std::size_t f = 0; f < kk; ++f) {
    for (std::size_t g = 0; g < kk; ++g) {
      if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].test.begin(), folds[g].test.end());
    }
    std::sort(folds[f].train.begin(), folds[f].train.end());
    std::sort(folds[f].test.begin(), folds[f].test.end());
  }
  return folds;
}

std::vector<Fold> block_split(std::size_t n, int k) {
  if (k < 2) throw Error(Errc::InvalidConfig, "k must be at least 2");
  if (n < static_cast<std::size_t>(k)) {
    throw Error(Errc::DatasetTooSmall, std::to_string(n) + " pairs cannot fill " + std::to_string(k) + " folds");
  }
  const auto kk = static_cast<std::size_t>(k);
  std::vector<Fold> folds(kk);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < kk; ++f) {
    const std::size_t size = n / kk + (f < n % kk ? 1 : 0);
    for (std::size_t i = 0; i < n; ++i) (i >= pos && i < pos + size ? folds[f].test : folds[f].train).push_back(i);
    pos += size;
  }
  return folds;
}

// ------------------------------------------------------------------ metrics

RegressionMetrics regression_metrics(std::span<const PointPx> predicted, std::span<const PointPx> truth,
                                     double scale_x, double scale_y) {
  if (predicted.size() != truth.size()) throw Error(Errc::ShapeMismatch, "prediction and truth counts differ");
  if (truth.empty()) throw Error(Errc::EmptyTestSet, "nothing to score");
  double sx = 0.0;
  double sy = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sx += std::abs(predicted[i].x - truth[i].x);
    sy += std::abs(predicted[i].y - truth[i].y);
  }
  const auto n = static_cast<double>(truth.size());
  RegressionMetrics m;
  m.mae_x_m = sx / n * scale_x / 1000.0;
  m.mae_y_m = sy / n * scale_y / 1000.0;
  m.mae_m = (m.mae_x_m + m.mae_y_m) / 2.0;
  m.count = truth.size();
  return m;
}

RegressionMetrics evaluate_regression(const model::TrainedModel& model, std::span<const TrainingPair> test) {
  if (test.empty()) throw Error(Errc::EmptyTestSet, "empty test set");
  std::vector<PointPx> predicted;
  std::vector<PointPx> truth;
  predicted.reserve(test.size());
  truth.reserve(test.size());
  for (const auto& p : test) {
    const auto out = model.predict(p.frame);
    if (!out.position) throw Error(Errc::InvalidConfig, "model does not regress positions");
    predicted.push_back({out.position->x_px, out.position->y_px});
    truth.push_back({p.target.x_px, p.target.y_px});
  }
  return regression_metrics(predicted, truth, model.meta.scale_x(), model.meta.scale_y());
}

RoomMetrics room_metrics(std::span<const std::optional<int>> predicted, std::span<const std::optional<int>> truth,
                         const std::vector<std::string>& room_names) {
  if (predicted.size() != truth.size()) throw Error(Errc::ShapeMismatch, "prediction and truth counts differ");
  RoomMetrics m;
  m.room_names = room_names;
  const std::size_t n_rooms = room_names.size();
  m.confusion.assign(n_rooms, std::vector<std::size_t>(n_rooms, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!truth[i]) {
      ++m.excluded;
      continue;
    }
    const auto t = static_cast<std::size_t>(*truth[i]);
    if (t >= n_rooms) throw Error(Errc::IndexOutOfRange, "room index " + std::to_string(t));
    ++m.total;
    if (!predicted[i]) {
      ++m.predicted_none;
      continue;
    }
    const auto p = static_cast<std::size_t>(*predicted[i]);
    if (p >= n_rooms) throw Error(Errc::IndexOutOfRange, "room index " + std::to_string(p));
    ++m.confusion[t][p];
    if (p == t) ++m.correct;
  }
  if (m.total == 0) throw Error(Errc::EmptyTestSet, "no test target lies inside a room");
  m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.total);
  return m;
}

RoomMetrics evaluate_rooms(const model::TrainedModel& model, std::span<const TrainingPair> test,
                           const FloorPlan& plan) {
  if (test.empty()) throw Error(Errc::EmptyTestSet, "empty test set");
  std::vector<std::optional<int>> predicted;
  std::vector<std::optional<int>> truth;
  for (const auto& p : test) {
    const auto out = model.predict(p.frame);
    if (out.rooms) {
      predicted.emplace_back(static_cast<int>(out.rooms->argmax()));
    } else {
      const auto room = room_of(PointPx{out.position->x_px, out.position->y_px}, plan);
      predicted.push_back(room ? std::optional<int>(room->index) : std::nullopt);
    }
    truth.push_back(p.target.room);
  }
  std::vector<std::string> names;
  for (const auto& r : plan.rooms) names.push_back(r.label.name);
  return room_metrics(predicted, truth, names);
}

// ------------------------------------------------------------------ external estimates

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_coordinate(std::string_view s, std::size_t line) {
  s = trim(s);
  if (s.empty() || s == "-" || s == "nan" || s == "NaN" || s == "NA") return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(Errc::MalformedRecord, "estimate line " + std::to_string(line) + ": bad coordinate '" +
                                           std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::vector<ExternalEstimate> parse_estimates_csv(const std::string& text) {
  std::vector<ExternalEstimate> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
      const auto comma = view.find(',', start);
      cols.push_back(view.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (trim(cols[0]) == "t_ms") continue;
    if (cols.size() < 3) {
      // A bare timestamp is a lost estimate too.
      if (cols.size() != 1) throw Error(Errc::MalformedRecord, "estimate line " + std::to_string(line_no));
      cols.resize(3);
    }
    ExternalEstimate e;
    e.t_ms = parse_epoch_ms(trim(cols[0]), EpochUnit::Milliseconds);
    const auto x = parse_coordinate(cols[1], line_no);
    const auto y = parse_coordinate(cols[2], line_no);
    if (x && y) e.position = PointPx{*x, *y};
    out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t_ms < b.t_ms; });
  return out;
}

std::vector<ExternalEstimate> load_estimates_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_estimates_csv(buf.str());
}

std::string ExternalScore::to_text() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << "matched " << matched << ", scored " << scored << ", lost " << lost << ", outside labels "
      << outside_labels << "\n";
  if (metrics) {
    out << "MAE x " << metrics->mae_x_m << " m, y " << metrics->mae_y_m << " m, combined " << metrics->mae_m
        << " m\n";
  } else {
    out << "MAE undefined (no scored estimates)\n";
  }
  out.precision(1);
  out << "lost estimates " << 100.0 * lost_fraction << "%\n";
  return out.str();
}

ExternalScore score_external_estimates(std::span<const ExternalEstimate> estimates,
                                       std::span<const LabelSample> labels, const FloorPlan& plan,
                                       std::int64_t max_gap_ms) {
  std::map<std::string, std::vector<LabelSample>> sessions;
  for (const auto& l : labels) sessions[l.session_id].push_back(l);
  for (auto& [id, track] : sessions) {
    std::stable_sort(track.begin(), track.end(), [](const auto& a, const auto& b) { return a.t_ms < b.t_ms; });
  }

  ExternalScore score;
  std::vector<PointPx> predicted;
  std::vector<PointPx> truth;
  for (const auto& e : estimates) {
    std::optional<PointPx> gt;
    for (const auto& [id, track] : sessions) {
      gt = interpolate_label(track, e.t_ms, max_gap_ms);
      if (gt) break;
    }
    if (!gt) {
      ++score.outside_labels;
      continue;
    }
    ++score.matched;
    if (!e.position) {
      ++score.lost;
      continue;
    }
    ++score.scored;
    predicted.push_back(*e.position);
    truth.push_back(*gt);
  }
  if (score.matched == 0) throw Error(Errc::NoOverlap, "no estimate falls inside a labeled span");
  score.lost_fraction = static_cast<double>(score.lost) / static_cast<double>(score.matched);
  if (score.scored > 0) score.metrics = regression_metrics(predicted, truth, plan.scale_x(), plan.scale_y());
  return score;
}

// ------------------------------------------------------------------ matrix

std::string ExperimentConfig::key() const {
  std::ostringstream out;
  out << tech_name(tech) << '/' << window_mode_name(window.mode) << '/' << format_number(window.total_span_s) << '/'
      << format_number(window.sub_span_s) << '/' << (window.steps_override ? *window.steps_override : 0) << '/'
      << model::model_kind_name(model.kind) << '/'
      << (model.head == model::HeadKind::RegressionXY ? "xy" : "room") << '/' << k_folds << '/'
      << split_mode_name(split);
  return out.str();
}

namespace {

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sigma(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (const double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string EvalReport::to_csv(bool include_wall_time) const {
  std::ostringstream out;
  out << "flat,tech,windowing,model,head,window_s,n_steps,folds,pairs,discard_fraction,mae_x_m,mae_y_m,mae_m,"
         "fold_sigma_m,room_accuracy,lost_fraction";
  if (include_wall_time) out << ",wall_time_s";
  out << ",status\n";
  for (const auto& r : rows) {
    out << csv_field(r.flat) << ',' << tech_name(r.tech) << ',' << window_mode_name(r.mode) << ','
        << model::model_kind_name(r.model) << ',' << (r.head == model::HeadKind::RegressionXY ? "xy" : "room")
        << ',' << format_number(r.window_s) << ',' << r.n_steps << ',' << r.folds << ',' << r.pairs << ','
        << format_number(r.discard_fraction) << ',' << format_number(r.mae_x_m) << ',' << format_number(r.mae_y_m)
        << ',' << format_number(r.mae_m) << ',' << format_number(r.fold_sigma_m) << ','
        << opt_number(r.room_accuracy) << ',' << opt_number(r.lost_fraction);
    if (include_wall_time) out << ',' << format_number(r.wall_time_s);
    out << ',' << csv_field(r.status) << '\n';
  }
  return out.str();
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-20s %8s %9s %9s %9s %9s %8s  %s\n", "WINDOWING", "MODEL", "W. SIZE",
                "MAE_X m", "MAE_Y m", "MAE m", "sigma", "ROOM", "status");
  out << line;
  for (const auto& r : rows) {
    std::string room = r.room_accuracy ? std::to_string(static_cast<int>(std::lround(*r.room_accuracy * 100))) + "%"
                                       : "-";
    std::snprintf(line, sizeof line, "%-12s %-20s %8g %9.3f %9.3f %9.3f %9.3f %8s  %s\n",
                  std::string(window_mode_name(r.mode)).c_str(), std::string(model::model_kind_name(r.model)).c_str(),
                  r.window_s, r.mae_x_m, r.mae_y_m, r.mae_m, r.fold_sigma_m, room.c_str(), r.status.c_str());
    out << line;
  }
  return out.str();
}

void EvalReport::write_plot_data(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::map<std::string, std::vector<const ReportRow*>> series;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    series[std::string(window_mode_name(r.mode)) + "_" + std::string(model::model_kind_name(r.model))].push_back(&r);
  }
  std::ofstream trend(dir / "mae_vs_window.dat");
  trend << "# series window_s mae_m fold_sigma_m\n";
  for (auto& [name, items] : series) {
    std::stable_sort(items.begin(), items.end(), [](auto* a, auto* b) { return a->window_s < b->window_s; });
    for (const auto* r : items) {
      trend << name << ' ' << format_number(r->window_s) << ' ' << format_number(r->mae_m) << ' '
            << format_number(r->fold_sigma_m) << '\n';
    }
    trend << '\n';
  }
  std::ofstream bars(dir / "error_bars.dat");
  bars << "# row windowing model window_s mae_x_m mae_y_m mae_m fold_sigma_m\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.status != "ok") continue;
    bars << i << ' ' << window_mode_name(r.mode) << ' ' << model::model_kind_name(r.model) << ' '
         << format_number(r.window_s) << ' ' << format_number(r.mae_x_m) << ' ' << format_number(r.mae_y_m) << ' '
         << format_number(r.mae_m) << ' ' << format_number(r.fold_sigma_m) << '\n';
  }
  if (!trend || !bars) throw Error(Errc::Io, "cannot write plot data to " + dir.string());
}

EvalReport run_matrix(const LoadedDataset& data, const FloorPlan& plan, const std::string& tag,
                      const std::vector<ExperimentConfig>& configs, const MatrixOptions& options) {
  EvalReport report;
  std::map<std::string, TrainingSet> cache;

  for (const auto& cfg : configs) {
    const auto started = std::chrono::steady_clock::now();
    ReportRow row;
    row.flat = plan.name;
    row.tech = cfg.tech;
    row.mode = cfg.window.mode;
    row.model = cfg.model.kind;
    row.head = cfg.model.head;
    row.window_s = cfg.window.total_span_s;
    if (options.progress) options.progress(cfg.key());
    try {
      cfg.window.validate();
      row.n_steps = cfg.window.n_steps();
      const std::string set_key = std::string(tech_name(cfg.tech)) + "|" + cfg.window.describe();
      auto it = cache.find(set_key);
      if (it == cache.end()) {
        it = cache.emplace(set_key, generate_training_set(data, plan, cfg.tech, plan.roster(cfg.tech), tag,
                                                          cfg.window))
                 .first;
      }
      const TrainingSet& set = it->second;
      row.pairs = set.pairs.size();
      row.discard_fraction = set.report.discard_fraction();

      const std::uint64_t cell_seed = derive_seed(cfg.seed, cfg.key());
      std::vector<std::size_t> time_order(set.pairs.size());
      std::iota(time_order.begin(), time_order.end(), std::size_t{0});
      std::stable_sort(time_order.begin(), time_order.end(), [&](std::size_t a, std::size_t b) {
        return set.pairs[a].frame.t_star_ms < set.pairs[b].frame.t_star_ms;
      });
      auto folds = cfg.split == SplitMode::Sample ? kfold_split(set.pairs.size(), cfg.k_folds, cell_seed)
                                                  : block_split(set.pairs.size(), cfg.k_folds);
      if (cfg.split == SplitMode::Block) {
        for (auto& f : folds) {
          for (auto& i : f.train) i = time_order[i];
          for (auto& i : f.test) i = time_order[i];
        }
      }
      const std::size_t n_folds = options.max_folds > 0
                                      ? std::min(folds.size(), static_cast<std::size_t>(options.max_folds))
                                      : folds.size();

      std::vector<double> mx, my, mm, acc;
      for (std::size_t f = 0; f < n_folds; ++f) {
        std::vector<TrainingPair> train_pairs;
        std::vector<TrainingPair> test_pairs;
        for (const auto i : folds[f].train) train_pairs.push_back(set.pairs[i]);
        for (const auto i : folds[f].test) test_pairs.push_back(set.pairs[i]);
        model::ModelConfig mc = cfg.model;
        mc.seed = derive_seed(cell_seed, "fold" + std::to_string(f));
        const auto trained = model::train(mc, set.meta, train_pairs, options.train);
        if (mc.head == model::HeadKind::RegressionXY) {
          const auto m = evaluate_regression(trained, test_pairs);
          mx.push_back(m.mae_x_m);
          my.push_back(m.mae_y_m);
          mm.push_back(m.mae_m);
        }
        if (options.room_accuracy && !plan.rooms.empty()) {
          try {
            acc.push_back(evaluate_rooms(trained, test_pairs, plan).accuracy);
          } catch (const Error& e) {
            if (e.code() != Errc::EmptyTestSet) throw;
          }
        }
      }
      row.folds = static_cast<int>(n_folds);
      if (!mx.empty()) {
        row.mae_x_m = mean_of(mx);
        row.mae_y_m = mean_of(my);
        row.mae_m = (row.mae_x_m + row.mae_y_m) / 2.0;
        row.fold_sigma_m = sample_sigma(mm);
      }
      if (!acc.empty()) row.room_accuracy = mean_of(acc);
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    report.rows.push_back(std::move(row));
  }
  return report;
}

double default_sub_span_s(double total_span_s) { return total_span_s >= 20.0 ? 2.0 : 1.0; }

namespace {

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(sep, start);
    const auto item = trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!item.empty()) out.emplace_back(item);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::vector<ExperimentConfig> named_matrix(const std::string& name, Tech tech, std::uint64_t seed, int k_folds) {
  using model::ModelKind;
  std::vector<ModelKind> models;
  std::vector<double> windows;
  std::vector<WindowMode> modes{WindowMode::PastAndFuture};
  if (name == "default") {
    models = {ModelKind::Cnn, ModelKind::Lstm, ModelKind::CnnLstm, ModelKind::Knn, ModelKind::Rf};
    windows = {4, 12, 20, 30};
  } else if (name == "full") {
    models = {ModelKind::Cnn, ModelKind::Lstm, ModelKind::CnnLstm, ModelKind::Knn, ModelKind::Rf};
    windows = {4, 12, 20, 30};
    modes = {WindowMode::OnlyPast, WindowMode::PastAndFuture};
  } else if (name == "quick") {
    models = {ModelKind::Cnn, ModelKind::CnnLstm, ModelKind::Knn, ModelKind::Rf};
    windows = {4, 12};
  } else {
    for (const auto& part : split_list(name, ';')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos) throw Error(Errc::InvalidConfig, "unknown matrix '" + name + "'");
      const std::string key = part.substr(0, eq);
      const auto values = split_list(std::string_view(part).substr(eq + 1), ',');
      if (key == "models") {
        for (const auto& v : values) models.push_back(model::parse_model_kind(v));
      } else if (key == "windows") {
        for (const auto& v : values) windows.push_back(std::stod(v));
      } else if (key == "modes") {
        modes.clear();
        for (const auto& v : values) modes.push_back(parse_window_mode(v));
      } else {
        throw Error(Errc::InvalidConfig, "unknown matrix key '" + key + "'");
      }
    }
    if (models.empty() || windows.empty() || modes.empty()) {
      throw Error(Errc::InvalidConfig, "matrix '" + name + "' has an empty axis");
    }
  }

  std::vector<ExperimentConfig> out;
  for (const auto mode : modes) {
    for (const auto w : windows) {
      for (const auto kind : models) {
        ExperimentConfig c;
        c.tech = tech;
        c.window.total_span_s = w;
        c.window.sub_span_s = default_sub_span_s(w);
        c.window.mode = mode;
        c.model.kind = kind;
        c.k_folds = k_folds;
        c.seed = seed;
        out.push_back(c);
      }
    }
  }
  return out;
}

}  // namespace rssiloc
