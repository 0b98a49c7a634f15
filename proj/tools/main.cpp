#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rssiloc/dataset_file.hpp"
#include "rssiloc/error.hpp"
#include "rssiloc/experiment.hpp"
#include "rssiloc/model/train.hpp"
#include "rssiloc/service/server.hpp"
#include "rssiloc/synthetic.hpp"

using namespace rssiloc;

namespace {

struct WindowArgs {
  double total_s = 12.0;
  double sub_s = 0.0;  // 0: default for the span
  std::string mode = "past+future";
  int steps = 0;

  void add(CLI::App* app) {
    app->add_option("--window", total_s, "Total window span in seconds")->check(CLI::PositiveNumber);
    app->add_option("--sub", sub_s, "Sub-window span in seconds (default 1 s, or 2 s from 20 s up)");
    app->add_option("--mode", mode, "only-past or past+future");
    app->add_option("--steps", steps, "Override the number of sub-windows");
  }
  WindowSpec spec() const {
    WindowSpec w;
    w.total_span_s = total_s;
    w.sub_span_s = sub_s > 0 ? sub_s : default_sub_span_s(total_s);
    w.mode = parse_window_mode(mode);
    if (steps > 0) w.steps_override = steps;
    w.validate();
    return w;
  }
};

struct TrainArgs {
  std::string model = "cnn_lstm";
  std::string head = "xy";
  int epochs = 200;
  int batch = 64;
  int patience = 20;
  double lr = 1e-3;
  double val_fraction = 0.1;
  std::uint64_t seed = 7;
  bool relaxed = false;
  bool mask = false;
  bool bce = false;
  int knn_k = 5;
  int trees = 100;

  void add(CLI::App* app, bool with_model = true) {
    if (with_model) {
      app->add_option("--model", model, "cnn, lstm, cnn_lstm, cnn_lstm_attention, knn or rf");
      app->add_option("--head", head, "xy (regression) or room (classification)");
    }
    app->add_option("--max-epochs,--epochs", epochs, "Epoch cap")->check(CLI::PositiveNumber);
    app->add_option("--batch", batch, "Mini-batch size")->check(CLI::PositiveNumber);
    app->add_option("--patience", patience, "Early-stopping patience in epochs");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--val-fraction", val_fraction, "Share of pairs held out for early stopping");
    app->add_option("--seed", seed, "Random seed");
    app->add_flag("--mask-channels", mask, "Feed the missing-value mask as extra channels");
    app->add_flag("--bce", bce, "Binary cross-entropy for the room head");
    app->add_option("--knn-k", knn_k, "Neighbours for the kNN baseline");
    app->add_option("--trees", trees, "Trees per coordinate for the RF baseline");
  }
  model::ModelConfig config() const {
    model::ModelConfig c;
    c.kind = model::parse_model_kind(model);
    c.head = head == "room" ? model::HeadKind::ClassifyRoom : model::HeadKind::RegressionXY;
    if (head != "room" && head != "xy") throw Error(Errc::InvalidConfig, "head must be xy or room");
    c.use_mask_channels = mask;
    c.binary_cross_entropy = bce;
    c.seed = seed;
    c.knn_k = knn_k;
    c.rf.n_trees = trees;
    c.reference_shapes = !relaxed;
    return c;
  }
  model::TrainOptions options(bool verbose) const {
    model::TrainOptions o;
    o.max_epochs = epochs;
    o.batch = batch;
    o.patience = patience;
    o.adam.learning_rate = lr;
    o.val_fraction = val_fraction;
    if (verbose) {
      o.on_epoch = [](const model::EpochStats& s) {
        std::cerr << "epoch " << s.epoch << " train " << s.train_loss << " val " << s.val_loss << "\n";
      };
    }
    return o;
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << text;
  if (!out) throw Error(Errc::Io, "write failed: " + path);
}

std::pair<std::string, int> parse_listen(const std::string& text) {
  const auto colon = text.rfind(':');
  std::string host = colon == std::string::npos ? text : text.substr(0, colon);
  const std::string port = colon == std::string::npos ? "8080" : text.substr(colon + 1);
  if (host.empty()) host = "0.0.0.0";
  try {
    return {host, std::stoi(port)};
  } catch (const std::exception&) {
    throw Error(Errc::InvalidConfig, "bad listen address '" + text + "'");
  }
}

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RSSI fingerprint localisation: ingest, segment, train, evaluate and serve"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Progress on stderr");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse a flat's recorded files and report what was read");
  std::string flat_path;
  bool strict = false;
  std::string store_dir;
  ingest->add_option("--flat", flat_path, "Flat config (JSON)")->required();
  ingest->add_flag("--strict", strict, "Stop at the first malformed line");
  ingest->add_option("--store", store_dir, "Also write the parsed streams as record logs here");

  // segment
  auto* segment = app.add_subcommand("segment", "Build the training set (frames + interpolated targets)");
  WindowArgs seg_window;
  std::string tech_name_arg = "uwb";
  std::string tag;
  std::string out_path;
  double grid_step = 1.0;
  segment->add_option("--flat", flat_path, "Flat config (JSON)")->required();
  segment->add_option("--tech", tech_name_arg, "uwb or ble");
  segment->add_option("--tag", tag, "Tag id (default from the flat)");
  segment->add_option("--step", grid_step, "t* grid step in seconds");
  segment->add_option("--out", out_path, "Training-set file")->required();
  seg_window.add(segment);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a training-set file");
  std::string data_path;
  TrainArgs train_args;
  train_cmd->add_option("--data", data_path, "Training-set file from 'segment'")->required();
  train_cmd->add_option("--out", out_path, "Model file")->required();
  train_cmd->add_flag("--relaxed-shapes", train_args.relaxed, "Allow layer shapes other than the reference ones");
  train_args.add(train_cmd);

  // predict
  auto* predict = app.add_subcommand("predict", "Run a model over a flat's recordings; writes t_ms,x_px,y_px CSV");
  std::string model_path;
  predict->add_option("--model", model_path, "Model file")->required();
  predict->add_option("--flat", flat_path, "Flat config (JSON)")->required();
  predict->add_option("--tag", tag, "Tag id (default: the model's)");
  predict->add_option("--step", grid_step, "Prediction grid step in seconds");
  predict->add_option("--out", out_path, "CSV output (default stdout)");

  // eval
  auto* eval = app.add_subcommand("eval", "Cross-validated experiment matrix");
  std::string matrix = "default";
  int folds = 10;
  int max_folds = 0;
  std::string split = "sample";
  std::string plots_dir;
  bool wall_time = false;
  bool no_rooms = false;
  TrainArgs eval_args;
  eval->add_option("--flat", flat_path, "Flat config (JSON)")->required();
  eval->add_option("--tech", tech_name_arg, "uwb or ble");
  eval->add_option("--tag", tag, "Tag id (default from the flat)");
  eval->add_option("--matrix", matrix, "default, full, quick, or models=..;windows=..;modes=..");
  eval->add_option("--folds", folds, "k for k-fold cross-validation");
  eval->add_option("--max-folds", max_folds, "Run only the first n folds of each cell");
  eval->add_option("--split", split, "sample (shuffled) or block (contiguous in time)");
  eval->add_option("--out", out_path, "CSV report (default stdout)");
  eval->add_option("--emit-plots", plots_dir, "Directory for plot data series");
  eval->add_flag("--wall-time", wall_time, "Add the machine-dependent wall_time_s column");
  eval->add_flag("--no-room-accuracy", no_rooms, "Skip room accuracy");
  eval->add_flag("--relaxed-shapes", eval_args.relaxed, "Allow layer shapes other than the reference ones");
  eval_args.add(eval, false);

  // score-external
  auto* score = app.add_subcommand("score-external", "Score external position estimates against the labels");
  std::string estimates_path;
  score->add_option("--flat", flat_path, "Flat config (JSON) whose label files are the truth")->required();
  score->add_option("--estimates", estimates_path, "CSV t_ms,x_px,y_px; empty coordinates mark lost")->required();
  std::int64_t max_gap = kMaxLabelGapMs;
  score->add_option("--max-gap-ms", max_gap, "Widest label bracket that still interpolates");

  // serve
  auto* serve = app.add_subcommand("serve", "Live prediction, sessions and the HTTP API");
  std::vector<std::string> flats;
  std::string bus_uri;
  std::string listen = ":8080";
  std::string data_dir = "sessions";
  bool delayed = false;
  bool recorded_time = false;
  int cadence_ms = 1000;
  serve->add_option("--flat", flats, "Flat config (JSON); repeat for several")->required();
  serve->add_option("--model", model_path, "Model file");
  serve->add_option("--bus", bus_uri, "mqtt://host[:port] or loopback://name");
  serve->add_option("--listen", listen, "host:port");
  serve->add_option("--data-dir", data_dir, "Session log directory");
  serve->add_flag("--delayed", delayed, "Accept past+future models, emitting late by the future half");
  serve->add_flag("--recorded-timestamps", recorded_time, "Stamp with payload epochs instead of arrival time");
  serve->add_option("--cadence-ms", cadence_ms, "Prediction cadence");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic path-loss flat");
  SyntheticOptions so;
  std::string synth_dir;
  std::string synth_tech = "uwb";
  synth->add_option("--out", synth_dir, "Output directory")->required();
  synth->add_option("--anchors", so.anchors, "Anchor count");
  synth->add_option("--sessions", so.sessions, "Number of tracks");
  synth->add_option("--duration", so.session_duration_s, "Seconds per track");
  synth->add_option("--noise", so.noise_sigma_db, "Shadowing sigma in dB");
  synth->add_option("--seed", so.seed, "Random seed");
  synth->add_option("--tech", synth_tech, "uwb or ble");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const auto plan = load_floorplan(flat_path);
      LoadOptions lo;
      lo.strict = strict;
      const auto data = load_dataset(plan, lo);
      std::cout << data.report.to_text() << "\n" << summarize_dataset(data, plan).to_text();
      if (!store_dir.empty()) write_store(data, store_dir);
    } else if (*segment) {
      const auto plan = load_floorplan(flat_path);
      const Tech tech = parse_tech(tech_name_arg);
      LoadOptions lo;
      lo.only_tech = tech;
      const auto data = load_dataset(plan, lo);
      GridOptions grid;
      grid.step_s = grid_step;
      const auto set = generate_training_set(data, plan, tech, plan.roster(tech), tag.empty() ? plan.default_tag : tag,
                                             seg_window.spec(), grid);
      save_training_set(set, out_path);
      const auto& r = set.report;
      std::cout << "grid points " << r.grid_points << ", kept " << r.kept << ", label gaps " << r.gap_dropped
                << ", all-missing " << r.all_missing_dropped << ", discarded " << format_number(r.discard_fraction())
                << "\n";
    } else if (*train_cmd) {
      const auto set = load_training_set(data_path);
      const auto m = model::train(train_args.config(), set, train_args.options(verbose));
      model::save_model(m, out_path);
      std::cout << "trained " << model::model_kind_name(m.config.kind) << " on " << m.info.train_size << " pairs";
      if (model::is_neural(m.config.kind)) {
        std::cout << ", " << m.info.epochs_run << " epochs, best validation loss " << m.info.best_val_loss;
      }
      std::cout << "\n";
    } else if (*predict) {
      const auto m = model::load_model(model_path);
      const auto plan = load_floorplan(flat_path);
      LoadOptions lo;
      lo.only_tech = m.meta.tech;
      const auto data = load_dataset(plan, lo);
      const std::string t = tag.empty() ? m.meta.tag_id : tag;
      const auto streams = data.for_roster(m.meta.roster, t);
      std::int64_t lo_ms = INT64_MAX, hi_ms = INT64_MIN;
      for (const auto* s : streams) {
        if (s->empty()) continue;
        lo_ms = std::min(lo_ms, s->samples().front().t_ms);
        hi_ms = std::max(hi_ms, s->samples().back().t_ms);
      }
      if (lo_ms > hi_ms) throw Error(Errc::EmptyDataset, "no samples for tag " + t);
      std::ostringstream csv;
      csv << "t_ms,x_px,y_px\n";
      const auto step = static_cast<std::int64_t>(grid_step * 1000.0);
      if (step <= 0) throw Error(Errc::InvalidConfig, "step must be positive");
      for (std::int64_t ts = lo_ms - lo_ms % step + step; ts <= hi_ms; ts += step) {
        const auto frame = try_build_feature_frame(streams, m.meta.window, ts, t);
        csv << ts << ",";
        if (frame) {
          const auto p = m.predict(*frame);
          if (p.position) csv << format_number(p.position->x_px) << "," << format_number(p.position->y_px);
          else csv << ",";
        } else {
          csv << ",";
        }
        csv << "\n";
      }
      if (out_path.empty()) std::cout << csv.str();
      else write_file(out_path, csv.str());
    } else if (*eval) {
      const auto plan = load_floorplan(flat_path);
      const Tech tech = parse_tech(tech_name_arg);
      LoadOptions lo;
      lo.only_tech = tech;
      const auto data = load_dataset(plan, lo);
      auto configs = named_matrix(matrix, tech, eval_args.seed, folds);
      const auto base = eval_args.config();
      for (auto& c : configs) {
        c.split = parse_split_mode(split);
        const auto kind = c.model.kind;
        c.model = base;
        c.model.kind = kind;
      }
      MatrixOptions mo;
      mo.train = eval_args.options(false);
      mo.max_folds = max_folds;
      mo.room_accuracy = !no_rooms;
      if (verbose) mo.progress = [](const std::string& line) { std::cerr << line << "\n"; };
      const auto report = run_matrix(data, plan, tag.empty() ? plan.default_tag : tag, configs, mo);
      const auto csv = report.to_csv(wall_time);
      if (out_path.empty()) std::cout << csv;
      else write_file(out_path, csv);
      if (verbose) std::cerr << report.to_text();
      if (!plots_dir.empty()) report.write_plot_data(plots_dir);
    } else if (*score) {
      const auto plan = load_floorplan(flat_path);
      LoadOptions lo;
      const auto data = load_dataset(plan, lo);
      const auto est = load_estimates_csv(estimates_path);
      std::cout << score_external_estimates(est, data.labels, plan, max_gap).to_text();
    } else if (*serve) {
      service::ServiceOptions so2;
      for (const auto& f : flats) so2.flats.push_back(load_floorplan(f));
      if (!model_path.empty()) so2.model_path = model_path;
      if (!bus_uri.empty()) so2.bus_uri = bus_uri;
      so2.timestamps = recorded_time ? TimestampMode::Recorded : TimestampMode::Live;
      so2.data_dir = data_dir;
      so2.delayed = delayed;
      so2.cadence = std::chrono::milliseconds(cadence_ms);
      service::Service svc(std::move(so2));
      service::HttpApi api(svc);
      const auto [host, port] = parse_listen(listen);
      const int bound = api.bind(host, port);
      svc.start();
      std::cerr << "listening on " << host << ":" << bound << "\n";
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::atomic<bool> done{false};
      std::thread watcher([&] {
        while (!g_stop && !done) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        api.stop();
      });
      api.listen();
      done = true;
      watcher.join();
      svc.stop();
    } else if (*synth) {
      so.tech = parse_tech(synth_tech);
      const auto flat = generate_synthetic(so);
      write_synthetic(flat, synth_dir);
      std::cout << "wrote " << (std::filesystem::path(synth_dir) / "flat.json").string() << " ("
                << flat.data.sample_count() << " samples, " << flat.data.labels.size() << " labels)\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
