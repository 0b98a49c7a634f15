// One line per acceptance criterion: "criterion N: PASS|FAIL|N/A <detail>".
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <numeric>
#include <span>
#include <sstream>

#include <unistd.h>

#include "rssiloc/error.hpp"
#include "rssiloc/experiment.hpp"
#include "rssiloc/model/grad_check.hpp"
#include "rssiloc/rng.hpp"
#include "rssiloc/segmentation.hpp"
#include "rssiloc/synthetic.hpp"

using namespace rssiloc;
namespace fs = std::filesystem;

namespace {

enum class Verdict { Pass, Fail, NotApplicable };

struct Outcome {
  Verdict verdict = Verdict::Fail;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("rssiloc_acceptance_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// 1 ---------------------------------------------------------------------------

FeatureFrame random_frame(int sources, int steps, std::uint64_t seed) {
  Rng rng(seed);
  FeatureFrame f;
  f.n_sources = sources;
  f.n_steps = steps;
  f.values.assign(static_cast<std::size_t>(sources * kAggregationCount * steps), kRssiFloorDbm);
  f.missing.assign(f.values.size(), 1);
  for (int s = 0; s < sources; ++s) {
    for (int t = 0; t < steps; ++t) {
      if (rng.uniform() < 0.2) continue;
      const double lo = rng.uniform(-95, -60);
      const double hi = lo + rng.uniform(0, 8);
      f.values[f.index(s, kMeanSlot, t)] = rng.uniform(lo, hi);
      f.values[f.index(s, kMaxSlot, t)] = hi;
      f.values[f.index(s, kMinSlot, t)] = lo;
      for (int k = 0; k < kAggregationCount; ++k) f.missing[f.index(s, k, t)] = 0;
    }
  }
  return f;
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const auto frame = random_frame(4, 6, 3);
  const TargetPoint target{120, 300, 0.26, 0.4, 2};
  struct Case {
    std::string name;
    model::ModelConfig config;
    std::size_t subset;
  };
  std::vector<Case> cases;
  auto tiny = [](model::ModelKind kind) {
    model::ModelConfig c;
    c.kind = kind;
    c.reference_shapes = false;
    c.conv_kernels = {2, 3, 3};
    c.conv_filters = 4;
    c.lstm_layers = 2;
    c.lstm_units = 5;
    c.mlp_widths = {8, 6};
    c.seed = 17;
    return c;
  };
  cases.push_back({"tiny CNN", tiny(model::ModelKind::Cnn), 0});
  cases.push_back({"tiny LSTM", tiny(model::ModelKind::Lstm), 0});
  cases.push_back({"tiny attention", tiny(model::ModelKind::CnnLstmAttention), 0});
  auto room = tiny(model::ModelKind::CnnLstmAttention);
  room.head = model::HeadKind::ClassifyRoom;
  room.n_rooms = 4;
  cases.push_back({"tiny attention, room head", room, 0});
  // Reference layer sizes; the dense layers are large, so each tensor is
  // sampled at 512 entries.
  model::ModelConfig full;
  full.kind = model::ModelKind::CnnLstmAttention;
  full.seed = 17;
  cases.push_back({"full CNN_LSTM_ATTENTION", full, 512});

  double worst = 0.0;
  std::string where;
  std::size_t checked = 0, skipped = 0;
  for (const auto& c : cases) {
    const auto r = model::grad_check(c.config, frame, target, 1e-4, c.subset);
    checked += r.checked;
    skipped += r.skipped_kinks;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      where = c.name + " " + r.worst_parameter + "[" + std::to_string(r.worst_index) + "]";
    }
  }
  const double elapsed = seconds_since(t0);
  const bool ok = worst < 1e-3 && elapsed < 60.0;
  return {ok ? Verdict::Pass : Verdict::Fail, "max relative error " + fmt(worst, 3) + " at " + where + " over " +
                                                  std::to_string(checked) + " parameters (" + std::to_string(skipped) +
                                                  " straddling a ReLU kink skipped), " + fmt(elapsed, 3) +
                                                  " s (limit 1e-3, 60 s)"};
}

// 2 ---------------------------------------------------------------------------

// Independent reference: scan every sample, keep those in [lo, hi), fold.
struct OracleCell {
  bool missing = true;
  double mean = 0, max = 0, min = 0;
};

OracleCell oracle_cell(const std::vector<RssiSample>& all, std::int64_t lo, std::int64_t hi) {
  OracleCell c;
  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : all) {
    if (s.t_ms < lo || s.t_ms >= hi) continue;
    if (n == 0) {
      c.max = c.min = s.rssi_dbm;
    } else {
      c.max = std::max(c.max, s.rssi_dbm);
      c.min = std::min(c.min, s.rssi_dbm);
    }
    sum += s.rssi_dbm;
    ++n;
  }
  if (n > 0) {
    c.missing = false;
    c.mean = sum / static_cast<double>(n);
  }
  return c;
}

Outcome segmentation_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  std::size_t mismatches = 0, cells = 0, missing_cells = 0, all_missing = 0;
  std::string first;
  for (int c = 0; c < 1000; ++c) {
    const int sources = 1 + static_cast<int>(rng.below(6));
    WindowSpec spec;
    const std::int64_t sub_ms = 100 * static_cast<std::int64_t>(1 + rng.below(30));
    spec.sub_span_s = static_cast<double>(sub_ms) / 1000.0;
    const int n = 1 + static_cast<int>(rng.below(16));
    spec.total_span_s = static_cast<double>(sub_ms * n) / 1000.0;
    if (rng.below(5) == 0) spec.steps_override = 1 + static_cast<int>(rng.below(16));
    spec.mode = rng.below(2) ? WindowMode::OnlyPast : WindowMode::PastAndFuture;
    const std::int64_t t_star = 1'668'519'000'000 + static_cast<std::int64_t>(rng.below(100'000));
    const int steps = spec.steps_override.value_or(n);
    const int past = spec.mode == WindowMode::OnlyPast ? steps : (steps + 1) / 2;

    std::vector<std::vector<RssiSample>> raw(static_cast<std::size_t>(sources));
    std::vector<SampleStream> streams(static_cast<std::size_t>(sources));
    const std::int64_t span = sub_ms * steps;
    const double density = rng.uniform() < 0.1 ? 0.0 : rng.uniform(0.0, 3.0);
    for (int s = 0; s < sources; ++s) {
      const auto count = static_cast<std::size_t>(density * static_cast<double>(span) / 1000.0 * rng.uniform(0, 2));
      for (std::size_t i = 0; i < count; ++i) {
        RssiSample x;
        // Spread over the window plus a margin on both sides; round some
        // timestamps onto sub-window edges.
        x.t_ms = t_star - past * sub_ms - 2 * sub_ms + static_cast<std::int64_t>(rng.below(span + 4 * sub_ms));
        if (rng.below(4) == 0) x.t_ms -= (x.t_ms - t_star) % sub_ms;
        x.rssi_dbm = std::round(rng.uniform(-110, -40) * 100) / 100;
        x.source_id = "a" + std::to_string(s);
        x.seq = i;
        raw[static_cast<std::size_t>(s)].push_back(x);
        streams[static_cast<std::size_t>(s)].append(x);
      }
    }
    // Streams hold samples in (t_ms, seq) order; the reference folds in the
    // same order so floating-point sums agree bit for bit.
    for (auto& r : raw) {
      std::ranges::sort(r, {}, [](const RssiSample& x) { return std::pair(x.t_ms, x.seq); });
    }
    std::vector<const SampleStream*> ptrs;
    for (const auto& s : streams) ptrs.push_back(&s);
    const auto frame = try_build_feature_frame(ptrs, spec, t_star);

    bool any = false;
    auto mismatch = [&](const std::string& what) {
      if (mismatches++ == 0) first = "case " + std::to_string(c) + ": " + what;
    };
    for (int s = 0; s < sources; ++s) {
      for (int k = 0; k < steps; ++k) {
        const std::int64_t lo = t_star - static_cast<std::int64_t>(past - k) * sub_ms;
        const Interval iv{lo, lo + sub_ms};
        const auto ref = oracle_cell(raw[static_cast<std::size_t>(s)], iv.lo, iv.hi);
        const auto agg = aggregate_window(streams[static_cast<std::size_t>(s)], iv);
        ++cells;
        any = any || !ref.missing;
        missing_cells += ref.missing;
        if (ref.missing != !agg.has_value()) {
          mismatch("aggregate presence");
        } else if (agg && (agg->mean != ref.mean || agg->max != ref.max || agg->min != ref.min)) {
          mismatch("aggregate values");
        }
        if (!frame) continue;
        const std::array<double, 3> expect{ref.missing ? kRssiFloorDbm : ref.mean,
                                           ref.missing ? kRssiFloorDbm : ref.max,
                                           ref.missing ? kRssiFloorDbm : ref.min};
        for (int slot = 0; slot < kAggregationCount; ++slot) {
          if (frame->value(s, slot, k) != expect[static_cast<std::size_t>(slot)] ||
              frame->is_missing(s, slot, k) != ref.missing) {
            mismatch("frame cell");
          }
        }
      }
    }
    if (!any) ++all_missing;
    if (any != frame.has_value()) mismatch("AllMissing decision");
    if (frame && (frame->n_sources != sources || frame->n_steps != steps)) mismatch("frame shape");
    if (!any) {
      try {
        build_feature_frame(ptrs, spec, t_star);
        mismatch("AllMissing not raised");
      } catch (const Error& e) {
        if (e.code() != Errc::AllMissing) mismatch("wrong error");
      }
    }
  }
  const double elapsed = seconds_since(t0);
  const bool ok = mismatches == 0 && elapsed < 30.0;
  return {ok ? Verdict::Pass : Verdict::Fail,
          "1000 cases, " + std::to_string(cells) + " cells (" + std::to_string(missing_cells) + " missing, " +
              std::to_string(all_missing) + " all-missing frames), " + std::to_string(mismatches) + " mismatches" +
              (first.empty() ? "" : " [" + first + "]") + ", " + fmt(elapsed, 3) + " s"};
}

// 3 ---------------------------------------------------------------------------

Outcome interpolation_suite() {
  Rng rng(77);
  std::size_t failures = 0, exact = 0, convex = 0, gaps = 0, outside = 0, boundary = 0;
  std::string first;
  auto fail = [&](const std::string& what) {
    if (failures++ == 0) first = what;
  };
  for (int c = 0; c < 500; ++c) {
    std::vector<LabelSample> labels;
    std::int64_t t = 1'668'519'000'000 + static_cast<std::int64_t>(rng.below(1'000'000));
    const std::size_t n = 2 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) {
      labels.push_back({t, std::round(rng.uniform(0, 460)), std::round(rng.uniform(0, 753)), "s"});
      const auto r = rng.below(10);
      t += r == 0 ? 5000 : r == 1 ? 5001 + static_cast<std::int64_t>(rng.below(5000))
                                  : 1 + static_cast<std::int64_t>(rng.below(4999));
    }
    for (const auto& l : labels) {
      const auto p = interpolate_label(labels, l.t_ms);
      if (!p || p->x != l.x_px || p->y != l.y_px) fail("not exact at a label timestamp");
      ++exact;
    }
    for (std::size_t i = 0; i + 1 < labels.size(); ++i) {
      const auto& a = labels[i];
      const auto& b = labels[i + 1];
      const std::int64_t width = b.t_ms - a.t_ms;
      for (int k = 0; k < 4; ++k) {
        const std::int64_t ts = a.t_ms + 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(width - 1 > 0 ? width - 1 : 1)));
        if (ts >= b.t_ms) continue;
        const auto p = interpolate_label(labels, ts);
        if (width > kMaxLabelGapMs) {
          ++gaps;
          if (p) fail("bracket of " + std::to_string(width) + " ms interpolated");
          continue;
        }
        if (width == kMaxLabelGapMs) ++boundary;
        if (!p) {
          fail("bracket of " + std::to_string(width) + " ms reported as a gap");
          continue;
        }
        ++convex;
        // The point sits on the segment, at the time fraction along it.
        const double f = static_cast<double>(ts - a.t_ms) / static_cast<double>(width);
        const double ex = a.x_px + f * (b.x_px - a.x_px);
        const double ey = a.y_px + f * (b.y_px - a.y_px);
        const bool inside_box = p->x >= std::min(a.x_px, b.x_px) && p->x <= std::max(a.x_px, b.x_px) &&
                                p->y >= std::min(a.y_px, b.y_px) && p->y <= std::max(a.y_px, b.y_px);
        if (!inside_box || std::abs(p->x - ex) > 1e-9 || std::abs(p->y - ey) > 1e-9) fail("not a convex combination");
      }
    }
    for (const std::int64_t ts : {labels.front().t_ms - 1, labels.front().t_ms - 10'000, labels.back().t_ms + 1}) {
      ++outside;
      if (interpolate_label(labels, ts)) fail("interpolated outside the labeled span");
    }
  }
  return {failures == 0 ? Verdict::Pass : Verdict::Fail,
          "500 tracks: " + std::to_string(exact) + " exact, " + std::to_string(convex) + " convex (" +
              std::to_string(boundary) + " at exactly 5000 ms), " + std::to_string(gaps) + " wide gaps, " +
              std::to_string(outside) + " outside-span probes, " + std::to_string(failures) + " failures" +
              (first.empty() ? "" : " [" + first + "]")};
}

// 4 ---------------------------------------------------------------------------

Outcome metric_arithmetic() {
  std::vector<std::string> problems;
  FloorPlan a;
  a.width_px = 460;
  a.height_px = 753;
  a.width_mm = 5800;
  a.height_mm = 9500;
  FloorPlan b;
  b.width_px = 536;
  b.height_px = 621;
  b.width_mm = 9500;
  b.height_mm = 11100;
  if (px_to_mm({460, 753}, a) != PointMm{5800, 9500}) problems.push_back("flat A corner");
  if (px_to_mm({536, 621}, b) != PointMm{9500, 11100}) problems.push_back("flat B corner");
  if (px_to_mm({0, 0}, a) != PointMm{0, 0}) problems.push_back("origin");

  SyntheticOptions o;
  o.sessions = 1;
  o.session_duration_s = 150;
  const auto flat = generate_synthetic(o);
  auto configs = named_matrix("models=cnn,lstm,knn,rf;windows=4,12;modes=only-past,past+future", Tech::Uwb, 5, 3);
  for (auto& c : configs) {
    c.model.reference_shapes = false;
    c.model.conv_kernels = {2, 3};
    c.model.conv_filters = 4;
    c.model.lstm_units = 6;
    c.model.mlp_widths = {8};
    c.model.rf.n_trees = 5;
  }
  MatrixOptions mo;
  mo.train.max_epochs = 2;
  mo.max_folds = 2;
  const auto report = run_matrix(flat.data, flat.plan, o.tag, configs, mo);
  std::size_t rows = 0;
  for (const auto& r : report.rows) {
    if (r.status != "ok") problems.push_back("row failed: " + r.status);
    ++rows;
    if (r.mae_m != (r.mae_x_m + r.mae_y_m) / 2) problems.push_back("MAE_m != (x+y)/2 in a row");
  }
  // Per-axis scaling against a hand computation: 46 px on flat A is 0.580 m.
  const std::vector<PointPx> pred{{46, 0}}, truth{{0, 0}};
  const auto m = regression_metrics(pred, truth, a.scale_x(), a.scale_y());
  if (std::abs(m.mae_x_m - 0.58) > 1e-12 || m.mae_m != (m.mae_x_m + m.mae_y_m) / 2) problems.push_back("46 px");
  std::string detail = std::to_string(rows) + " report rows checked bitwise, flats A and B corners exact";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty() ? Verdict::Pass : Verdict::Fail, detail};
}

// 5 ---------------------------------------------------------------------------

Outcome synthetic_end_to_end() {
  const auto t0 = Clock::now();
  SyntheticOptions o;  // 4 anchors, 5.8 x 9.5 m, sigma 2 dB, 3 x 600 s random walk
  const auto flat = generate_synthetic(o);
  ExperimentConfig base;
  base.window.total_span_s = 12;
  base.window.sub_span_s = 1;
  base.window.mode = WindowMode::PastAndFuture;
  base.k_folds = 5;
  base.seed = 7;
  base.split = SplitMode::Block;  // held-out stretch of track, no neighbour leakage
  auto cnn = base;
  cnn.model.kind = model::ModelKind::CnnLstm;
  auto knn = base;
  knn.model.kind = model::ModelKind::Knn;
  MatrixOptions mo;
  mo.train.max_epochs = 40;
  mo.train.patience = 8;
  mo.max_folds = 1;
  mo.room_accuracy = false;
  const auto report = run_matrix(flat.data, flat.plan, o.tag, {cnn, knn}, mo);
  const auto& rc = report.rows.at(0);
  const auto& rk = report.rows.at(1);
  const double elapsed = seconds_since(t0);
  const bool ok = rc.status == "ok" && rk.status == "ok" && rc.pairs >= 1500 && rc.mae_m <= 1.0 &&
                  rc.mae_m <= 1.1 * rk.mae_m && elapsed < 600;
  return {ok ? Verdict::Pass : Verdict::Fail,
          std::to_string(rc.pairs) + " frames; CNN_LSTM 12 s MAE " + fmt(rc.mae_m) + " m, kNN " + fmt(rk.mae_m) +
              " m, ratio " + fmt(rc.mae_m / rk.mae_m, 3) + " (limits 1.0 m, 1.1); " + fmt(elapsed, 3) + " s" +
              (rc.status == "ok" ? "" : "; " + rc.status)};
}

// 6 ---------------------------------------------------------------------------

Outcome dataset_reproduction() {
  const char* cfg = std::getenv("RSSILOC_FLAT_A");
  if (!cfg || !*cfg) {
    return {Verdict::NotApplicable,
            "published recordings not available (set RSSILOC_FLAT_A to a flat config); covered by criterion 5 and "
            "the invariant suites"};
  }
  FloorPlan plan;
  LoadedDataset data;
  try {
    plan = load_floorplan(cfg);
    LoadOptions lo;
    lo.only_tech = Tech::Uwb;
    data = load_dataset(plan, lo);
  } catch (const Error& e) {
    return {Verdict::NotApplicable, std::string("dataset did not load cleanly (") + e.what() +
                                        "); covered by criterion 5 and the invariant suites"};
  }
  const char* folds_env = std::getenv("RSSILOC_FOLDS");
  const int folds = folds_env ? std::atoi(folds_env) : 10;
  auto configs = named_matrix("models=cnn_lstm,lstm;windows=4,12,20,30;modes=past+future", Tech::Uwb, 7, folds);
  MatrixOptions mo;
  mo.room_accuracy = false;
  const auto report = run_matrix(data, plan, plan.default_tag, configs, mo);
  auto mae = [&](model::ModelKind kind, double w) {
    for (const auto& r : report.rows) {
      if (r.model == kind && r.window_s == w && r.status == "ok") return r.mae_m;
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<std::string> problems;
  const double m30 = mae(model::ModelKind::CnnLstm, 30);
  if (!(std::abs(m30 - 0.17) <= 0.15)) problems.push_back("30 s CNN_LSTM MAE " + fmt(m30) + " not within 0.17 +- 0.15");
  if (!(mae(model::ModelKind::CnnLstm, 12) < mae(model::ModelKind::Lstm, 12))) problems.push_back("12 s ordering");
  const std::array<double, 4> ws{4, 12, 20, 30};
  for (std::size_t i = 1; i < ws.size(); ++i) {
    if (!(mae(model::ModelKind::CnnLstm, ws[i]) <= mae(model::ModelKind::CnnLstm, ws[i - 1]) + 0.05)) {
      problems.push_back("MAE rises from " + fmt(ws[i - 1]) + " s to " + fmt(ws[i]) + " s");
    }
  }
  std::string detail = "flat A 30 s MAE " + fmt(m30) + " m";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty() ? Verdict::Pass : Verdict::Fail, detail};
}

// 7 ---------------------------------------------------------------------------

Outcome external_scorer() {
  const auto dir = scratch_dir("c7");
  Rng rng(186);
  std::vector<LabelSample> labels;
  for (std::int64_t t = 1'668'519'000'000; t <= 1'668'519'000'000 + 1'200'000; t += 800 + static_cast<std::int64_t>(rng.below(400))) {
    labels.push_back({t, rng.uniform(0, 460), rng.uniform(0, 753), "track1"});
  }
  FloorPlan plan;
  plan.width_px = 460;
  plan.height_px = 753;
  plan.width_mm = 5800;
  plan.height_mm = 9500;
  // 1000 estimates inside the labeled span, 186 of them lost; a few more
  // outside the span that must not count.
  const std::size_t n = 1000, lost = 186;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(std::span(idx));
  std::vector<bool> is_lost(n, false);
  for (std::size_t i = 0; i < lost; ++i) is_lost[idx[i]] = true;
  std::ofstream out(dir / "estimates.csv");
  out << "t_ms,x_px,y_px\n";
  const std::int64_t t0 = labels.front().t_ms;
  const std::int64_t t1 = labels.back().t_ms;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t t = t0 + static_cast<std::int64_t>((t1 - t0) * static_cast<double>(i) / static_cast<double>(n));
    if (is_lost[i]) {
      out << t << (i % 2 ? ",," : ",nan,nan") << "\n";
    } else {
      out << t << "," << rng.uniform(0, 460) << "," << rng.uniform(0, 753) << "\n";
    }
  }
  out << (t1 + 60'000) << ",1,1\n" << (t0 - 60'000) << ",,\n";
  out.close();
  const auto score = score_external_estimates(load_estimates_csv(dir / "estimates.csv"), labels, plan);
  fs::remove_all(dir);
  const double quantum = 1.0 / static_cast<double>(score.matched);
  const bool ok = std::abs(score.lost_fraction - 0.186) <= quantum + 1e-12;
  return {ok ? Verdict::Pass : Verdict::Fail, "lost_fraction " + fmt(score.lost_fraction) + " over " +
                                                  std::to_string(score.matched) + " matched estimates (target 0.186 +- " +
                                                  fmt(quantum, 3) + ")"};
}

// 8 ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Outcome determinism() {
  const auto dir = scratch_dir("c8");
  const std::string cli = RSSILOC_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > \"" + (dir / "log.txt").string() + "\" 2>&1";
    return std::system(cmd.c_str());
  };
  if (run("synth --out \"" + (dir / "flat").string() + "\" --sessions 1 --duration 240 --seed 5") != 0) {
    return {Verdict::Fail, "synth failed: " + slurp(dir / "log.txt")};
  }
  const std::string eval = "eval --flat \"" + (dir / "flat" / "flat.json").string() +
                           "\" --matrix full --folds 5 --max-epochs 2 --trees 10 --seed 11 --out ";
  if (run(eval + "\"" + (dir / "a.csv").string() + "\"") != 0 ||
      run(eval + "\"" + (dir / "b.csv").string() + "\"") != 0) {
    return {Verdict::Fail, "eval failed: " + slurp(dir / "log.txt")};
  }
  const auto a = slurp(dir / "a.csv");
  const auto b = slurp(dir / "b.csv");
  std::size_t rows = 0;
  for (const char c : a) rows += c == '\n';
  const bool failed_rows = a.find(",failed") != std::string::npos;
  fs::remove_all(dir);
  const bool ok = !a.empty() && a == b && !failed_rows;
  return {ok ? Verdict::Pass : Verdict::Fail,
          "two CLI eval runs of the full matrix, " + std::to_string(rows > 0 ? rows - 1 : 0) + " rows, " + std::to_string(a.size()) +
              " bytes, " + (a == b ? "byte-identical" : "DIFFERENT") + (failed_rows ? ", has failed rows" : "")};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_correctness}, {2, segmentation_oracle}, {3, interpolation_suite}, {4, metric_arithmetic},
      {5, synthetic_end_to_end}, {6, dataset_reproduction}, {7, external_scorer},    {8, determinism},
  };
  int failures = 0;
  for (const auto& [n, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const char* word = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "N/A";
    std::cout << "criterion " << n << ": " << word << "  " << o.detail << std::endl;
    failures += o.verdict == Verdict::Fail;
  }
  return failures == 0 ? 0 : 1;
}
