#include "rssiloc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "rssiloc/error.hpp"
#include "rssiloc/rng.hpp"

namespace rssiloc {

namespace {

constexpr std::int64_t kWalkStepMs = 100;
constexpr std::int64_t kSessionGapMs = 3'600'000;

struct Walker {
  double x, y, heading;
};

double round_to(double v, double quantum) { return std::round(v / quantum) * quantum; }

std::vector<Anchor> place_anchors(const SyntheticOptions& o) {
  const double m = 5.0;
  const double w = o.width_px - m;
  const double h = o.height_px - m;
  const std::vector<PointPx> spots{{m, m},         {w, m},     {w, h},         {m, h},
                                   {w / 2.0, m},   {w, h / 2}, {w / 2.0, h},   {m, h / 2}};
  if (o.anchors < 1 || o.anchors > static_cast<int>(spots.size())) {
    throw Error(Errc::InvalidConfig, "synthetic flats support 1 to 8 anchors");
  }
  std::vector<Anchor> out;
  for (int i = 0; i < o.anchors; ++i) {
    const std::string id = o.tech == Tech::Uwb ? std::to_string(1001 + i) : "beacon" + std::to_string(i + 1);
    out.push_back(Anchor{id, spots[static_cast<std::size_t>(i)], o.tech});
  }
  return out;
}

std::vector<Room> four_rooms(int w, int h) {
  const double mx = w / 2.0;
  const double my = h / 2.0;
  const double W = w;
  const double H = h;
  auto rect = [](double x0, double y0, double x1, double y1) {
    return std::vector<PointPx>{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  };
  return {Room{{"living", 0}, rect(0, 0, mx, my)},
          Room{{"kitchen", 1}, rect(mx, 0, W, my)},
          Room{{"bathroom", 2}, rect(0, my, mx, H)},
          Room{{"bedroom", 3}, rect(mx, my, W, H)}};
}

}  // namespace

SyntheticFlat generate_synthetic(const SyntheticOptions& o) {
  if (o.sessions < 1 || o.session_duration_s <= 0.0) throw Error(Errc::InvalidConfig, "empty synthetic track");
  SyntheticFlat flat;
  FloorPlan& plan = flat.plan;
  plan.name = "synthetic";
  plan.width_px = o.width_px;
  plan.height_px = o.height_px;
  plan.width_mm = o.width_mm;
  plan.height_mm = o.height_mm;
  plan.rooms = four_rooms(o.width_px, o.height_px);
  plan.anchors = place_anchors(o);
  plan.default_tag = o.tag;
  plan.validate();

  const double w_m = o.width_mm / 1000.0;
  const double h_m = o.height_mm / 1000.0;
  const double px_per_m_x = o.width_px / w_m;
  const double px_per_m_y = o.height_px / h_m;
  const double margin = 0.2;

  Rng rng(o.seed);
  std::vector<RssiSample> samples;
  std::uint64_t seq = 0;
  std::int64_t session_start = o.start_ms;
  const auto duration_ms = static_cast<std::int64_t>(o.session_duration_s * 1000.0);

  for (int s = 0; s < o.sessions; ++s) {
    const std::string session = "track" + std::to_string(s + 1);
    Walker walker{rng.uniform(margin, w_m - margin), rng.uniform(margin, h_m - margin),
                  rng.uniform(0.0, 2.0 * std::numbers::pi)};
    const std::int64_t end = session_start + duration_ms;

    // Per-anchor next report time and the next click.
    std::vector<double> next_sample(plan.anchors.size());
    for (auto& t : next_sample) t = static_cast<double>(session_start) + rng.uniform(0.0, o.sample_period_ms);
    double next_label = static_cast<double>(session_start);

    for (std::int64_t t = session_start; t <= end; t += kWalkStepMs) {
      // Emit everything due before the walker moves on.
      for (std::size_t a = 0; a < plan.anchors.size(); ++a) {
        while (next_sample[a] < static_cast<double>(t + kWalkStepMs)) {
          const auto& anchor = plan.anchors[a];
          const double ax = anchor.position.x / px_per_m_x;
          const double ay = anchor.position.y / px_per_m_y;
          const double d = std::max(std::hypot(walker.x - ax, walker.y - ay), o.d0_m);
          const double rssi = o.p0_dbm - 10.0 * o.path_loss_exponent * std::log10(d / o.d0_m) +
                              rng.normal(0.0, o.noise_sigma_db);
          RssiSample sample;
          sample.t_ms = static_cast<std::int64_t>(next_sample[a]);
          sample.tech = o.tech;
          sample.rssi_dbm = round_to(rssi, 0.01);
          sample.source_id = anchor.source_id;
          sample.tag_id = o.tag;
          sample.seq = seq++;
          sample.out_of_band = !rssi_in_band(o.tech, sample.rssi_dbm);
          if (sample.t_ms <= end) samples.push_back(std::move(sample));
          next_sample[a] += o.sample_period_ms + rng.uniform(-o.sample_jitter_ms, o.sample_jitter_ms);
        }
      }
      while (next_label < static_cast<double>(t + kWalkStepMs) && next_label <= static_cast<double>(end)) {
        LabelSample label;
        label.t_ms = static_cast<std::int64_t>(next_label);
        label.x_px = std::clamp(std::round(walker.x * px_per_m_x), 0.0, static_cast<double>(o.width_px));
        label.y_px = std::clamp(std::round(walker.y * px_per_m_y), 0.0, static_cast<double>(o.height_px));
        label.session_id = session;
        flat.data.labels.push_back(label);
        next_label += o.label_period_ms + rng.uniform(-o.label_jitter_ms, o.label_jitter_ms);
      }

      walker.heading += rng.normal(0.0, o.turn_sigma_rad);
      const double step = o.speed_mps * (0.5 + rng.uniform()) * (kWalkStepMs / 1000.0);
      double nx = walker.x + step * std::cos(walker.heading);
      double ny = walker.y + step * std::sin(walker.heading);
      if (nx < margin || nx > w_m - margin) {
        walker.heading = std::numbers::pi - walker.heading;
        nx = std::clamp(nx, margin, w_m - margin);
      }
      if (ny < margin || ny > h_m - margin) {
        walker.heading = -walker.heading;
        ny = std::clamp(ny, margin, h_m - margin);
      }
      walker.x = nx;
      walker.y = ny;
    }
    session_start = end + kSessionGapMs;
  }

  for (const auto& sample : samples) ++flat.data.report.per_source[sample.source_id];
  flat.data.report.accepted = samples.size() + flat.data.labels.size();
  flat.data.report.total_lines = flat.data.report.accepted;
  flat.data.report.labels = flat.data.labels.size();
  add_samples(flat.data.streams, std::move(samples));
  std::stable_sort(flat.data.labels.begin(), flat.data.labels.end(),
                   [](const LabelSample& a, const LabelSample& b) { return a.t_ms < b.t_ms; });
  return flat;
}

FloorPlan write_synthetic(const SyntheticFlat& flat, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  FloorPlan plan = flat.plan;
  plan.data_files.clear();

  std::map<std::string, std::vector<const LabelSample*>> labels;
  for (const auto& l : flat.data.labels) labels[l.session_id].push_back(&l);
  std::vector<const RssiSample*> all;
  for (const auto& [key, stream] : flat.data.streams) {
    for (const auto& s : stream.samples()) all.push_back(&s);
  }
  std::stable_sort(all.begin(), all.end(), [](const RssiSample* a, const RssiSample* b) {
    return a->t_ms != b->t_ms ? a->t_ms < b->t_ms : a->seq < b->seq;
  });

  for (const auto& [session, items] : labels) {
    const auto label_name = session + "_labels.txt";
    {
      std::filesystem::remove(dir / label_name);
      RecordLog log(dir / label_name);
      for (const auto* l : items) log.append(format_label_record(*l));
    }
    plan.data_files.push_back(DataFileRef{label_name, RecordKind::Label, std::nullopt, session});

    const std::int64_t lo = items.front()->t_ms;
    const std::int64_t hi = items.back()->t_ms;
    // RSSI from slightly before the first to slightly after the last click.
    const std::int64_t pad = 60'000;
    auto in_session = [&](const RssiSample* s) { return s->t_ms >= lo - pad && s->t_ms <= hi + pad; };
    if (flat.plan.anchors.front().tech == Tech::Uwb) {
      const auto name = session + "_uwb.txt";
      std::filesystem::remove(dir / name);
      RecordLog log(dir / name);
      for (const auto* s : all) {
        if (in_session(s)) log.append(format_rssi_record(*s));
      }
      plan.data_files.push_back(DataFileRef{name, RecordKind::Uwb, std::nullopt, session});
    } else {
      for (const auto& anchor : flat.plan.anchors) {
        const auto name = session + "_" + anchor.source_id + "_ble.txt";
        std::filesystem::remove(dir / name);
        RecordLog log(dir / name);
        for (const auto* s : all) {
          if (s->source_id != anchor.source_id || !in_session(s)) continue;
          RssiSample as_logged = *s;
          as_logged.source_id = s->tag_id;  // receivers log the wearable's MAC
          log.append(format_rssi_record(as_logged));
        }
        plan.data_files.push_back(DataFileRef{name, RecordKind::Ble, anchor.source_id, session});
      }
    }
  }
  const auto config = dir / "flat.json";
  {
    std::ofstream out(config);
    out << floorplan_to_json_text(plan) << '\n';
    if (!out) throw Error(Errc::Io, "cannot write " + config.string());
  }
  return load_floorplan(config);
}

}  // namespace rssiloc
