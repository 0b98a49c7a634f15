#include "rssiloc/dataset_file.hpp"

#include "json.hpp"
#include "rssiloc/binary_io.hpp"
#include "rssiloc/error.hpp"

namespace rssiloc {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "RLDS";

json window_to_json(const WindowSpec& w) {
  json j = {{"total_span_s", w.total_span_s}, {"sub_span_s", w.sub_span_s}, {"mode", window_mode_name(w.mode)}};
  if (w.steps_override) j["steps_override"] = *w.steps_override;
  return j;
}

WindowSpec window_from_json(const json& j) {
  WindowSpec w;
  w.total_span_s = j.at("total_span_s").get<double>();
  w.sub_span_s = j.at("sub_span_s").get<double>();
  w.mode = parse_window_mode(j.at("mode").get<std::string>());
  if (j.contains("steps_override")) w.steps_override = j["steps_override"].get<int>();
  return w;
}

json meta_to_json(const DatasetMeta& m) {
  return {{"flat", m.flat_name},     {"width_px", m.width_px},   {"height_px", m.height_px},
          {"width_mm", m.width_mm},  {"height_mm", m.height_mm}, {"tech", tech_name(m.tech)},
          {"tag", m.tag_id},         {"window", window_to_json(m.window)},
          {"roster", m.roster},      {"rooms", m.room_names}};
}

DatasetMeta meta_from_json(const json& j) {
  DatasetMeta m;
  m.flat_name = j.at("flat").get<std::string>();
  m.width_px = j.at("width_px").get<int>();
  m.height_px = j.at("height_px").get<int>();
  m.width_mm = j.at("width_mm").get<double>();
  m.height_mm = j.at("height_mm").get<double>();
  m.tech = parse_tech(j.at("tech").get<std::string>());
  m.tag_id = j.at("tag").get<std::string>();
  m.window = window_from_json(j.at("window"));
  m.roster = j.at("roster").get<std::vector<std::string>>();
  m.room_names = j.at("rooms").get<std::vector<std::string>>();
  return m;
}

}  // namespace

std::string meta_to_json_text(const DatasetMeta& meta) { return meta_to_json(meta).dump(); }

DatasetMeta meta_from_json_text(const std::string& text) {
  try {
    return meta_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("dataset header: ") + e.what());
  }
}

void save_training_set(const TrainingSet& set, const std::filesystem::path& path) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kDatasetFormatVersion);
  json header = meta_to_json(set.meta);
  header["discard"] = {{"grid_points", set.report.grid_points},
                       {"gap_dropped", set.report.gap_dropped},
                       {"all_missing_dropped", set.report.all_missing_dropped},
                       {"kept", set.report.kept}};
  w.str(header.dump());
  w.u64(set.pairs.size());
  const std::size_t cells = set.meta.roster.size() * kAggregationCount * static_cast<std::size_t>(set.meta.window.n_steps());
  for (const auto& p : set.pairs) {
    if (p.frame.values.size() != cells) throw Error(Errc::ShapeMismatch, "frame size disagrees with dataset header");
    w.i64(p.frame.t_star_ms);
    w.f64(p.target.x_px);
    w.f64(p.target.y_px);
    w.f64(p.target.x_norm);
    w.f64(p.target.y_norm);
    w.u32(static_cast<std::uint32_t>(p.target.room ? *p.target.room : -1));
    w.f64s(p.frame.values);
    for (const auto m : p.frame.missing) w.u8(m);
  }
  write_checksummed(path, w.bytes());
}

TrainingSet load_training_set(const std::filesystem::path& path) {
  const auto bytes = read_checksummed(path);
  ByteReader r(bytes);
  if (r.raw(4) != kMagic) throw Error(Errc::CorruptFile, path.string() + " is not a dataset file");
  const auto version = r.u32();
  if (version != kDatasetFormatVersion) {
    throw Error(Errc::CorruptFile, "unsupported dataset format version " + std::to_string(version));
  }
  TrainingSet set;
  json header;
  try {
    header = json::parse(r.str());
    set.meta = meta_from_json(header);
    if (header.contains("discard")) {
      const auto& d = header["discard"];
      set.report.grid_points = d.value("grid_points", std::size_t{0});
      set.report.gap_dropped = d.value("gap_dropped", std::size_t{0});
      set.report.all_missing_dropped = d.value("all_missing_dropped", std::size_t{0});
      set.report.kept = d.value("kept", std::size_t{0});
    }
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("dataset header: ") + e.what());
  }
  const int n_steps = set.meta.window.n_steps();
  const std::size_t cells = set.meta.roster.size() * kAggregationCount * static_cast<std::size_t>(n_steps);
  const std::uint64_t count = r.u64();
  set.pairs.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    TrainingPair p;
    p.frame.t_star_ms = r.i64();
    p.frame.tag_id = set.meta.tag_id;
    p.frame.n_sources = static_cast<int>(set.meta.roster.size());
    p.frame.n_steps = n_steps;
    p.target.x_px = r.f64();
    p.target.y_px = r.f64();
    p.target.x_norm = r.f64();
    p.target.y_norm = r.f64();
    const auto room = static_cast<std::int32_t>(r.u32());
    if (room >= 0) p.target.room = room;
    p.frame.values = r.f64s(cells);
    p.frame.missing.resize(cells);
    for (auto& m : p.frame.missing) m = r.u8();
    set.pairs.push_back(std::move(p));
  }
  if (r.remaining() != 0) throw Error(Errc::CorruptFile, "trailing bytes in " + path.string());
  return set;
}

}  // namespace rssiloc
