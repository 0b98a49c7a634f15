#include "rssiloc/floorplan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "rssiloc/error.hpp"

namespace rssiloc {

using nlohmann::json;

std::string_view tech_name(Tech tech) { return tech == Tech::Uwb ? "uwb" : "ble"; }

Tech parse_tech(std::string_view name) {
  if (name == "uwb" || name == "UWB") return Tech::Uwb;
  if (name == "ble" || name == "BLE") return Tech::Ble;
  throw Error(Errc::InvalidConfig, "unknown technology '" + std::string(name) + "'");
}

bool FloorPlan::in_canvas(PointPx p) const {
  return p.x >= 0.0 && p.y >= 0.0 && p.x <= width_px && p.y <= height_px;
}

std::vector<std::string> FloorPlan::roster(Tech tech) const {
  std::vector<std::string> ids;
  for (const auto& a : anchors) {
    if (a.tech == tech) ids.push_back(a.source_id);
  }
  return ids;
}

void FloorPlan::validate() const {
  if (width_px <= 0 || height_px <= 0 || !(width_mm > 0.0) || !(height_mm > 0.0)) {
    throw Error(Errc::InvalidConfig, "floor plan '" + name + "' needs positive px and mm dimensions");
  }
  std::set<std::string> seen_anchor;
  for (const auto& a : anchors) {
    if (!in_canvas(a.position)) {
      throw Error(Errc::InvalidConfig, "anchor " + a.source_id + " lies outside the canvas");
    }
    if (!seen_anchor.insert(a.source_id).second) {
      throw Error(Errc::InvalidConfig, "duplicate anchor id " + a.source_id);
    }
  }
  std::set<std::string> seen_room;
  for (std::size_t i = 0; i < rooms.size(); ++i) {
    const auto& r = rooms[i];
    if (r.label.index != static_cast<int>(i)) {
      throw Error(Errc::InvalidConfig, "room indices must be 0..n-1 in declaration order");
    }
    if (!seen_room.insert(r.label.name).second) {
      throw Error(Errc::InvalidConfig, "duplicate room name " + r.label.name);
    }
    if (r.polygon.size() < 3 || !polygon_is_simple(r.polygon)) {
      throw Error(Errc::InvalidConfig, "room " + r.label.name + " polygon is not simple");
    }
  }
}

namespace {

RecordKind parse_kind(const std::string& s) {
  if (s == "label" || s == "labels") return RecordKind::Label;
  if (s == "uwb") return RecordKind::Uwb;
  if (s == "ble") return RecordKind::Ble;
  throw Error(Errc::InvalidConfig, "unknown record kind '" + s + "'");
}

std::string_view kind_name(RecordKind k) {
  switch (k) {
    case RecordKind::Label: return "label";
    case RecordKind::Uwb: return "uwb";
    case RecordKind::Ble: return "ble";
  }
  return "?";
}

EpochUnit parse_unit(const std::string& s) {
  if (s == "auto") return EpochUnit::Auto;
  if (s == "s" || s == "seconds") return EpochUnit::Seconds;
  if (s == "ms" || s == "milliseconds") return EpochUnit::Milliseconds;
  throw Error(Errc::InvalidConfig, "unknown epoch unit '" + s + "'");
}

std::string_view unit_name(EpochUnit u) {
  switch (u) {
    case EpochUnit::Auto: return "auto";
    case EpochUnit::Seconds: return "seconds";
    case EpochUnit::Milliseconds: return "milliseconds";
  }
  return "auto";
}

}  // namespace

FloorPlan floorplan_from_json_text(const std::string& text, const std::filesystem::path& base_dir) {
  FloorPlan plan;
  try {
    const json j = json::parse(text);
    plan.name = j.value("name", std::string("flat"));
    plan.width_px = j.at("width_px").get<int>();
    plan.height_px = j.at("height_px").get<int>();
    plan.width_mm = j.at("width_mm").get<double>();
    plan.height_mm = j.at("height_mm").get<double>();
    plan.image_path = j.value("image", std::string());
    for (const auto& a : j.value("anchors", json::array())) {
      plan.anchors.push_back(Anchor{a.at("id").get<std::string>(),
                                    PointPx{a.at("x").get<double>(), a.at("y").get<double>()},
                                    parse_tech(a.value("tech", std::string("uwb")))});
    }
    int index = 0;
    for (const auto& r : j.value("rooms", json::array())) {
      Room room;
      room.label = RoomLabel{r.at("name").get<std::string>(), index++};
      for (const auto& p : r.at("polygon")) room.polygon.push_back(PointPx{p.at(0).get<double>(), p.at(1).get<double>()});
      plan.rooms.push_back(std::move(room));
    }
    if (j.contains("records")) {
      const auto& rec = j["records"];
      const std::string delim = rec.value("delimiter", std::string("whitespace"));
      if (delim == "whitespace" || delim.empty()) {
        plan.delimiter = '\0';
      } else if (delim == "tab" || delim == "\t") {
        plan.delimiter = '\t';
      } else if (delim == "comma" || delim == ",") {
        plan.delimiter = ',';
      } else if (delim.size() == 1) {
        plan.delimiter = delim[0];
      } else {
        throw Error(Errc::InvalidConfig, "unsupported delimiter '" + delim + "'");
      }
      plan.epoch_unit = parse_unit(rec.value("epoch_unit", std::string("auto")));
      plan.default_tag = rec.value("tag_id", plan.default_tag);
    }
    for (const auto& d : j.value("data", json::array())) {
      DataFileRef ref;
      std::filesystem::path p = d.at("path").get<std::string>();
      ref.path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
      ref.kind = parse_kind(d.at("kind").get<std::string>());
      if (d.contains("beacon")) ref.beacon = d["beacon"].get<std::string>();
      ref.session_id = d.value("session", std::string());
      plan.data_files.push_back(std::move(ref));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("flat config: ") + e.what());
  }
  plan.validate();
  return plan;
}

FloorPlan load_floorplan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open flat config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return floorplan_from_json_text(buf.str(), path.parent_path());
}

std::string floorplan_to_json_text(const FloorPlan& plan) {
  json j;
  j["name"] = plan.name;
  j["width_px"] = plan.width_px;
  j["height_px"] = plan.height_px;
  j["width_mm"] = plan.width_mm;
  j["height_mm"] = plan.height_mm;
  j["scale_x"] = plan.scale_x();
  j["scale_y"] = plan.scale_y();
  j["image"] = plan.image_path;
  j["anchors"] = json::array();
  for (const auto& a : plan.anchors) {
    j["anchors"].push_back({{"id", a.source_id}, {"x", a.position.x}, {"y", a.position.y}, {"tech", tech_name(a.tech)}});
  }
  j["rooms"] = json::array();
  for (const auto& r : plan.rooms) {
    json poly = json::array();
    for (const auto& p : r.polygon) poly.push_back({p.x, p.y});
    j["rooms"].push_back({{"name", r.label.name}, {"polygon", poly}});
  }
  j["records"] = {{"delimiter", plan.delimiter == '\0' ? std::string("whitespace") : std::string(1, plan.delimiter)},
                  {"epoch_unit", unit_name(plan.epoch_unit)},
                  {"tag_id", plan.default_tag}};
  j["data"] = json::array();
  for (const auto& d : plan.data_files) {
    json e = {{"path", d.path.string()}, {"kind", kind_name(d.kind)}};
    if (d.beacon) e["beacon"] = *d.beacon;
    if (!d.session_id.empty()) e["session"] = d.session_id;
    j["data"].push_back(std::move(e));
  }
  return j.dump(2);
}

PointMm px_to_mm(PointPx p, const FloorPlan& plan) { return PointMm{p.x * plan.scale_x(), p.y * plan.scale_y()}; }

namespace {

double cross(PointPx o, PointPx a, PointPx b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool on_segment(PointPx p, PointPx a, PointPx b) {
  if (cross(a, b, p) != 0.0) return false;
  return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) && p.y >= std::min(a.y, b.y) &&
         p.y <= std::max(a.y, b.y);
}

int orientation(PointPx a, PointPx b, PointPx c) {
  const double v = cross(a, b, c);
  return (v > 0) - (v < 0);
}

bool segments_intersect(PointPx p1, PointPx p2, PointPx q1, PointPx q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  return (o1 == 0 && on_segment(q1, p1, p2)) || (o2 == 0 && on_segment(q2, p1, p2)) ||
         (o3 == 0 && on_segment(p1, q1, q2)) || (o4 == 0 && on_segment(p2, q1, q2));
}

}  // namespace

bool point_in_polygon(PointPx p, const std::vector<PointPx>& polygon) {
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (on_segment(p, polygon[i], polygon[(i + 1) % n])) return true;
  }
  // Even-odd rule.
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const PointPx a = polygon[i];
    const PointPx b = polygon[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

bool polygon_is_simple(const std::vector<PointPx>& polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(polygon[i], polygon[(i + 1) % n], polygon[j], polygon[(j + 1) % n])) return false;
    }
  }
  return true;
}

std::optional<RoomLabel> room_of(PointPx p, const FloorPlan& plan) {
  for (const auto& room : plan.rooms) {
    if (point_in_polygon(p, room.polygon)) return room.label;
  }
  return std::nullopt;
}

}  // namespace rssiloc
