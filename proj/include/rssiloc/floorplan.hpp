#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rssiloc/types.hpp"

namespace rssiloc {

struct RoomLabel {
  std::string name;
  int index = 0;
  friend bool operator==(const RoomLabel&, const RoomLabel&) = default;
};

struct Room {
  RoomLabel label;
  std::vector<PointPx> polygon;
};

struct Anchor {
  std::string source_id;
  PointPx position;
  Tech tech = Tech::Uwb;
};

enum class RecordKind { Label, Uwb, Ble };
enum class EpochUnit { Seconds, Milliseconds, Auto };

// One recorded file referenced from a flat config.
struct DataFileRef {
  std::filesystem::path path;
  RecordKind kind = RecordKind::Uwb;
  // BLE receivers log the wearable's MAC only; when set, the file's samples
  // are attributed to this beacon and the MAC becomes the tag id.
  std::optional<std::string> beacon;
  std::string session_id;
};

struct FloorPlan {
  std::string name;
  int width_px = 0;
  int height_px = 0;
  double width_mm = 0.0;
  double height_mm = 0.0;
  std::string image_path;
  std::vector<Room> rooms;
  std::vector<Anchor> anchors;

  // Recorded data bound to this flat.
  std::vector<DataFileRef> data_files;
  char delimiter = '\0';  // '\0' means any run of whitespace
  EpochUnit epoch_unit = EpochUnit::Auto;
  std::string default_tag = "tag0";

  double scale_x() const { return width_mm / width_px; }
  double scale_y() const { return height_mm / height_px; }
  bool in_canvas(PointPx p) const;

  // Anchor ids for one technology in declaration order.
  std::vector<std::string> roster(Tech tech) const;

  // Throws InvalidConfig on non-positive dims, out-of-canvas anchors,
  // self-intersecting polygons or duplicate room names.
  void validate() const;
};

FloorPlan load_floorplan(const std::filesystem::path& path);
FloorPlan floorplan_from_json_text(const std::string& text, const std::filesystem::path& base_dir = {});
std::string floorplan_to_json_text(const FloorPlan& plan);

PointMm px_to_mm(PointPx p, const FloorPlan& plan);

// Point on an edge counts as inside; the first room in declaration order wins.
std::optional<RoomLabel> room_of(PointPx p, const FloorPlan& plan);

bool point_in_polygon(PointPx p, const std::vector<PointPx>& polygon);
bool polygon_is_simple(const std::vector<PointPx>& polygon);

}  // namespace rssiloc
