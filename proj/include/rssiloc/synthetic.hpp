#pragma once

#include <cstdint>
#include <filesystem>

#include "rssiloc/floorplan.hpp"
#include "rssiloc/ingest.hpp"

namespace rssiloc {

// Log-distance path loss: rssi = p0 - 10 n log10(max(d, d0) / d0) + N(0, sigma).
struct SyntheticOptions {
  int width_px = 460;
  int height_px = 753;
  double width_mm = 5800.0;
  double height_mm = 9500.0;
  int anchors = 4;
  Tech tech = Tech::Uwb;
  double p0_dbm = -45.0;
  double path_loss_exponent = 2.2;
  double d0_m = 1.0;
  double noise_sigma_db = 2.0;
  // Each anchor reports every sample_period_ms, with uniform jitter.
  double sample_period_ms = 200.0;
  double sample_jitter_ms = 60.0;
  // Operator clicks: mean interval and uniform jitter.
  double label_period_ms = 1000.0;
  double label_jitter_ms = 400.0;
  // Random-walk track.
  int sessions = 3;
  double session_duration_s = 600.0;
  double speed_mps = 0.6;
  double turn_sigma_rad = 0.5;
  std::int64_t start_ms = 1'668'519'000'000;
  std::uint64_t seed = 11;
  std::string tag = "tag0";
};

struct SyntheticFlat {
  FloorPlan plan;
  LoadedDataset data;
};

// Anchors sit in the corners (then mid-edges); four rectangular rooms tile
// the canvas.
SyntheticFlat generate_synthetic(const SyntheticOptions& options);

// Writes flat.json plus one label and one RSSI file per session and returns
// the plan re-read from disk.
FloorPlan write_synthetic(const SyntheticFlat& flat, const std::filesystem::path& dir);

}  // namespace rssiloc
