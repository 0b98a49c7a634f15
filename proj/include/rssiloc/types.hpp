#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace rssiloc {

enum class Tech { Uwb, Ble };

std::string_view tech_name(Tech tech);
Tech parse_tech(std::string_view name);

struct PointPx {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const PointPx&, const PointPx&) = default;
};

struct PointMm {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const PointMm&, const PointMm&) = default;
};

// Readings below this are treated as "not heard"; also the imputation value
// for empty feature cells.
inline constexpr double kRssiFloorDbm = -100.0;

}  // namespace rssiloc
