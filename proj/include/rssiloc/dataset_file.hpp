#pragma once

#include <filesystem>
#include <string>

#include "rssiloc/segmentation.hpp"

namespace rssiloc {

// Binary container for a generated training set (all integers and reals
// little-endian, reals as IEEE-754 binary64):
//
//   "RLDS"            magic
//   u32               format version (1)
//   u32 + bytes       JSON header: flat dims, technology, tag, window spec,
//                     roster, room names, discard report
//   u64               record count
//   per record:
//     i64             t* (epoch ms)
//     f64 x4          x_px, y_px, x_norm, y_norm
//     i32             room index, -1 when outside every room
//     f64 x n         frame values, n = |roster| * 3 * n_steps, source-major
//     u8  x n         missing mask (1 = imputed)
//   u32               CRC32 of everything above
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void save_training_set(const TrainingSet& set, const std::filesystem::path& path);
TrainingSet load_training_set(const std::filesystem::path& path);

std::string meta_to_json_text(const DatasetMeta& meta);
DatasetMeta meta_from_json_text(const std::string& text);

}  // namespace rssiloc
