#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "rssiloc/error.hpp"

namespace testutil {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("rssiloc_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename F>
rssiloc::Errc error_code_of(F&& f) {
  try {
    f();
  } catch (const rssiloc::Error& e) {
    return e.code();
  }
  throw std::logic_error("expected rssiloc::Error");
}

}  // namespace testutil

#define CHECK_ERRC(expr, errc) CHECK(::testutil::error_code_of([&] { (void)(expr); }) == (errc))
