#pragma once

#include <filesystem>
#include <random>
#include <string>

namespace testpaths {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(CODECOT_FIXTURE_DIR) / rel; }

/// Fresh directory under the system temp dir, removed by the destructor.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("codecot-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& rel) const { return path / rel; }
};

}  // namespace testpaths
