#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "recipeforge/task_pool.hpp"
#include "recipeforge/text.hpp"

namespace rftest {

namespace fs = std::filesystem;

inline fs::path fixture_dir() { return RF_FIXTURE_DIR; }
inline fs::path golden_dir() { return RF_GOLDEN_DIR; }

inline recipeforge::pool::TaskSpec fixture_task() {
  return recipeforge::pool::load_task(fixture_dir() / "task.json");
}

/// Fresh directory removed on scope exit.
class TempDir {
public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("rf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
  fs::path path_;
};

}  // namespace rftest
