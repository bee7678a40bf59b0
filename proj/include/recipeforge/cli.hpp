#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "recipeforge/text.hpp"

namespace recipeforge::cli {

/// Layered settings: defaults < config file < RECIPEFORGE_<KEY> env < flags.
class Settings {
public:
  Settings();

  static const Json& defaults();

  /// Unknown keys and ill-typed values throw ConfigError.
  void merge_file(const std::filesystem::path& path);
  void merge_env();
  void set(const std::string& key, const std::string& value);

  const Json& values() const noexcept { return values_; }
  std::string str(const std::string& key) const;
  double num(const std::string& key) const;
  std::uint64_t count(const std::string& key) const;

private:
  void assign(const std::string& key, const Json& value);
  Json values_;
};

/// Entry point behind the recipeforge executable. 0 success, 1 domain
/// error, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace recipeforge::cli
