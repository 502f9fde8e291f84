#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace riot {

/// Line-oriented `key = value [tag...]` file. `#` starts a comment, blank
/// lines are ignored, keys are unique. Used for gateway constants and node
/// calibration tables.
class KeyValueFile {
 public:
  struct Entry {
    std::string key;
    std::string value;
    std::vector<std::string> tags;  // whitespace-separated words after the value
  };

  static KeyValueFile parse(std::string_view text, std::string_view origin = "<memory>");
  static KeyValueFile load(const std::filesystem::path& path);

  const std::vector<Entry>& entries() const { return entries_; }
  const Entry* find(std::string_view key) const;
  std::optional<double> get_double(std::string_view key) const;

  void set(std::string key, std::string value, std::vector<std::string> tags = {});
  void add_comment(std::string line) { header_.push_back(std::move(line)); }

  std::string render() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<Entry> entries_;
};

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace riot
