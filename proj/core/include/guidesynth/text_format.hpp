#pragma once

// Flat `key = value` documents used for configs, manifests and result files.
// Blank lines and lines starting with '#' are ignored. Keys are unique and
// keep their insertion order when written back.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace guidesynth {

class KeyValueDoc {
 public:
  static KeyValueDoc parse(std::string_view text);
  static KeyValueDoc load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  bool contains(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;

  // Throws Error(kParseError) naming the key when it is absent.
  const std::string& require(std::string_view key) const;
  double require_double(std::string_view key) const;
  long long require_int(std::string_view key) const;
  std::vector<double> require_doubles(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string str() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Shortest decimal that parses back to the same double.
std::string format_double(double v);
std::string format_doubles(const std::vector<double>& values);

double parse_double(std::string_view text);
long long parse_int(std::string_view text);
std::uint64_t parse_u64(std::string_view text);
std::vector<std::string> split_whitespace(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace guidesynth
