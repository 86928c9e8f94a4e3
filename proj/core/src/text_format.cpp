#include "guidesynth/text_format.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "guidesynth/error.hpp"

namespace guidesynth {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueDoc KeyValueDoc::parse(std::string_view text) {
  KeyValueDoc doc;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": empty key");
    }
    if (doc.contains(key)) {
      throw Error(ErrorCode::kParseError, "duplicate key '" + key + "'");
    }
    doc.entries_.emplace_back(key, std::string(trim(line.substr(eq + 1))));
  }
  return doc;
}

KeyValueDoc KeyValueDoc::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

void KeyValueDoc::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

bool KeyValueDoc::contains(std::string_view key) const { return find(key).has_value(); }

std::optional<std::string> KeyValueDoc::find(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) {
      return v;
    }
  }
  return std::nullopt;
}

const std::string& KeyValueDoc::require(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) {
      return v;
    }
  }
  throw Error(ErrorCode::kParseError, "missing key '" + std::string(key) + "'");
}

double KeyValueDoc::require_double(std::string_view key) const { return parse_double(require(key)); }

long long KeyValueDoc::require_int(std::string_view key) const { return parse_int(require(key)); }

std::vector<double> KeyValueDoc::require_doubles(std::string_view key) const {
  std::vector<double> out;
  for (const auto& tok : split_whitespace(require(key))) {
    out.push_back(parse_double(tok));
  }
  return out;
}

std::string KeyValueDoc::str() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

void KeyValueDoc::save(const std::filesystem::path& path) const { write_text_file(path, str()); }

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) {
    throw Error(ErrorCode::kInvalidParams, "cannot format double");
  }
  return std::string(buf, ptr);
}

std::string format_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i != 0) {
      out += ' ';
    }
    out += format_double(values[i]);
  }
  return out;
}

double parse_double(std::string_view text) {
  const std::string s(trim(text));
  if (s.empty()) {
    throw Error(ErrorCode::kParseError, "expected a number, got an empty string");
  }
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw Error(ErrorCode::kParseError, "not a number: '" + s + "'");
  }
  return v;
}

long long parse_int(std::string_view text) {
  const std::string_view s = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw Error(ErrorCode::kParseError, "not an integer: '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view text) {
  const std::string_view s = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw Error(ErrorCode::kParseError, "not an unsigned 64-bit integer: '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r' || text[i] == '\n')) {
      ++i;
    }
    const std::size_t start = i;
    while (i < text.size() && !(text[i] == ' ' || text[i] == '\t' || text[i] == '\r' || text[i] == '\n')) {
      ++i;
    }
    if (i > start) {
      out.emplace_back(text.substr(start, i - start));
    }
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw Error(ErrorCode::kIoError, "short write to " + path.string());
  }
}

}  // namespace guidesynth
