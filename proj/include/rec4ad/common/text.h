#ifndef REC4AD_COMMON_TEXT_H_
#define REC4AD_COMMON_TEXT_H_

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "rec4ad/common/error.h"

namespace rec4ad {

inline std::vector<std::string_view> Split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = line.find(sep, start);
    fields.push_back(line.substr(start, at == std::string_view::npos ? at : at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return fields;
}

inline std::vector<std::string_view> SplitTabs(std::string_view line) { return Split(line, '\t'); }

// Strict parse: the whole field must be consumed.
template <typename T>
T ParseNumber(std::string_view text, const std::filesystem::path& path, std::size_t line) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": bad number '" +
                      std::string(text) + "'");
  }
  return value;
}

// Shortest representation that round-trips exactly.
inline std::string FormatDouble(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::ofstream OpenOut(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  return out;
}

// A missing input is reported as stale so the CLI can ask for the producing stage.
inline std::ifstream OpenIn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StaleInputError("missing input file: " + path.string());
  return in;
}

}  // namespace rec4ad

#endif  // REC4AD_COMMON_TEXT_H_
