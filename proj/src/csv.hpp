#pragma once
// Minimal comma-separated line handling shared by the table readers.
// Fields are not quoted; a field may not contain a comma or a line break.

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace disagg::csv {

inline std::vector<std::string> split(std::string_view line, char delimiter = ',') {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

// Reads one line, dropping a trailing CR. Returns false at end of input.
inline bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace disagg::csv
