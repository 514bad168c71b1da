// SPDX-License-Identifier: Apache-2.0
#include "promptrl/text.hpp"

#include <cctype>

namespace promptrl {

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = true;  // swallow leading whitespace
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
    } else {
      if (in_space && !out.empty()) out.push_back(' ');
      out.push_back(c);
      in_space = false;
    }
  }
  return out;
}

std::string normalize_prompt(std::string_view s) { return to_lower(normalize_whitespace(s)); }

std::vector<std::string> split_segments(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t end = s.find(sep, start);
    if (end == std::string_view::npos) end = s.size();
    std::string piece = normalize_whitespace(s.substr(start, end - start));
    if (!piece.empty()) out.push_back(std::move(piece));
    if (end == s.size()) break;
    start = end + 1;
  }
  return out;
}

std::string join_segments(const std::vector<std::string>& segments) {
  std::string out;
  for (size_t i = 0; i < segments.size(); ++i) {
    if (i > 0) out += ", ";
    out += segments[i];
  }
  return out;
}

std::string strip_spaces(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  return out;
}

}  // namespace promptrl
