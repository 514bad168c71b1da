// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace promptrl {

// Lowercase ASCII copy.
std::string to_lower(std::string_view s);

// Trim leading/trailing whitespace and collapse interior runs to one space.
std::string normalize_whitespace(std::string_view s);

// normalize_whitespace + to_lower; the canonical form used for prompt
// deduplication and lexicon matching.
std::string normalize_prompt(std::string_view s);

// Split on `sep`, trimming each piece. Empty pieces are kept out.
std::vector<std::string> split_segments(std::string_view s, char sep = ',');

// Join segments with ", ".
std::string join_segments(const std::vector<std::string>& segments);

// Remove every whitespace character (fuzzy lexicon comparisons).
std::string strip_spaces(std::string_view s);

}  // namespace promptrl
