// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace promptrl {

// Whitelist of stylistic modifier phrases. Matching is on the
// whitespace-normalized lowercase form; fuzzy matching additionally ignores
// spaces entirely so "8 k" matches the entry "8k".
class ModifierLexicon {
 public:
  static ModifierLexicon from_entries(std::vector<std::string> entries);
  // One phrase per line; '#' lines are comments.
  static ModifierLexicon load(const std::filesystem::path& file);
  // The default whitelist, mirrored in data/modifier_lexicon.txt.
  static ModifierLexicon builtin();

  bool matches(std::string_view segment, bool fuzzy = true) const;
  const std::vector<std::string>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

 private:
  std::vector<std::string> entries_;          // normalized
  std::unordered_set<std::string> exact_;     // normalized
  std::unordered_set<std::string> spaceless_; // normalized, spaces removed
};

}  // namespace promptrl
