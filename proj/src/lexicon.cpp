// SPDX-License-Identifier: Apache-2.0
#include "promptrl/lexicon.hpp"

#include "promptrl/errors.hpp"
#include "promptrl/io.hpp"
#include "promptrl/text.hpp"

namespace promptrl {

ModifierLexicon ModifierLexicon::from_entries(std::vector<std::string> entries) {
  ModifierLexicon lex;
  for (const std::string& e : entries) {
    std::string norm = normalize_prompt(e);
    if (norm.empty()) continue;
    if (lex.exact_.insert(norm).second) {
      lex.spaceless_.insert(strip_spaces(norm));
      lex.entries_.push_back(std::move(norm));
    }
  }
  if (lex.entries_.empty()) throw ConfigError("modifier lexicon has no usable entries");
  return lex;
}

ModifierLexicon ModifierLexicon::load(const std::filesystem::path& file) {
  return from_entries(read_lines(file));
}

ModifierLexicon ModifierLexicon::builtin() {
  return from_entries({
      "artstation",
      "trending on artstation",
      "8k",
      "4k",
      "highly detailed",
      "masterpiece",
      "cinematic lighting",
      "oil painting",
      "digital art",
      "unreal engine",
      "sharp focus",
      "concept art",
      "octane render",
      "studio lighting",
  });
}

bool ModifierLexicon::matches(std::string_view segment, bool fuzzy) const {
  const std::string norm = normalize_prompt(segment);
  if (exact_.count(norm)) return true;
  return fuzzy && spaceless_.count(strip_spaces(norm)) > 0;
}

}  // namespace promptrl
