// SPDX-License-Identifier: Apache-2.0
#include "promptrl/vocab.hpp"

#include <cctype>
#include <fstream>

#include "promptrl/errors.hpp"
#include "promptrl/text.hpp"

namespace promptrl {

namespace {

bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
}

std::vector<std::string> word_split(std::string_view text) {
  const std::string lower = to_lower(text);
  std::vector<std::string> out;
  std::string word;
  for (char c : lower) {
    if (is_word_char(c)) {
      word.push_back(c);
      continue;
    }
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(std::string(1, c));
  }
  if (!word.empty()) out.push_back(word);
  return out;
}

}  // namespace

Vocabulary Vocabulary::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open vocabulary file: " + file.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = normalize_whitespace(line);
    if (t.empty() || t[0] == '#') continue;
    tokens.push_back(t);
  }
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  const std::vector<std::string> specials = {kPad, kBos, kEos, kUnk};
  for (const auto& s : specials) {
    if (std::find(tokens.begin(), tokens.end(), s) == tokens.end())
      v.tokens_.push_back(s);
  }
  for (auto& t : tokens) v.tokens_.push_back(std::move(t));
  for (int i = 0; i < static_cast<int>(v.tokens_.size()); ++i) {
    if (!v.index_.emplace(v.tokens_[i], i).second)
      throw ConfigError("duplicate vocabulary token: " + v.tokens_[i]);
  }
  v.pad_id_ = v.index_.at(kPad);
  v.bos_id_ = v.index_.at(kBos);
  v.eos_id_ = v.index_.at(kEos);
  v.unk_id_ = v.index_.at(kUnk);
  return v;
}

std::optional<int> Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : word_split(text)) {
    auto it = index_.find(w);
    ids.push_back(it == index_.end() ? unk_id_ : it->second);
  }
  return ids;
}

std::vector<std::string> Vocabulary::split_words(std::string_view text) {
  return word_split(text);
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == pad_id_ || id == bos_id_ || id == eos_id_) continue;
    const std::string& t = tokens_.at(id);
    const bool punct = (t == "," || t == ":");
    if (!out.empty() && !punct) out.push_back(' ');
    out += t;
  }
  return out;
}

}  // namespace promptrl
