// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace promptrl {

// Word-level vocabulary with dense ids. The four specials occupy the first
// slots; "," and ":" are ordinary tokens so prompts round-trip through
// encode/decode.
class Vocabulary {
 public:
  static constexpr const char* kPad = "<pad>";
  static constexpr const char* kBos = "<bos>";
  static constexpr const char* kEos = "<eos>";
  static constexpr const char* kUnk = "<unk>";

  // One token per line; '#' lines are comments. Specials are prepended if
  // the file does not list them.
  static Vocabulary load(const std::filesystem::path& file);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int pad_id() const { return pad_id_; }
  int bos_id() const { return bos_id_; }
  int eos_id() const { return eos_id_; }
  int unk_id() const { return unk_id_; }

  const std::string& token(int id) const { return tokens_.at(id); }
  std::optional<int> id_of(std::string_view token) const;

  // Lowercases, splits into word runs [a-z0-9]+ plus single punctuation
  // tokens; unknown words map to <unk>. No specials are added.
  std::vector<int> encode(std::string_view text) const;

  // The token strings encode() would look up, before any id mapping.
  static std::vector<std::string> split_words(std::string_view text);

  // Inverse of encode up to whitespace: words joined by single spaces,
  // "," and ":" attached to the preceding token. Specials are skipped.
  std::string decode(std::span<const int> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int pad_id_ = 0, bos_id_ = 1, eos_id_ = 2, unk_id_ = 3;
};

}  // namespace promptrl
