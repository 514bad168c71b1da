// SPDX-License-Identifier: Apache-2.0
#include "promptrl/reward.hpp"

#include <algorithm>
#include <cmath>

#include "promptrl/errors.hpp"
#include "promptrl/rng.hpp"
#include "promptrl/text.hpp"

namespace promptrl {

namespace {
std::string cache_key(const std::string& prompt, uint64_t seed) {
  return std::to_string(seed) + "\x1f" + normalize_prompt(prompt);
}
}  // namespace

std::optional<std::vector<ImageSample>> EmbeddingCache::find(const std::string& prompt,
                                                             uint64_t seed) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = map_.find(cache_key(prompt, seed));
  if (it == map_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

void EmbeddingCache::store(const std::string& prompt, uint64_t seed,
                           std::vector<ImageSample> images) {
  std::lock_guard<std::mutex> lock(mu_);
  map_[cache_key(prompt, seed)] = std::move(images);
}

size_t EmbeddingCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return map_.size();
}
size_t EmbeddingCache::hit_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return hits_;
}
size_t EmbeddingCache::miss_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return misses_;
}

void ScorerSuite::validate() const {
  if (!generator || !similarity || !aesthetic)
    throw ConfigError("scorer suite: generator, similarity, and aesthetic are required");
  if (images_per_prompt <= 0)
    throw ConfigError("scorer suite: images_per_prompt must be positive");
  if (relevance_scale <= 0.0)
    throw ConfigError("scorer suite: relevance_scale must be positive");
}

std::vector<ImageSample> images_for(const ScorerSuite& suite, const std::string& prompt,
                                    uint64_t seed) {
  suite.validate();
  if (suite.cache) {
    if (auto hit = suite.cache->find(prompt, seed)) return *hit;
  }
  std::vector<ImageSample> images =
      suite.generator->generate(prompt, seed, suite.images_per_prompt);
  if (static_cast<int>(images.size()) != suite.images_per_prompt)
    throw RewardUnavailableError("generator returned " + std::to_string(images.size()) +
                                 " images, expected " +
                                 std::to_string(suite.images_per_prompt));
  if (suite.cache) suite.cache->store(prompt, seed, images);
  return images;
}

double relevance_score(const std::string& x, const std::string& y,
                       const ScorerSuite& suite, uint64_t seed) {
  const std::vector<ImageSample> images = images_for(suite, y, seed);
  double sum = 0.0;
  for (const ImageSample& img : images) {
    const double sim = suite.similarity->score(x, img);
    sum += std::min(suite.relevance_scale * sim - suite.relevance_offset, 0.0);
  }
  return sum / static_cast<double>(images.size());
}

double aesthetic_score(const std::string& x, const std::string& y,
                       const ScorerSuite& suite, uint64_t seed) {
  const std::vector<ImageSample> from_y = images_for(suite, y, seed);
  const std::vector<ImageSample> from_x = images_for(suite, x, seed);
  double sum = 0.0;
  for (size_t j = 0; j < from_y.size(); ++j)
    sum += suite.aesthetic->score(from_y[j]) - suite.aesthetic->score(from_x[j]);
  return sum / static_cast<double>(from_y.size());
}

std::vector<double> kl_penalty(std::span<const int> query_tokens,
                               std::span<const int> response_tokens,
                               const PolicyModel& policy, const PolicyModel& reference) {
  if (policy.vocab().tokens() != reference.vocab().tokens())
    throw ConfigError("kl_penalty: policy and reference vocabularies differ");
  const std::vector<double> lp = policy.sequence_log_prob(query_tokens, response_tokens);
  const std::vector<double> lr = reference.sequence_log_prob(query_tokens, response_tokens);
  std::vector<double> out(lp.size());
  for (size_t t = 0; t < lp.size(); ++t) out[t] = lp[t] - lr[t];
  return out;
}

RewardBreakdown total_reward(const std::string& x, const std::string& y,
                             std::span<const int> query_tokens,
                             std::span<const int> response_tokens,
                             const PolicyModel& policy, const PolicyModel& reference,
                             const ScorerSuite& suite, double kl_coefficient,
                             uint64_t seed) {
  RewardBreakdown out;
  out.f_rel = relevance_score(x, y, suite, seed);
  out.f_aes = aesthetic_score(x, y, suite, seed);
  out.kl_per_token = kl_penalty(query_tokens, response_tokens, policy, reference);
  out.kl_coefficient = kl_coefficient;
  double kl_sum = 0.0;
  for (double k : out.kl_per_token) kl_sum += k;
  out.total = out.f_aes + out.f_rel - kl_coefficient * kl_sum;
  return out;
}

namespace {

// Stable pseudo-embedding of one word.
std::vector<double> token_vector(const std::string& word) {
  Rng rng(derive_seed(fnv1a64(word), "synthetic-token-embed"));
  std::vector<double> v(kSyntheticEmbeddingDim);
  for (double& x : v) x = rng.normal();
  return v;
}

std::vector<std::string> content_words(const std::string& prompt,
                                       const ModifierLexicon& lexicon) {
  std::vector<std::string> words;
  for (const std::string& seg : split_segments(normalize_prompt(prompt))) {
    if (lexicon.matches(seg)) continue;
    size_t pos = 0;
    while (pos < seg.size()) {
      while (pos < seg.size() && seg[pos] == ' ') ++pos;
      size_t end = pos;
      while (end < seg.size() && seg[end] != ' ') ++end;
      if (end > pos) words.push_back(seg.substr(pos, end - pos));
      pos = end;
    }
  }
  return words;
}

std::vector<double> content_embedding(const std::string& prompt,
                                      const ModifierLexicon& lexicon) {
  std::vector<double> sum(kSyntheticEmbeddingDim, 0.0);
  for (const std::string& w : content_words(prompt, lexicon)) {
    const std::vector<double> v = token_vector(w);
    for (int i = 0; i < kSyntheticEmbeddingDim; ++i) sum[i] += v[i];
  }
  return sum;
}

int distinct_modifier_count(const std::string& prompt, const ModifierLexicon& lexicon) {
  std::unordered_set<std::string> seen;
  for (const std::string& seg : split_segments(normalize_prompt(prompt)))
    if (lexicon.matches(seg)) seen.insert(strip_spaces(seg));
  return static_cast<int>(seen.size());
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

class SyntheticGenerator final : public ImageGenerator {
 public:
  explicit SyntheticGenerator(ModifierLexicon lexicon) : lexicon_(std::move(lexicon)) {}

  std::vector<ImageSample> generate(const std::string& prompt, uint64_t seed,
                                    int count) const override {
    if (normalize_prompt(prompt).empty())
      throw RewardUnavailableError("synthetic generator: empty prompt");
    const std::vector<double> base = content_embedding(prompt, lexicon_);
    const double aes =
        kSyntheticAestheticBase +
        std::min(kSyntheticAestheticPerModifier * distinct_modifier_count(prompt, lexicon_),
                 kSyntheticAestheticCap);
    std::vector<ImageSample> out(count);
    for (int j = 0; j < count; ++j) {
      // Noise depends only on (seed, image index), never on the prompt, so
      // content-identical prompts under one seed yield identical embeddings.
      Rng noise(derive_seed(seed, static_cast<uint64_t>(j)));
      ImageSample& img = out[j];
      img.embedding.resize(kSyntheticEmbeddingDim);
      for (int i = 0; i < kSyntheticEmbeddingDim; ++i)
        img.embedding[i] = base[i] + kSyntheticNoiseScale * noise.normal();
      img.aesthetic = aes;
    }
    return out;
  }

 private:
  ModifierLexicon lexicon_;
};

class SyntheticSimilarity final : public SimilarityScorer {
 public:
  explicit SyntheticSimilarity(ModifierLexicon lexicon) : lexicon_(std::move(lexicon)) {}
  double score(const std::string& text, const ImageSample& image) const override {
    return cosine(content_embedding(text, lexicon_), image.embedding);
  }

 private:
  ModifierLexicon lexicon_;
};

class SyntheticAesthetic final : public AestheticScorer {
 public:
  double score(const ImageSample& image) const override { return image.aesthetic; }
};

}  // namespace

ScorerSuite synthetic_world() { return synthetic_world(ModifierLexicon::builtin()); }

ScorerSuite synthetic_world(const ModifierLexicon& lexicon) {
  ScorerSuite suite;
  suite.generator = std::make_shared<SyntheticGenerator>(lexicon);
  suite.similarity = std::make_shared<SyntheticSimilarity>(lexicon);
  suite.aesthetic = std::make_shared<SyntheticAesthetic>();
  suite.cache = std::make_shared<EmbeddingCache>();
  return suite;
}

double synthetic_aesthetic_ceiling(const std::string& x, const ModifierLexicon& lexicon) {
  const double have =
      std::min(kSyntheticAestheticPerModifier * distinct_modifier_count(x, lexicon),
               kSyntheticAestheticCap);
  return kSyntheticAestheticCap - have;
}

std::vector<double> synthetic_text_embedding(const std::string& text,
                                             const ModifierLexicon& lexicon) {
  return content_embedding(text, lexicon);
}

}  // namespace promptrl
