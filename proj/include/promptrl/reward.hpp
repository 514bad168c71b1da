// SPDX-License-Identifier: Apache-2.0
//
// Reward computation over pluggable generator/scorer backends. The score a
// policy maximizes splits into a clipped image-text relevance term (guarding
// against intent drift), an aesthetic improvement term, and a per-token KL
// penalty against the frozen supervised policy.
#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "promptrl/lexicon.hpp"
#include "promptrl/model.hpp"

namespace promptrl {

// A generated image reduced to what the scorers consume: an embedding and a
// precomputed aesthetic value. Backends that render real images also carry
// the encoded bytes; embedding-only backends leave `pixels` empty.
struct ImageSample {
  std::vector<double> embedding;
  double aesthetic = 0.0;
  std::vector<uint8_t> pixels;
};

class ImageGenerator {
 public:
  virtual ~ImageGenerator() = default;
  // `count` images for the prompt; deterministic given (prompt, seed).
  virtual std::vector<ImageSample> generate(const std::string& prompt, uint64_t seed,
                                            int count) const = 0;
  // True when generate() fills ImageSample::pixels with encoded image bytes.
  virtual bool produces_pixels() const { return false; }
};

class SimilarityScorer {
 public:
  virtual ~SimilarityScorer() = default;
  // Text-image similarity, nominal range about [-1, 1].
  virtual double score(const std::string& text, const ImageSample& image) const = 0;
};

class AestheticScorer {
 public:
  virtual ~AestheticScorer() = default;
  // Nominal range about [0, 10].
  virtual double score(const ImageSample& image) const = 0;
};

// (prompt, seed) -> generated images. Values are deterministic, so concurrent
// overwrites are benign; a hit returns exactly what a cold call would.
class EmbeddingCache {
 public:
  std::optional<std::vector<ImageSample>> find(const std::string& prompt,
                                               uint64_t seed) const;
  void store(const std::string& prompt, uint64_t seed, std::vector<ImageSample> images);
  size_t size() const;
  size_t hit_count() const;
  size_t miss_count() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::vector<ImageSample>> map_;
  mutable size_t hits_ = 0;
  mutable size_t misses_ = 0;
};

struct ScorerSuite {
  std::shared_ptr<ImageGenerator> generator;
  std::shared_ptr<SimilarityScorer> similarity;
  std::shared_ptr<AestheticScorer> aesthetic;
  std::shared_ptr<EmbeddingCache> cache;  // optional
  int images_per_prompt = 3;
  // Relevance transform min(scale * sim - offset, 0); the implied similarity
  // threshold is offset / scale = 0.28 at the defaults.
  double relevance_scale = 20.0;
  double relevance_offset = 5.6;

  void validate() const;
};

struct RewardBreakdown {
  double f_rel = 0.0;  // always <= 0
  double f_aes = 0.0;
  std::vector<double> kl_per_token;
  double kl_coefficient = 0.2;
  double total = 0.0;  // f_aes + f_rel - coefficient * sum(kl)
};

// Images for a prompt, via the suite's cache when present.
std::vector<ImageSample> images_for(const ScorerSuite& suite, const std::string& prompt,
                                    uint64_t seed);

// Mean over images from the candidate y of min(scale*sim - offset, 0), with
// similarity always measured against the ORIGINAL prompt x.
double relevance_score(const std::string& x, const std::string& y,
                       const ScorerSuite& suite, uint64_t seed);

// Mean over index-paired images (same seed list) of aes(G(y)) - aes(G(x)).
double aesthetic_score(const std::string& x, const std::string& y,
                       const ScorerSuite& suite, uint64_t seed);

// Per-token log pi_policy(y_t | q, y_<t) - log pi_reference(...); the caller
// applies the coefficient.
std::vector<double> kl_penalty(std::span<const int> query_tokens,
                               std::span<const int> response_tokens,
                               const PolicyModel& policy, const PolicyModel& reference);

RewardBreakdown total_reward(const std::string& x, const std::string& y,
                             std::span<const int> query_tokens,
                             std::span<const int> response_tokens,
                             const PolicyModel& policy, const PolicyModel& reference,
                             const ScorerSuite& suite, double kl_coefficient,
                             uint64_t seed);

// Deterministic mock backend: pseudo-images are hashed bag-of-content-token
// embeddings of the source prompt plus seeded noise; aesthetic value is a
// base plus 0.5 per distinct whitelisted modifier, capped at +2.0. Exact
// enough that reward deltas can be computed by hand.
ScorerSuite synthetic_world();
ScorerSuite synthetic_world(const ModifierLexicon& lexicon);

// Constants of the synthetic world, exposed for oracle computations in tests.
constexpr double kSyntheticAestheticBase = 5.0;
constexpr double kSyntheticAestheticPerModifier = 0.5;
constexpr double kSyntheticAestheticCap = 2.0;
constexpr int kSyntheticEmbeddingDim = 32;
constexpr double kSyntheticNoiseScale = 0.02;

// Best aesthetic delta achievable over y for a given x in the synthetic
// world: the cap when x has no modifiers, else cap minus what x already has.
double synthetic_aesthetic_ceiling(const std::string& x, const ModifierLexicon& lexicon);

// The synthetic world's noise-free text embedding (bag of content tokens,
// whitelisted modifier segments excluded). Zero vector when no content.
std::vector<double> synthetic_text_embedding(const std::string& text,
                                             const ModifierLexicon& lexicon);

}  // namespace promptrl
