// SPDX-License-Identifier: Apache-2.0
//
// Optional remote scorer backend. The wire protocol carries embeddings and
// aesthetic values only; every reward formula stays local.
//
//   GET  /healthz              -> {"status":"ok","protocol_version":1}
//   POST /v1/images {prompt, seed, count}
//                              -> {"embeddings":[[...]], "aesthetics":[...]}
//   POST /v1/text   {text}     -> {"embedding":[...]}
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "promptrl/reward.hpp"

namespace promptrl {

constexpr int kScorerProtocolVersion = 1;

class RemoteScorerClient {
 public:
  RemoteScorerClient(std::string host, int port);
  ~RemoteScorerClient();

  // DependencyError when the endpoint is unreachable or speaks another
  // protocol version.
  void check_health() const;

  // RewardUnavailableError on any transport or payload failure.
  std::vector<ImageSample> images(const std::string& prompt, uint64_t seed,
                                  int count) const;
  std::vector<double> text_embedding(const std::string& text) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Suite whose generator and similarity call the remote endpoint; performs a
// health check up front. Aesthetic values ride along with the images.
ScorerSuite remote_world(const std::string& host, int port);

// Reference server: exposes a local synthetic world over the protocol.
// Used by tests and as the protocol's executable documentation.
class SyntheticScorerServer {
 public:
  explicit SyntheticScorerServer(const ModifierLexicon& lexicon = ModifierLexicon::builtin());
  ~SyntheticScorerServer();

  // Binds to 127.0.0.1 on a free port and serves on a background thread.
  int start();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace promptrl
