// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "promptrl/errors.hpp"
#include "promptrl/remote.hpp"
#include "promptrl/reward.hpp"

using namespace promptrl;

TEST_CASE("remote scorer matches the in-process world") {
  SyntheticScorerServer server;
  const int port = server.start();
  REQUIRE(port > 0);

  ScorerSuite remote = remote_world("127.0.0.1", port);
  ScorerSuite local = synthetic_world();

  const std::vector<std::pair<std::string, std::string>> cases = {
      {"a cat", "a cat, artstation"},
      {"an old barn in snow", "an old barn in snow, oil painting, 8k"},
      {"a cat", "artstation"},
  };
  for (const auto& [x, y] : cases) {
    for (uint64_t seed : {3ull, 19ull}) {
      const double rel_r = relevance_score(x, y, remote, seed);
      const double rel_l = relevance_score(x, y, local, seed);
      CHECK(rel_r == doctest::Approx(rel_l).epsilon(1e-12));
      const double aes_r = aesthetic_score(x, y, remote, seed);
      const double aes_l = aesthetic_score(x, y, local, seed);
      CHECK(aes_r == doctest::Approx(aes_l).epsilon(1e-12));
    }
  }
  server.stop();
}

TEST_CASE("remote client reports an unreachable backend as a dependency error") {
  // Port 1 on loopback is never listening in this sandbox.
  CHECK_THROWS_AS(remote_world("127.0.0.1", 1), DependencyError);
  RemoteScorerClient client("127.0.0.1", 1);
  CHECK_THROWS_AS(client.check_health(), DependencyError);
}

TEST_CASE("remote health advertises the protocol version") {
  SyntheticScorerServer server;
  const int port = server.start();
  RemoteScorerClient client("127.0.0.1", port);
  CHECK_NOTHROW(client.check_health());
  auto images = client.images("a cat", 7, 3);
  CHECK(images.size() == 3);
  CHECK(images[0].embedding.size() == static_cast<size_t>(kSyntheticEmbeddingDim));
  auto text = client.text_embedding("a cat");
  CHECK(text.size() == static_cast<size_t>(kSyntheticEmbeddingDim));
  server.stop();
}
