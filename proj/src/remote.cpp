// SPDX-License-Identifier: Apache-2.0
#include "promptrl/remote.hpp"

#include <mutex>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "promptrl/errors.hpp"

namespace promptrl {

using nlohmann::json;

struct RemoteScorerClient::Impl {
  std::string host;
  int port;
  mutable httplib::Client client;

  Impl(std::string h, int p) : host(std::move(h)), port(p), client(host, port) {
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(10, 0);
  }
};

RemoteScorerClient::RemoteScorerClient(std::string host, int port)
    : impl_(std::make_unique<Impl>(std::move(host), port)) {}
RemoteScorerClient::~RemoteScorerClient() = default;

void RemoteScorerClient::check_health() const {
  auto res = impl_->client.Get("/healthz");
  if (!res || res->status != 200)
    throw DependencyError("scorer endpoint " + impl_->host + ":" +
                          std::to_string(impl_->port) + " is unreachable");
  try {
    json body = json::parse(res->body);
    if (body.value("status", "") != "ok")
      throw DependencyError("scorer endpoint reports status '" +
                            body.value("status", "?") + "'");
    if (body.value("protocol_version", -1) != kScorerProtocolVersion)
      throw DependencyError("scorer endpoint protocol version " +
                            std::to_string(body.value("protocol_version", -1)) +
                            ", expected " + std::to_string(kScorerProtocolVersion));
  } catch (const json::exception&) {
    throw DependencyError("scorer endpoint returned a malformed health payload");
  }
}

std::vector<ImageSample> RemoteScorerClient::images(const std::string& prompt,
                                                    uint64_t seed, int count) const {
  const json req = {{"prompt", prompt}, {"seed", seed}, {"count", count}};
  auto res = impl_->client.Post("/v1/images", req.dump(), "application/json");
  if (!res || res->status != 200)
    throw RewardUnavailableError("image request failed" +
                                 (res ? " with status " + std::to_string(res->status)
                                      : std::string(" (no response)")));
  try {
    json body = json::parse(res->body);
    const auto& embs = body.at("embeddings");
    const auto& aes = body.at("aesthetics");
    if (embs.size() != aes.size() || static_cast<int>(embs.size()) != count)
      throw RewardUnavailableError("image response count mismatch");
    std::vector<ImageSample> out(count);
    for (int j = 0; j < count; ++j) {
      out[j].embedding = embs[j].get<std::vector<double>>();
      out[j].aesthetic = aes[j].get<double>();
    }
    return out;
  } catch (const json::exception& e) {
    throw RewardUnavailableError(std::string("malformed image response: ") + e.what());
  }
}

std::vector<double> RemoteScorerClient::text_embedding(const std::string& text) const {
  const json req = {{"text", text}};
  auto res = impl_->client.Post("/v1/text", req.dump(), "application/json");
  if (!res || res->status != 200)
    throw RewardUnavailableError("text embedding request failed");
  try {
    return json::parse(res->body).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw RewardUnavailableError(std::string("malformed text response: ") + e.what());
  }
}

namespace {

class RemoteGenerator final : public ImageGenerator {
 public:
  explicit RemoteGenerator(std::shared_ptr<RemoteScorerClient> client)
      : client_(std::move(client)) {}
  std::vector<ImageSample> generate(const std::string& prompt, uint64_t seed,
                                    int count) const override {
    return client_->images(prompt, seed, count);
  }

 private:
  std::shared_ptr<RemoteScorerClient> client_;
};

class RemoteSimilarity final : public SimilarityScorer {
 public:
  explicit RemoteSimilarity(std::shared_ptr<RemoteScorerClient> client)
      : client_(std::move(client)) {}

  double score(const std::string& text, const ImageSample& image) const override {
    const std::vector<double> t = embed(text);
    double dot = 0.0, nt = 0.0, ni = 0.0;
    if (t.size() != image.embedding.size())
      throw RewardUnavailableError("text/image embedding dimension mismatch");
    for (size_t i = 0; i < t.size(); ++i) {
      dot += t[i] * image.embedding[i];
      nt += t[i] * t[i];
      ni += image.embedding[i] * image.embedding[i];
    }
    if (nt == 0.0 || ni == 0.0) return 0.0;
    return dot / (std::sqrt(nt) * std::sqrt(ni));
  }

 private:
  std::vector<double> embed(const std::string& text) const {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = text_cache_.find(text);
      if (it != text_cache_.end()) return it->second;
    }
    std::vector<double> e = client_->text_embedding(text);
    std::lock_guard<std::mutex> lock(mu_);
    return text_cache_.emplace(text, std::move(e)).first->second;
  }

  std::shared_ptr<RemoteScorerClient> client_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, std::vector<double>> text_cache_;
};

class PassthroughAesthetic final : public AestheticScorer {
 public:
  double score(const ImageSample& image) const override { return image.aesthetic; }
};

}  // namespace

ScorerSuite remote_world(const std::string& host, int port) {
  auto client = std::make_shared<RemoteScorerClient>(host, port);
  client->check_health();
  ScorerSuite suite;
  suite.generator = std::make_shared<RemoteGenerator>(client);
  suite.similarity = std::make_shared<RemoteSimilarity>(client);
  suite.aesthetic = std::make_shared<PassthroughAesthetic>();
  suite.cache = std::make_shared<EmbeddingCache>();
  return suite;
}

struct SyntheticScorerServer::Impl {
  ModifierLexicon lexicon;
  ScorerSuite world;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit Impl(const ModifierLexicon& lex)
      : lexicon(lex), world(synthetic_world(lex)) {
    world.cache.reset();  // the protocol layer must not mask generator calls
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(
          json{{"status", "ok"}, {"protocol_version", kScorerProtocolVersion}}.dump(),
          "application/json");
    });
    server.Post("/v1/images", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        json body = json::parse(req.body);
        const auto prompt = body.at("prompt").get<std::string>();
        const auto seed = body.at("seed").get<uint64_t>();
        const auto count = body.at("count").get<int>();
        const auto images = world.generator->generate(prompt, seed, count);
        json embs = json::array();
        json aes = json::array();
        for (const ImageSample& img : images) {
          embs.push_back(img.embedding);
          aes.push_back(img.aesthetic);
        }
        res.set_content(json{{"embeddings", embs}, {"aesthetics", aes}}.dump(),
                        "application/json");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      }
    });
    server.Post("/v1/text", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        json body = json::parse(req.body);
        const auto text = body.at("text").get<std::string>();
        res.set_content(
            json{{"embedding", synthetic_text_embedding(text, lexicon)}}.dump(),
            "application/json");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      }
    });
  }
};

SyntheticScorerServer::SyntheticScorerServer(const ModifierLexicon& lexicon)
    : impl_(std::make_unique<Impl>(lexicon)) {}

SyntheticScorerServer::~SyntheticScorerServer() { stop(); }

int SyntheticScorerServer::start() {
  impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void SyntheticScorerServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
  if (impl_ && impl_->thread.joinable()) impl_->thread.join();
}

int SyntheticScorerServer::port() const { return impl_->port; }

}  // namespace promptrl
