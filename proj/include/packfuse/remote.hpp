#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "packfuse/scorer.hpp"

namespace packfuse {

// Wire protocol, version 1 (JSON over HTTP):
//   POST /score  {"v":1, "vocab_hash":"<16 hex>", "tokens":[ids]}
//             -> {"v":1, "logits":[[f64 x V] per position]}
//   GET  /vocab -> {"v":1, "vocab_hash":"<16 hex>", "vocab":{name, tokenizer, tokens}}
inline constexpr int kProtocolVersion = 1;

std::string format_vocab_hash(std::uint64_t hash);

std::string encode_score_request(std::uint64_t vocab_hash, std::span<const TokenId> ids);

// Validates version, shape and finiteness; throws errc::protocol.
std::vector<LogitVector> decode_score_response(std::string_view body, std::size_t positions,
                                               std::size_t dim);

struct HttpReply {
  int status = 200;
  std::string body;
};

// Server-side request handling, independent of the transport.
HttpReply handle_score_request(const TokenScorer& scorer, std::string_view body);
HttpReply handle_vocab_request(const TokenScorer& scorer);

struct RemoteOptions {
  int retries = 3;  // extra attempts after the first transport failure
  std::chrono::milliseconds backoff{50};  // doubled after every failed attempt
  std::chrono::seconds timeout{30};
};

class RemoteScorer final : public TokenScorer {
 public:
  RemoteScorer(std::string name, std::string endpoint, VocabPtr vocab, RemoteOptions options = {});

  // Fetches the vocabulary from GET /vocab first.
  static std::shared_ptr<RemoteScorer> connect(std::string name, std::string endpoint,
                                               RemoteOptions options = {});

  const std::string& name() const override { return name_; }
  const VocabPtr& vocab() const override { return vocab_; }
  std::vector<LogitVector> score(std::span<const TokenId> ids) const override;

  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string name_;
  std::string endpoint_;
  VocabPtr vocab_;
  RemoteOptions options_;
};

std::vector<LogitVector> remote_score(const std::string& endpoint, const TokenSequence& seq,
                                      const VocabPtr& vocab, RemoteOptions options = {});

// Loopback HTTP server around one scorer.
class ScoreServer {
 public:
  explicit ScoreServer(ScorerPtr scorer);
  ~ScoreServer();
  ScoreServer(const ScoreServer&) = delete;
  ScoreServer& operator=(const ScoreServer&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();
  int port() const { return port_; }
  std::string endpoint() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::string host_;
};

}  // namespace packfuse
