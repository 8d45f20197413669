#include "packfuse/remote.hpp"

#include <cmath>
#include <cstdio>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace packfuse {

std::string format_vocab_hash(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string encode_score_request(std::uint64_t vocab_hash, std::span<const TokenId> ids) {
  nlohmann::json j;
  j["v"] = kProtocolVersion;
  j["vocab_hash"] = format_vocab_hash(vocab_hash);
  j["tokens"] = std::vector<TokenId>(ids.begin(), ids.end());
  return j.dump();
}

std::vector<LogitVector> decode_score_response(std::string_view body, std::size_t positions,
                                               std::size_t dim) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::protocol, std::string("unparseable response: ") + e.what());
  }
  if (!j.is_object() || !j.contains("v") || j["v"] != kProtocolVersion) {
    throw error(errc::protocol, "missing or unsupported protocol version");
  }
  if (!j.contains("logits") || !j["logits"].is_array()) {
    throw error(errc::protocol, "response has no logits array");
  }
  const auto& rows = j["logits"];
  if (rows.size() != positions) {
    throw error(errc::protocol, "expected " + std::to_string(positions) + " positions, got " +
                                    std::to_string(rows.size()));
  }
  std::vector<LogitVector> out;
  out.reserve(positions);
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != dim) {
      throw error(errc::protocol, "logit row does not have " + std::to_string(dim) + " entries");
    }
    LogitVector v;
    v.reserve(dim);
    for (const auto& x : row) {
      if (!x.is_number()) throw error(errc::protocol, "non-numeric logit");
      const double d = x.get<double>();
      if (!std::isfinite(d)) throw error(errc::protocol, "non-finite logit");
      v.push_back(d);
    }
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

HttpReply error_reply(int status, errc code, const std::string& message) {
  nlohmann::json j;
  j["v"] = kProtocolVersion;
  j["error"] = std::string(to_string(code));
  j["message"] = message;
  return {status, j.dump()};
}

}  // namespace

HttpReply handle_score_request(const TokenScorer& scorer, std::string_view body) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    return error_reply(400, errc::protocol, std::string("unparseable request: ") + e.what());
  }
  if (!req.is_object() || req.value("v", 0) != kProtocolVersion) {
    return error_reply(400, errc::protocol, "missing or unsupported protocol version");
  }
  if (!req.contains("vocab_hash") || !req["vocab_hash"].is_string() || !req.contains("tokens") ||
      !req["tokens"].is_array()) {
    return error_reply(400, errc::protocol, "request needs vocab_hash and tokens");
  }
  const auto expected = format_vocab_hash(scorer.vocab()->hash());
  if (req["vocab_hash"].get<std::string>() != expected) {
    return error_reply(409, errc::vocab_hash_mismatch,
                       "server vocabulary hash is " + expected);
  }
  try {
    TokenSequence seq{req["tokens"].get<std::vector<TokenId>>(), scorer.vocab_id()};
    const auto logits = score_sequence(scorer, seq);
    nlohmann::json resp;
    resp["v"] = kProtocolVersion;
    resp["logits"] = logits;
    return {200, resp.dump()};
  } catch (const nlohmann::json::exception& e) {
    return error_reply(400, errc::protocol, e.what());
  } catch (const error& e) {
    return error_reply(400, e.code(), e.what());
  }
}

HttpReply handle_vocab_request(const TokenScorer& scorer) {
  nlohmann::json j;
  j["v"] = kProtocolVersion;
  j["vocab_hash"] = format_vocab_hash(scorer.vocab()->hash());
  j["vocab"] = nlohmann::json::parse(vocab_to_json(*scorer.vocab()));
  j["name"] = scorer.name();
  return {200, j.dump()};
}

namespace {

// One HTTP exchange with transport-level retries and exponential backoff.
httplib::Result send_with_retries(const std::string& endpoint, const RemoteOptions& options,
                                  const std::function<httplib::Result(httplib::Client&)>& call) {
  httplib::Client client(endpoint);
  const auto secs = static_cast<time_t>(options.timeout.count());
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  auto delay = options.backoff;
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    auto res = call(client);
    if (res && res->status < 500) return res;
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    spdlog::debug("{}: attempt {} failed: {}", endpoint, attempt + 1, last_error);
  }
  throw error(errc::timeout, endpoint + " unreachable after " + std::to_string(options.retries + 1) +
                                 " attempts: " + last_error);
}

void raise_for_status(const httplib::Response& res) {
  if (res.status == 200) return;
  std::string code;
  std::string message = res.body;
  try {
    auto j = nlohmann::json::parse(res.body);
    code = j.value("error", std::string());
    message = j.value("message", res.body);
  } catch (const nlohmann::json::exception&) {
  }
  if (code == to_string(errc::vocab_hash_mismatch)) throw error(errc::vocab_hash_mismatch, message);
  throw error(errc::protocol, "HTTP " + std::to_string(res.status) + ": " + message);
}

}  // namespace

RemoteScorer::RemoteScorer(std::string name, std::string endpoint, VocabPtr vocab,
                           RemoteOptions options)
    : name_(std::move(name)), endpoint_(std::move(endpoint)), vocab_(std::move(vocab)),
      options_(options) {}

std::shared_ptr<RemoteScorer> RemoteScorer::connect(std::string name, std::string endpoint,
                                                    RemoteOptions options) {
  auto res = send_with_retries(endpoint, options,
                               [](httplib::Client& c) { return c.Get("/vocab"); });
  raise_for_status(*res);
  VocabPtr vocab;
  try {
    auto j = nlohmann::json::parse(res->body);
    if (j.value("v", 0) != kProtocolVersion) throw error(errc::protocol, "unsupported version");
    vocab = vocab_from_json(j.at("vocab").dump());
    if (j.at("vocab_hash").get<std::string>() != format_vocab_hash(vocab->hash())) {
      throw error(errc::vocab_hash_mismatch, "served vocabulary does not match its hash");
    }
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::protocol, std::string("bad /vocab response: ") + e.what());
  }
  return std::make_shared<RemoteScorer>(std::move(name), std::move(endpoint), std::move(vocab),
                                        options);
}

std::vector<LogitVector> RemoteScorer::score(std::span<const TokenId> ids) const {
  const auto body = encode_score_request(vocab_->hash(), ids);
  auto res = send_with_retries(endpoint_, options_, [&](httplib::Client& c) {
    return c.Post("/score", body, "application/json");
  });
  raise_for_status(*res);
  return decode_score_response(res->body, ids.size(), vocab_->size());
}

std::vector<LogitVector> remote_score(const std::string& endpoint, const TokenSequence& seq,
                                      const VocabPtr& vocab, RemoteOptions options) {
  RemoteScorer scorer("remote", endpoint, vocab, options);
  return score_sequence(scorer, seq);
}

struct ScoreServer::Impl {
  ScorerPtr scorer;
  httplib::Server server;
  std::thread thread;
};

ScoreServer::ScoreServer(ScorerPtr scorer) : impl_(std::make_unique<Impl>()) {
  impl_->scorer = std::move(scorer);
  auto& server = impl_->server;
  const TokenScorer* s = impl_->scorer.get();
  server.Post("/score", [s](const httplib::Request& req, httplib::Response& res) {
    auto reply = handle_score_request(*s, req.body);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
  server.Get("/vocab", [s](const httplib::Request&, httplib::Response& res) {
    auto reply = handle_vocab_request(*s);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
}

ScoreServer::~ScoreServer() { stop(); }

int ScoreServer::start(const std::string& host, int port) {
  host_ = host;
  auto& server = impl_->server;
  port_ = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw error(errc::io, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();
  return port_;
}

void ScoreServer::run(const std::string& host, int port) {
  host_ = host;
  auto& server = impl_->server;
  port_ = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw error(errc::io, "cannot bind " + host + ":" + std::to_string(port));
  spdlog::info("serving '{}' on {}", impl_->scorer->name(), endpoint());
  server.listen_after_bind();
}

void ScoreServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string ScoreServer::endpoint() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

}  // namespace packfuse
