#include "packfuse/vocab.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace packfuse {

std::string_view to_string(errc code) {
  switch (code) {
    case errc::vocab_mismatch: return "VocabMismatch";
    case errc::empty_sequence: return "EmptySequence";
    case errc::empty_corpus: return "EmptyCorpus";
    case errc::non_finite_input: return "NonFiniteInput";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::prompt_too_short: return "PromptTooShort";
    case errc::invalid_tau: return "InvalidTau";
    case errc::invalid_grid: return "InvalidGrid";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::too_many_models: return "TooManyModels";
    case errc::empty_cluster_set: return "EmptyClusterSet";
    case errc::doc_too_short: return "DocTooShort";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::config: return "ConfigError";
    case errc::io: return "IoError";
    case errc::timeout: return "Timeout";
    case errc::protocol: return "ProtocolError";
    case errc::vocab_hash_mismatch: return "VocabHashMismatch";
  }
  return "Unknown";
}

std::uint64_t fnv1a64(std::span<const std::string> tokens) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& tok : tokens) {
    for (unsigned char c : tok) mix(c);
    mix(0x1F);
  }
  return h;
}

Vocabulary::Vocabulary(std::string name, std::vector<std::string> tokens, TokenizerKind kind)
    : name_(std::move(name)), tokens_(std::move(tokens)), kind_(kind) {
  if (tokens_.size() < 2) {
    throw error(errc::invalid_argument, "vocabulary '" + name_ + "' needs at least 2 tokens");
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw error(errc::invalid_argument,
                  "vocabulary '" + name_ + "' repeats token '" + tokens_[i] + "'");
    }
  }
  hash_ = fnv1a64(tokens_);
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

void validate_sequence(const TokenSequence& seq, const Vocabulary& vocab) {
  if (seq.vocab_id != vocab.name()) {
    throw error(errc::vocab_mismatch,
                "sequence over '" + seq.vocab_id + "' used with vocabulary '" + vocab.name() + "'");
  }
  for (TokenId id : seq.ids) {
    if (!vocab.contains(id)) {
      throw error(errc::invalid_argument,
                  "token id " + std::to_string(id) + " outside vocabulary '" + vocab.name() + "'");
    }
  }
}

namespace {

std::string byte_token(int b) {
  if (b >= 0x20 && b < 0x7F) return std::string(1, static_cast<char>(b));
  char buf[8];
  std::snprintf(buf, sizeof buf, "<0x%02X>", b);
  return buf;
}

}  // namespace

VocabPtr byte_vocabulary() {
  static const VocabPtr vocab = [] {
    std::vector<std::string> tokens;
    tokens.reserve(257);
    for (int b = 0; b < 256; ++b) tokens.push_back(byte_token(b));
    tokens.emplace_back("<s>");
    return std::make_shared<const Vocabulary>("byte257", std::move(tokens), TokenizerKind::byte);
  }();
  return vocab;
}

ByteTokenizer::ByteTokenizer() : vocab_(byte_vocabulary()) {}

TokenSequence ByteTokenizer::encode(std::string_view text) const {
  TokenSequence seq{{}, vocab_->name()};
  seq.ids.reserve(text.size());
  for (unsigned char c : text) seq.ids.push_back(c);
  return seq;
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
  }
  return out;
}

GreedyTokenizer::GreedyTokenizer(VocabPtr vocab) : vocab_(std::move(vocab)) {
  for (const auto& tok : vocab_->tokens()) max_len_ = std::max(max_len_, tok.size());
  unk_ = vocab_->id_of("<unk>");
}

TokenSequence GreedyTokenizer::encode(std::string_view text) const {
  TokenSequence seq{{}, vocab_->name()};
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = std::min(max_len_, text.size() - pos);
    TokenId found = -1;
    for (; len > 0; --len) {
      found = vocab_->id_of(text.substr(pos, len));
      if (found >= 0) break;
    }
    if (found < 0) {
      if (unk_ < 0) {
        throw error(errc::invalid_argument, "vocabulary '" + vocab_->name() +
                                                "' cannot encode byte at offset " +
                                                std::to_string(pos));
      }
      found = unk_;
      len = 1;
    }
    seq.ids.push_back(found);
    pos += len;
  }
  return seq;
}

std::string GreedyTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id != unk_) out += vocab_->token(id);
  }
  return out;
}

std::unique_ptr<Tokenizer> make_tokenizer(const VocabPtr& vocab) {
  if (vocab->tokenizer_kind() == TokenizerKind::byte) {
    if (vocab->hash() != byte_vocabulary()->hash()) {
      throw error(errc::invalid_argument, "byte tokenizer requires the byte257 vocabulary");
    }
    return std::make_unique<ByteTokenizer>();
  }
  return std::make_unique<GreedyTokenizer>(vocab);
}

std::string vocab_to_json(const Vocabulary& vocab) {
  nlohmann::json j;
  j["name"] = vocab.name();
  j["tokenizer"] = vocab.tokenizer_kind() == TokenizerKind::byte ? "byte" : "greedy";
  j["tokens"] = vocab.tokens();
  return j.dump();
}

VocabPtr vocab_from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    auto kind = j.value("tokenizer", std::string("greedy"));
    if (kind != "byte" && kind != "greedy") {
      throw error(errc::invalid_argument, "unknown tokenizer '" + kind + "'");
    }
    return std::make_shared<const Vocabulary>(
        j.at("name").get<std::string>(), j.at("tokens").get<std::vector<std::string>>(),
        kind == "byte" ? TokenizerKind::byte : TokenizerKind::greedy);
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::invalid_argument, std::string("bad vocabulary document: ") + e.what());
  }
}

VocabPtr load_vocab(const std::string& path) { return vocab_from_json(read_file(path)); }

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  write_file(path, vocab_to_json(vocab));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(errc::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error(errc::io, "cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw error(errc::io, "short write to " + path);
}

}  // namespace packfuse
