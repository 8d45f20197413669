#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "packfuse/error.hpp"

namespace packfuse {

using TokenId = std::int32_t;

enum class TokenizerKind { byte, greedy };

// An ordered, duplicate-free token list. Ids are the positions 0..V-1.
class Vocabulary {
 public:
  Vocabulary(std::string name, std::vector<std::string> tokens,
             TokenizerKind kind = TokenizerKind::greedy);

  const std::string& name() const { return name_; }
  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  TokenizerKind tokenizer_kind() const { return kind_; }

  // -1 when the string is not a token.
  TokenId id_of(std::string_view token) const;
  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }

  // FNV-1a 64 over the token strings, each followed by 0x1F.
  std::uint64_t hash() const { return hash_; }

 private:
  std::string name_;
  std::vector<std::string> tokens_;
  TokenizerKind kind_;
  std::unordered_map<std::string, TokenId> index_;
  std::uint64_t hash_;
};

using VocabPtr = std::shared_ptr<const Vocabulary>;

std::uint64_t fnv1a64(std::span<const std::string> tokens);

struct TokenSequence {
  std::vector<TokenId> ids;
  std::string vocab_id;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

// Throws vocab_mismatch / invalid_argument when seq does not index vocab.
void validate_sequence(const TokenSequence& seq, const Vocabulary& vocab);

// Byte-level vocabulary: ids 0..255 are bytes, 256 is the begin-of-sequence marker.
inline constexpr TokenId kByteBos = 256;
VocabPtr byte_vocabulary();

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TokenSequence encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
};

class ByteTokenizer final : public Tokenizer {
 public:
  ByteTokenizer();
  TokenSequence encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;

 private:
  VocabPtr vocab_;
};

// Longest-prefix match over the vocabulary strings. Unmatched input falls back
// to "<unk>" when the vocabulary has one, otherwise encode() throws.
class GreedyTokenizer final : public Tokenizer {
 public:
  explicit GreedyTokenizer(VocabPtr vocab);
  TokenSequence encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;

 private:
  VocabPtr vocab_;
  std::size_t max_len_ = 0;
  TokenId unk_ = -1;
};

std::unique_ptr<Tokenizer> make_tokenizer(const VocabPtr& vocab);

// JSON document {name, tokenizer: "byte"|"greedy", tokens: [...]}.
std::string vocab_to_json(const Vocabulary& vocab);
VocabPtr vocab_from_json(std::string_view text);
VocabPtr load_vocab(const std::string& path);
void save_vocab(const Vocabulary& vocab, const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace packfuse
