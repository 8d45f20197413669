#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "packfuse/vocab.hpp"

namespace packfuse {

using LogitVector = std::vector<double>;
using LogProbVector = std::vector<double>;

// Provider of next-token scores. score() returns one vector per input id:
// vector i scores ids[i] given the begin-of-sequence context followed by
// ids[0..i-1], so it never reads ids[i] or anything after it.
//
// Implementations are immutable after construction and safe to call concurrently.
class TokenScorer {
 public:
  virtual ~TokenScorer() = default;

  virtual const std::string& name() const = 0;
  virtual const VocabPtr& vocab() const = 0;
  virtual std::vector<LogitVector> score(std::span<const TokenId> ids) const = 0;

  const std::string& vocab_id() const { return vocab()->name(); }
};

using ScorerPtr = std::shared_ptr<const TokenScorer>;

// Checked entry point: vocab_mismatch, empty_sequence.
std::vector<LogitVector> score_sequence(const TokenScorer& scorer, const TokenSequence& seq);

// Fixed logit rows. With context_width w = 0 every position uses row 0;
// otherwise the row is fnv1a(last w ids, begin-of-sequence padded) mod rows.
class TableModel final : public TokenScorer {
 public:
  TableModel(std::string name, VocabPtr vocab, std::vector<LogitVector> rows,
             std::size_t context_width = 0);

  const std::string& name() const override { return name_; }
  const VocabPtr& vocab() const override { return vocab_; }
  std::vector<LogitVector> score(std::span<const TokenId> ids) const override;

  std::size_t row_for(std::span<const TokenId> ids, std::size_t position) const;
  const std::vector<LogitVector>& rows() const { return rows_; }
  std::size_t context_width() const { return context_width_; }

 private:
  std::string name_;
  VocabPtr vocab_;
  std::vector<LogitVector> rows_;
  std::size_t context_width_;
};

// Binds scorer instances to registered vocabularies by name.
class ScorerRegistry {
 public:
  void add_vocab(VocabPtr vocab);
  void add(ScorerPtr scorer);

  VocabPtr vocab(const std::string& name) const;
  ScorerPtr get(const std::string& name) const;
  bool has(const std::string& name) const { return scorers_.count(name) != 0; }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, VocabPtr> vocabs_;
  std::map<std::string, ScorerPtr> scorers_;
};

}  // namespace packfuse
