#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "packfuse/scorer.hpp"

namespace packfuse {

// Add-k smoothed n-gram model:
//   log p(x | ctx) = log((count(ctx, x) + k) / (count(ctx) + k V))
// The context is the previous n-1 ids, padded on the left with a
// begin-of-sequence marker that is not a vocabulary id.
class NgramModel final : public TokenScorer {
 public:
  static constexpr TokenId kBosContext = -1;

  struct ContextHash {
    std::size_t operator()(const std::vector<TokenId>& ctx) const noexcept;
  };
  struct Row {
    std::vector<std::uint64_t> counts;  // dense, length V
    std::uint64_t total = 0;
  };
  using Table = std::unordered_map<std::vector<TokenId>, Row, ContextHash>;

  NgramModel(std::string name, VocabPtr vocab, int order, double k);

  const std::string& name() const override { return name_; }
  const VocabPtr& vocab() const override { return vocab_; }
  std::vector<LogitVector> score(std::span<const TokenId> ids) const override;

  int order() const { return order_; }
  double smoothing() const { return k_; }
  const Table& table() const { return table_; }

  // Counts every length-n window of the begin-padded document.
  void add_document(std::span<const TokenId> ids);

  double prob(std::span<const TokenId> context, TokenId token) const;
  LogitVector logits_for(std::span<const TokenId> context) const;

  std::string to_json() const;
  static NgramModel from_json(std::string_view text);

 private:
  std::vector<TokenId> context_at(std::span<const TokenId> ids, std::size_t position) const;

  std::string name_;
  VocabPtr vocab_;
  int order_;
  double k_;
  Table table_;
};

// Single stream or one stream per document; errors: empty_corpus, invalid_argument.
NgramModel train_ngram(std::string name, VocabPtr vocab, std::span<const TokenId> corpus,
                       int order, double k = 1.0);
NgramModel train_ngram(std::string name, VocabPtr vocab,
                       const std::vector<std::vector<TokenId>>& documents, int order,
                       double k = 1.0);

NgramModel load_ngram(const std::string& path);
void save_ngram(const NgramModel& model, const std::string& path);

}  // namespace packfuse
