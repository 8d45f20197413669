#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "packfuse/scorer.hpp"

namespace packfuse {

// Levenshtein distance over Unicode scalar values (invalid UTF-8 bytes count
// as one symbol each).
std::size_t edit_distance(std::string_view a, std::string_view b);

std::u32string utf8_to_scalars(std::string_view s);

// Minimum-edit-distance map from every reference token to an `other` token.
// The same forward map is used for inputs (gather ids) and for reading
// logits back (entry i of the reference vector reads logits[fwd[i]]).
struct VocabMap {
  std::string ref_vocab_id;
  std::string other_vocab_id;
  std::vector<TokenId> fwd;

  std::size_t size() const { return fwd.size(); }
};

// Ties go to the lowest other-token id.
VocabMap build_vocab_map(const Vocabulary& ref, const Vocabulary& other);

TokenSequence remap_sequence(const TokenSequence& seq, const VocabMap& map);

LogitVector remap_logits(std::span<const double> logits, const VocabMap& map,
                         std::size_t other_vocab_size);

// Vocabulary of the lowest-perplexity model (ties: lowest index).
std::string select_reference(std::span<const double> ppls, std::span<const std::string> vocab_ids);

// {ref, other, pairs: [[ref_id, other_id], ...]}
std::string vocab_map_to_json(const VocabMap& map);
VocabMap vocab_map_from_json(std::string_view text);

// Presents a scorer over another vocabulary as a scorer over `ref`.
class AlignedScorer final : public TokenScorer {
 public:
  AlignedScorer(ScorerPtr inner, VocabPtr ref, VocabMap map);

  const std::string& name() const override { return inner_->name(); }
  const VocabPtr& vocab() const override { return ref_; }
  std::vector<LogitVector> score(std::span<const TokenId> ids) const override;

  const VocabMap& map() const { return map_; }

 private:
  ScorerPtr inner_;
  VocabPtr ref_;
  VocabMap map_;
};

}  // namespace packfuse
