#include "packfuse/scorer.hpp"

#include <cmath>

namespace packfuse {

std::vector<LogitVector> score_sequence(const TokenScorer& scorer, const TokenSequence& seq) {
  if (seq.vocab_id != scorer.vocab_id()) {
    throw error(errc::vocab_mismatch, "scorer '" + scorer.name() + "' uses vocabulary '" +
                                          scorer.vocab_id() + "', sequence uses '" +
                                          seq.vocab_id + "'");
  }
  if (seq.empty()) throw error(errc::empty_sequence, "nothing to score");
  validate_sequence(seq, *scorer.vocab());
  auto out = scorer.score(seq.ids);
  if (out.size() != seq.size()) {
    throw error(errc::length_mismatch, "scorer '" + scorer.name() + "' returned " +
                                           std::to_string(out.size()) + " vectors for " +
                                           std::to_string(seq.size()) + " tokens");
  }
  return out;
}

TableModel::TableModel(std::string name, VocabPtr vocab, std::vector<LogitVector> rows,
                       std::size_t context_width)
    : name_(std::move(name)), vocab_(std::move(vocab)), rows_(std::move(rows)),
      context_width_(context_width) {
  if (rows_.empty()) throw error(errc::invalid_argument, "table model needs at least one row");
  for (const auto& row : rows_) {
    if (row.size() != vocab_->size()) {
      throw error(errc::dimension_mismatch, "table row length " + std::to_string(row.size()) +
                                                " != vocabulary size " +
                                                std::to_string(vocab_->size()));
    }
    for (double v : row) {
      if (!std::isfinite(v)) throw error(errc::non_finite_input, "table logits must be finite");
    }
  }
}

std::size_t TableModel::row_for(std::span<const TokenId> ids, std::size_t position) const {
  if (context_width_ == 0 || rows_.size() == 1) return 0;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t j = 0; j < context_width_; ++j) {
    // Context slot j holds ids[position - context_width + j], or -1 before the start.
    std::int64_t src = static_cast<std::int64_t>(position) -
                       static_cast<std::int64_t>(context_width_) + static_cast<std::int64_t>(j);
    auto tok = static_cast<std::uint32_t>(src < 0 ? -1 : ids[static_cast<std::size_t>(src)]);
    for (int b = 0; b < 4; ++b) {
      h ^= (tok >> (8 * b)) & 0xFFu;
      h *= 0x100000001b3ULL;
    }
  }
  return static_cast<std::size_t>(h % rows_.size());
}

std::vector<LogitVector> TableModel::score(std::span<const TokenId> ids) const {
  std::vector<LogitVector> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.push_back(rows_[row_for(ids, i)]);
  return out;
}

void ScorerRegistry::add_vocab(VocabPtr vocab) {
  auto [it, inserted] = vocabs_.emplace(vocab->name(), vocab);
  if (!inserted && it->second->hash() != vocab->hash()) {
    throw error(errc::vocab_mismatch, "two different vocabularies named '" + vocab->name() + "'");
  }
}

void ScorerRegistry::add(ScorerPtr scorer) {
  auto it = vocabs_.find(scorer->vocab_id());
  if (it == vocabs_.end()) {
    throw error(errc::vocab_mismatch, "scorer '" + scorer->name() + "' uses unregistered vocabulary '" +
                                          scorer->vocab_id() + "'");
  }
  if (it->second->hash() != scorer->vocab()->hash()) {
    throw error(errc::vocab_mismatch, "scorer '" + scorer->name() + "' disagrees with registered '" +
                                          scorer->vocab_id() + "'");
  }
  if (!scorers_.emplace(scorer->name(), scorer).second) {
    throw error(errc::invalid_argument, "duplicate scorer name '" + scorer->name() + "'");
  }
}

VocabPtr ScorerRegistry::vocab(const std::string& name) const {
  auto it = vocabs_.find(name);
  if (it == vocabs_.end()) throw error(errc::invalid_argument, "unknown vocabulary '" + name + "'");
  return it->second;
}

ScorerPtr ScorerRegistry::get(const std::string& name) const {
  auto it = scorers_.find(name);
  if (it == scorers_.end()) throw error(errc::invalid_argument, "unknown scorer '" + name + "'");
  return it->second;
}

std::vector<std::string> ScorerRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : scorers_) out.push_back(name);
  return out;
}

}  // namespace packfuse
