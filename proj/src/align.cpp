#include "packfuse/align.hpp"

#include <algorithm>
#include <limits>

#include <json.hpp>

#include "packfuse/fusion.hpp"

namespace packfuse {

std::u32string utf8_to_scalars(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t j = 1; ok && j < len; ++j) {
      const auto b = static_cast<unsigned char>(s[i + j]);
      ok = (b & 0xC0) == 0x80;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (ok) {
      ok = !(len == 2 && cp < 0x80) && !(len == 3 && cp < 0x800) && !(len == 4 && cp < 0x10000) &&
           cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
    }
    if (!ok) {
      // Stray byte: a private symbol above the Unicode range, one per byte value.
      out.push_back(static_cast<char32_t>(0x110000 + b0));
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

namespace {

// Levenshtein distance, or limit + 1 as soon as it must exceed `limit`.
std::size_t bounded_distance(const std::u32string& a, const std::u32string& b, std::size_t limit) {
  const std::size_t la = a.size();
  const std::size_t lb = b.size();
  const std::size_t gap = la > lb ? la - lb : lb - la;
  if (gap > limit) return limit + 1;
  std::vector<std::size_t> prev(lb + 1);
  std::vector<std::size_t> cur(lb + 1);
  for (std::size_t j = 0; j <= lb; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= la; ++i) {
    cur[0] = i;
    std::size_t row_min = cur[0];
    for (std::size_t j = 1; j <= lb; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
      row_min = std::min(row_min, cur[j]);
    }
    if (row_min > limit) return limit + 1;
    std::swap(prev, cur);
  }
  return std::min(prev[lb], limit + 1);
}

}  // namespace

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const auto ua = utf8_to_scalars(a);
  const auto ub = utf8_to_scalars(b);
  return bounded_distance(ua, ub, std::max(ua.size(), ub.size()));
}

VocabMap build_vocab_map(const Vocabulary& ref, const Vocabulary& other) {
  VocabMap map{ref.name(), other.name(), std::vector<TokenId>(ref.size(), 0)};
  std::vector<std::u32string> other_scalars;
  other_scalars.reserve(other.size());
  for (const auto& tok : other.tokens()) other_scalars.push_back(utf8_to_scalars(tok));

  for (std::size_t i = 0; i < ref.size(); ++i) {
    const auto& tok = ref.tokens()[i];
    if (TokenId exact = other.id_of(tok); exact >= 0) {
      map.fwd[i] = exact;
      continue;
    }
    const auto a = utf8_to_scalars(tok);
    std::size_t best = std::numeric_limits<std::size_t>::max();
    TokenId best_id = 0;
    for (std::size_t j = 0; j < other.size() && best > 1; ++j) {
      // Only a strictly smaller distance can replace the current (lower-id) best.
      const std::size_t d = bounded_distance(a, other_scalars[j], best - 1);
      if (d < best) {
        best = d;
        best_id = static_cast<TokenId>(j);
      }
    }
    map.fwd[i] = best_id;
  }
  return map;
}

TokenSequence remap_sequence(const TokenSequence& seq, const VocabMap& map) {
  if (seq.vocab_id != map.ref_vocab_id) {
    throw error(errc::vocab_mismatch, "sequence over '" + seq.vocab_id + "', map expects '" +
                                          map.ref_vocab_id + "'");
  }
  TokenSequence out{{}, map.other_vocab_id};
  out.ids.reserve(seq.size());
  for (TokenId id : seq.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= map.fwd.size()) {
      throw error(errc::invalid_argument, "token id " + std::to_string(id) + " outside map");
    }
    out.ids.push_back(map.fwd[static_cast<std::size_t>(id)]);
  }
  return out;
}

LogitVector remap_logits(std::span<const double> logits, const VocabMap& map,
                         std::size_t other_vocab_size) {
  if (logits.size() != other_vocab_size) {
    throw error(errc::dimension_mismatch, "logits of length " + std::to_string(logits.size()) +
                                              " for a vocabulary of " +
                                              std::to_string(other_vocab_size));
  }
  LogitVector out(map.fwd.size());
  for (std::size_t i = 0; i < map.fwd.size(); ++i) {
    out[i] = logits[static_cast<std::size_t>(map.fwd[i])];
  }
  return out;
}

std::string select_reference(std::span<const double> ppls, std::span<const std::string> vocab_ids) {
  if (ppls.empty() || ppls.size() != vocab_ids.size()) {
    throw error(errc::dimension_mismatch, "need one vocabulary id per perplexity");
  }
  return vocab_ids[rank_by_ppl(ppls).front()];
}

std::string vocab_map_to_json(const VocabMap& map) {
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < map.fwd.size(); ++i) pairs.push_back({i, map.fwd[i]});
  nlohmann::json j;
  j["ref"] = map.ref_vocab_id;
  j["other"] = map.other_vocab_id;
  j["pairs"] = std::move(pairs);
  return j.dump();
}

VocabMap vocab_map_from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    VocabMap map{j.at("ref").get<std::string>(), j.at("other").get<std::string>(), {}};
    const auto& pairs = j.at("pairs");
    map.fwd.assign(pairs.size(), -1);
    for (const auto& p : pairs) {
      auto ref_id = p.at(0).get<std::size_t>();
      if (ref_id >= map.fwd.size() || map.fwd[ref_id] != -1) {
        throw error(errc::invalid_argument, "vocab map pairs must cover each ref id once");
      }
      map.fwd[ref_id] = p.at(1).get<TokenId>();
    }
    return map;
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::invalid_argument, std::string("bad vocab map document: ") + e.what());
  }
}

AlignedScorer::AlignedScorer(ScorerPtr inner, VocabPtr ref, VocabMap map)
    : inner_(std::move(inner)), ref_(std::move(ref)), map_(std::move(map)) {
  if (map_.ref_vocab_id != ref_->name() || map_.other_vocab_id != inner_->vocab_id() ||
      map_.fwd.size() != ref_->size()) {
    throw error(errc::vocab_mismatch, "vocab map does not connect '" + ref_->name() + "' to '" +
                                          inner_->vocab_id() + "'");
  }
}

std::vector<LogitVector> AlignedScorer::score(std::span<const TokenId> ids) const {
  TokenSequence seq{{ids.begin(), ids.end()}, ref_->name()};
  const auto remapped = remap_sequence(seq, map_);
  auto inner = inner_->score(remapped.ids);
  std::vector<LogitVector> out;
  out.reserve(inner.size());
  for (const auto& v : inner) out.push_back(remap_logits(v, map_, inner_->vocab()->size()));
  return out;
}

}  // namespace packfuse
