#include "packfuse/ngram.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace packfuse {

std::size_t NgramModel::ContextHash::operator()(const std::vector<TokenId>& ctx) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (TokenId id : ctx) {
    h ^= static_cast<std::uint32_t>(id);
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h);
}

NgramModel::NgramModel(std::string name, VocabPtr vocab, int order, double k)
    : name_(std::move(name)), vocab_(std::move(vocab)), order_(order), k_(k) {
  if (order_ < 1) throw error(errc::invalid_argument, "n-gram order must be >= 1");
  if (!(k_ > 0.0) || !std::isfinite(k_)) {
    throw error(errc::invalid_argument, "smoothing constant must be positive");
  }
}

std::vector<TokenId> NgramModel::context_at(std::span<const TokenId> ids,
                                            std::size_t position) const {
  const auto width = static_cast<std::size_t>(order_ - 1);
  std::vector<TokenId> ctx(width, kBosContext);
  for (std::size_t j = 0; j < width; ++j) {
    if (position + j >= width) ctx[j] = ids[position + j - width];
  }
  return ctx;
}

void NgramModel::add_document(std::span<const TokenId> ids) {
  const std::size_t v = vocab_->size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!vocab_->contains(ids[i])) {
      throw error(errc::invalid_argument, "corpus id " + std::to_string(ids[i]) +
                                              " outside vocabulary '" + vocab_->name() + "'");
    }
    auto& row = table_[context_at(ids, i)];
    if (row.counts.empty()) row.counts.assign(v, 0);
    ++row.counts[static_cast<std::size_t>(ids[i])];
    ++row.total;
  }
}

double NgramModel::prob(std::span<const TokenId> context, TokenId token) const {
  const double v = static_cast<double>(vocab_->size());
  std::vector<TokenId> ctx(context.begin(), context.end());
  auto it = table_.find(ctx);
  if (it == table_.end()) return 1.0 / v;
  const auto& row = it->second;
  return (static_cast<double>(row.counts.at(static_cast<std::size_t>(token))) + k_) /
         (static_cast<double>(row.total) + k_ * v);
}

LogitVector NgramModel::logits_for(std::span<const TokenId> context) const {
  const std::size_t v = vocab_->size();
  std::vector<TokenId> ctx(context.begin(), context.end());
  auto it = table_.find(ctx);
  if (it == table_.end()) return LogitVector(v, -std::log(static_cast<double>(v)));
  const auto& row = it->second;
  const double log_denom = std::log(static_cast<double>(row.total) + k_ * static_cast<double>(v));
  LogitVector out(v);
  const double log_k = std::log(k_);
  for (std::size_t x = 0; x < v; ++x) {
    out[x] = row.counts[x] == 0 ? log_k - log_denom
                                : std::log(static_cast<double>(row.counts[x]) + k_) - log_denom;
  }
  return out;
}

std::vector<LogitVector> NgramModel::score(std::span<const TokenId> ids) const {
  std::vector<LogitVector> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.push_back(logits_for(context_at(ids, i)));
  return out;
}

std::string NgramModel::to_json() const {
  std::vector<const Table::value_type*> entries;
  entries.reserve(table_.size());
  for (const auto& e : table_) entries.push_back(&e);
  std::sort(entries.begin(), entries.end(),
            [](const auto* a, const auto* b) { return a->first < b->first; });

  nlohmann::json contexts = nlohmann::json::array();
  for (const auto* e : entries) {
    nlohmann::json counts = nlohmann::json::array();
    for (std::size_t x = 0; x < e->second.counts.size(); ++x) {
      if (e->second.counts[x] != 0) counts.push_back({x, e->second.counts[x]});
    }
    contexts.push_back({{"ctx", e->first}, {"counts", std::move(counts)}});
  }
  nlohmann::json j;
  j["format"] = "packfuse-ngram";
  j["version"] = 1;
  j["name"] = name_;
  j["order"] = order_;
  j["k"] = k_;
  j["vocab"] = nlohmann::json::parse(vocab_to_json(*vocab_));
  j["contexts"] = std::move(contexts);
  return j.dump();
}

NgramModel NgramModel::from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    if (j.value("format", std::string()) != "packfuse-ngram" || j.value("version", 0) != 1) {
      throw error(errc::invalid_argument, "not a packfuse-ngram v1 document");
    }
    auto vocab = vocab_from_json(j.at("vocab").dump());
    NgramModel model(j.at("name").get<std::string>(), vocab, j.at("order").get<int>(),
                     j.at("k").get<double>());
    const auto width = static_cast<std::size_t>(model.order_ - 1);
    for (const auto& c : j.at("contexts")) {
      auto ctx = c.at("ctx").get<std::vector<TokenId>>();
      if (ctx.size() != width) throw error(errc::invalid_argument, "context width mismatch");
      Row row;
      row.counts.assign(vocab->size(), 0);
      for (const auto& pair : c.at("counts")) {
        auto id = pair.at(0).get<std::size_t>();
        auto n = pair.at(1).get<std::uint64_t>();
        if (id >= vocab->size()) throw error(errc::invalid_argument, "count id out of range");
        row.counts[id] = n;
        row.total += n;
      }
      model.table_.emplace(std::move(ctx), std::move(row));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::invalid_argument, std::string("bad n-gram document: ") + e.what());
  }
}

NgramModel train_ngram(std::string name, VocabPtr vocab, std::span<const TokenId> corpus, int order,
                       double k) {
  if (corpus.empty()) throw error(errc::empty_corpus, "cannot train on an empty corpus");
  NgramModel model(std::move(name), std::move(vocab), order, k);
  model.add_document(corpus);
  return model;
}

NgramModel train_ngram(std::string name, VocabPtr vocab,
                       const std::vector<std::vector<TokenId>>& documents, int order, double k) {
  NgramModel model(std::move(name), std::move(vocab), order, k);
  bool any = false;
  for (const auto& doc : documents) {
    any = any || !doc.empty();
    model.add_document(doc);
  }
  if (!any) throw error(errc::empty_corpus, "cannot train on an empty corpus");
  return model;
}

NgramModel load_ngram(const std::string& path) { return NgramModel::from_json(read_file(path)); }

void save_ngram(const NgramModel& model, const std::string& path) {
  write_file(path, model.to_json());
}

}  // namespace packfuse
