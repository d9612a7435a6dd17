#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "charpred/error.hpp"
#include "charpred/token_vocab.hpp"
#include "charpred/witten_bell.hpp"
#include "json.hpp"

namespace charpred {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// One context to score. An empty cands means "ALL": results are then dense
/// over token ids (length vocab.id_bound(), -inf for ids with no mass).
struct LogProbItem {
  std::vector<TokenId> ctx;
  std::optional<std::vector<TokenId>> cands;
  std::vector<double> results;
};

struct LogProbBatch {
  std::vector<LogProbItem> items;
  bool filled = false;
};

struct BackendCapabilities {
  bool authoritative_tokenize = false;
};

/// Token-level language model. Returned values are natural-log probabilities
/// under a distribution normalized over the full vocabulary.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const TokenVocab& vocab() const = 0;
  virtual BackendCapabilities capabilities() const { return {}; }
  virtual std::string name() const = 0;

  /// Fills every item's results in place. Throws BackendError on failure;
  /// on error the batch is left unfilled.
  virtual void next_token_logprobs(LogProbBatch& batch) = 0;

  /// Authoritative segmentation. Backends without one throw
  /// UnsupportedOpError and callers fall back to greedy_tokenize.
  virtual std::vector<TokenId> tokenize(std::string_view /*text*/) {
    throw UnsupportedOpError(name() + ": tokenize is not supported");
  }
};

inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

namespace detail {

inline void validate_item(const TokenVocab& v, const LogProbItem& item) {
  if (item.ctx.empty()) throw BackendError("logprobs: empty context");
  for (auto id : item.ctx)
    if (!v.contains(id))
      throw BackendError("logprobs: unknown context token id " + std::to_string(id));
  if (item.cands)
    for (auto id : *item.cands)
      if (!v.contains(id))
        throw BackendError("logprobs: unknown candidate token id " + std::to_string(id));
}

}  // namespace detail

/// Built-in token n-gram with recursive Witten-Bell smoothing over the
/// non-special tokens. Special tokens (BOS included) get zero probability.
class TokenNGramBackend final : public LanguageModel {
 public:
  TokenNGramBackend(TokenVocab vocab, int order)
      : vocab_(std::move(vocab)),
        counts_(order, vocab_.matchable_count()),
        dense_(vocab_.id_bound(), -1) {
    const auto& ids = vocab_.matchable_ids();
    for (std::size_t i = 0; i < ids.size(); ++i) dense_[ids[i]] = static_cast<std::int32_t>(i);
  }

  const TokenVocab& vocab() const override { return vocab_; }
  std::string name() const override {
    return "token-ngram(order=" + std::to_string(order()) + ")";
  }
  int order() const { return counts_.order(); }

  /// Counts one tokenized sentence; history is padded with BOS.
  void add_sentence(std::span<const TokenId> ids) {
    std::vector<TokenId> hist(static_cast<std::size_t>(order() - 1), vocab_.bos_id());
    for (auto id : ids) {
      auto d = dense_index(id);
      if (!d) throw TrainingError("special token " + std::to_string(id) + " in training data");
      counts_.add(hist, *d);
      if (!hist.empty()) {
        hist.erase(hist.begin());
        hist.push_back(id);
      }
    }
  }

  /// Full-vocabulary log distribution for ctx, dense over ids.
  std::vector<double> log_distribution(std::span<const TokenId> ctx) const {
    auto hist = history(ctx);
    auto p = counts_.distribution(hist);
    std::vector<double> out(vocab_.id_bound(), kNegInf);
    const auto& ids = vocab_.matchable_ids();
    for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = std::log(p[i]);
    return out;
  }

  void next_token_logprobs(LogProbBatch& batch) override {
    batch.filled = false;
    for (const auto& item : batch.items) detail::validate_item(vocab_, item);
    for (auto& item : batch.items) {
      if (!item.cands) {
        item.results = log_distribution(item.ctx);
        continue;
      }
      auto hist = history(item.ctx);
      item.results.clear();
      item.results.reserve(item.cands->size());
      // Same arithmetic as the dense path so subsets agree bit for bit.
      if (item.cands->size() * 4 > vocab_.matchable_count()) {
        auto full = log_distribution(item.ctx);
        for (auto id : *item.cands) item.results.push_back(full[id]);
      } else {
        for (auto id : *item.cands) {
          auto d = dense_index(id);
          item.results.push_back(d ? std::log(counts_.prob(hist, *d)) : kNegInf);
        }
      }
    }
    batch.filled = true;
  }

  const WittenBellCounts<TokenId>& counts() const { return counts_; }

  nlohmann::json to_json() const {
    const auto& ids = vocab_.matchable_ids();
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [h, s] : counts_.table()) {
      std::string key;
      for (std::size_t i = 0; i < h.size(); ++i) key += (i ? " " : "") + std::to_string(h[i]);
      nlohmann::json row = nlohmann::json::object();
      for (const auto& [w, c] : s.counts) row[std::to_string(ids[w])] = c;
      counts[key] = std::move(row);
    }
    return {{"version", 1},
            {"kind", "token-ngram"},
            {"order", order()},
            {"vocab", vocab_.to_json()},
            {"counts", std::move(counts)}};
  }

  static std::unique_ptr<TokenNGramBackend> from_json(const nlohmann::json& j) {
    try {
      if (j.value("version", 0) != 1 || j.value("kind", "") != "token-ngram")
        throw LoadError("token model: wrong version or kind");
      auto m = std::make_unique<TokenNGramBackend>(TokenVocab::from_json(j.at("vocab")),
                                                   j.at("order").get<int>());
      for (const auto& [key, row] : j.at("counts").items()) {
        std::vector<TokenId> h;
        std::istringstream ss(key);
        TokenId id;
        while (ss >> id) h.push_back(id);
        if (static_cast<int>(h.size()) >= m->order())
          throw LoadError("token model: context longer than order-1: " + key);
        for (const auto& [w, c] : row.items()) {
          auto d = m->dense_index(static_cast<TokenId>(std::stol(w)));
          if (!d) throw LoadError("token model: count for non-matchable token " + w);
          m->counts_.set_count(h, *d, c.get<std::uint64_t>());
        }
      }
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(std::string("token model: ") + e.what());
    } catch (const std::invalid_argument&) {
      throw LoadError("token model: bad token id key");
    }
  }

  std::optional<std::int32_t> dense_index(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= dense_.size() || dense_[id] < 0)
      return std::nullopt;
    return dense_[id];
  }

 private:
  std::vector<TokenId> history(std::span<const TokenId> ctx) const {
    const auto n = static_cast<std::size_t>(order() - 1);
    std::vector<TokenId> hist(n, vocab_.bos_id());
    const std::size_t take = std::min(n, ctx.size());
    std::copy(ctx.end() - take, ctx.end(), hist.end() - take);
    return hist;
  }

  TokenVocab vocab_;
  WittenBellCounts<TokenId> counts_;
  std::vector<std::int32_t> dense_;
};

/// Trains the built-in backend; each sentence is segmented with the greedy
/// tokenizer.
template <typename Range>
std::unique_ptr<TokenNGramBackend> train_token_ngram(const Range& sentences,
                                                     TokenVocab vocab, int order) {
  if (order < 1) throw TrainingError("order must be >= 1");
  auto model = std::make_unique<TokenNGramBackend>(std::move(vocab), order);
  std::size_t n = 0;
  for (const auto& s : sentences) {
    std::string_view sv(s);
    if (sv.empty()) continue;
    model->add_sentence(model->vocab().greedy_tokenize(sv));
    ++n;
  }
  if (n == 0) throw TrainingError("empty training corpus");
  return model;
}

inline std::unique_ptr<TokenNGramBackend> load_token_ngram(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open token model " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("token model " + path + ": " + e.what());
  }
  return TokenNGramBackend::from_json(j);
}

}  // namespace charpred
