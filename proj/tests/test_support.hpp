#pragma once

// Test-only fixtures: table-driven token backends, random vocabularies and
// the brute-force marginalization oracle. Nothing here calls into the trie
// or the beam search.

#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "charpred/charpred.hpp"

namespace charpred::testing {

/// p(token | last context token), normalized over the non-special tokens.
class BigramTableBackend final : public LanguageModel {
 public:
  BigramTableBackend(TokenVocab vocab, std::map<TokenId, std::vector<double>> rows)
      : vocab_(std::move(vocab)), rows_(std::move(rows)) {}

  /// Random positive weights for every possible previous token.
  static BigramTableBackend random(TokenVocab vocab, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::map<TokenId, std::vector<double>> rows;
    for (const auto& t : vocab.tokens()) {
      std::vector<double> row(vocab.id_bound(), 0.0);
      double z = 0.0;
      for (auto id : vocab.matchable_ids()) z += (row[id] = u(rng));
      for (auto& x : row) x /= z;
      rows[t.id] = std::move(row);
    }
    return BigramTableBackend(std::move(vocab), std::move(rows));
  }

  double prob(TokenId prev, TokenId next) const { return rows_.at(prev)[next]; }

  const TokenVocab& vocab() const override { return vocab_; }
  std::string name() const override { return "bigram-table"; }

  void next_token_logprobs(LogProbBatch& batch) override {
    ++calls_;
    for (auto& item : batch.items) {
      const auto& row = rows_.at(item.ctx.back());
      item.results.clear();
      if (!item.cands) {
        for (double p : row) item.results.push_back(p > 0 ? std::log(p) : kNegInf);
      } else {
        for (auto id : *item.cands) item.results.push_back(row[id] > 0 ? std::log(row[id]) : kNegInf);
      }
    }
    batch.filled = true;
  }

  std::size_t calls() const { return calls_; }

 private:
  TokenVocab vocab_;
  std::map<TokenId, std::vector<double>> rows_;
  std::atomic<std::size_t> calls_{0};
};

/// Same next-token distribution whatever the context.
class FixedDistBackend final : public LanguageModel {
 public:
  FixedDistBackend(TokenVocab vocab, std::vector<double> probs_by_id)
      : vocab_(std::move(vocab)), p_(std::move(probs_by_id)) {}
  const TokenVocab& vocab() const override { return vocab_; }
  std::string name() const override { return "fixed"; }
  void next_token_logprobs(LogProbBatch& batch) override {
    ++calls_;
    for (auto& item : batch.items) {
      item.results.clear();
      if (!item.cands) {
        for (double p : p_) item.results.push_back(p > 0 ? std::log(p) : kNegInf);
      } else {
        for (auto id : *item.cands) item.results.push_back(p_[id] > 0 ? std::log(p_[id]) : kNegInf);
      }
    }
    batch.filled = true;
  }
  std::size_t calls() const { return calls_; }

 private:
  TokenVocab vocab_;
  std::vector<double> p_;
  std::atomic<std::size_t> calls_{0};
};

/// The seven-token vocabulary used throughout the examples:
/// 0:<s> 1:"a" 2:"b" 3:" a" 4:" b" 5:"ab" 6:" ab".
inline TokenVocab v1() {
  return TokenVocab({{0, "<s>", true}, {1, "a", false}, {2, "b", false}, {3, " a", false},
                     {4, " b", false}, {5, "ab", false}, {6, " ab", false}},
                    0);
}

/// Character-token vocabulary: BOS then one token per character of chars.
inline TokenVocab char_vocab(const std::string& chars) {
  std::vector<Token> toks{{0, "<s>", true}};
  TokenId id = 1;
  for (char c : chars) toks.push_back({id++, std::string(1, c), false});
  return TokenVocab(std::move(toks), 0);
}

/// Random vocabulary of at most max_tokens tokens with surfaces of length
/// at most 3 over "abc", optional leading space, occasional uppercase or
/// unfoldable characters. Always contains every single character of
/// "abc " so any string over that alphabet is coverable.
inline TokenVocab random_vocab(std::mt19937_64& rng, std::size_t max_tokens = 40) {
  std::set<std::string> surfaces{"a", "b", "c", " "};
  const std::string letters = "abcabcabcAB,";
  std::uniform_int_distribution<std::size_t> pick(0, letters.size() - 1);
  std::uniform_int_distribution<int> len(1, 3);
  std::bernoulli_distribution lead_space(0.4);
  std::uniform_int_distribution<std::size_t> target(8, max_tokens - 2);
  const std::size_t want = target(rng);
  while (surfaces.size() < want) {
    std::string s;
    const int n = len(rng);
    if (lead_space(rng)) s.push_back(' ');
    while (static_cast<int>(s.size()) < n) s.push_back(letters[pick(rng)]);
    surfaces.insert(s);
  }
  std::vector<Token> toks{{0, "<s>", true}, {1, "<pad>", true}};
  TokenId id = 2;
  for (const auto& s : surfaces) toks.push_back({id++, s, false});
  std::shuffle(toks.begin() + 2, toks.end(), rng);
  return TokenVocab(std::move(toks), 0);
}

inline std::string random_context(std::mt19937_64& rng, std::size_t max_len = 5) {
  static const std::string alpha = "abc ";
  std::uniform_int_distribution<std::size_t> len(0, max_len), pick(0, alpha.size() - 1);
  std::string s;
  const auto n = len(rng);
  for (std::size_t i = 0; i < n; ++i) s.push_back(alpha[pick(rng)]);
  return s;
}

/// Exact next-character marginal by depth-first enumeration of every token
/// sequence that regenerates `suffix` (case-folded) and runs past its end.
/// `step(ctx)` returns the full next-token distribution (linear, by id).
inline SymbolProbs brute_force_marginal(
    const TokenVocab& vocab, const std::vector<TokenId>& stable, const std::string& suffix,
    const std::function<std::vector<double>(const std::vector<TokenId>&)>& step,
    double* mass = nullptr) {
  std::string target;
  for (char c : suffix) target.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  auto lower = [](const std::string& s) {
    std::string o = s;
    for (auto& c : o)
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return o;
  };
  SymbolProbs acc{};
  std::function<void(std::vector<TokenId>&, const std::string&, double)> rec =
      [&](std::vector<TokenId>& ctx, const std::string& sofar, double p) {
        const auto dist = step(ctx);
        for (const auto& t : vocab.tokens()) {
          if (t.special) continue;
          const std::string joined = sofar + lower(t.text);
          const double q = p * dist[t.id];
          if (joined.size() <= target.size()) {
            if (target.compare(0, joined.size(), joined) != 0) continue;
            ctx.push_back(t.id);
            rec(ctx, joined, q);
            ctx.pop_back();
          } else {
            if (joined.compare(0, target.size(), target) != 0) continue;
            const char c = joined[target.size()];
            std::size_t idx;
            if (c >= 'a' && c <= 'z') idx = static_cast<std::size_t>(c - 'a');
            else if (c == ' ') idx = 26;
            else if (c == '\'') idx = 27;
            else continue;
            acc[idx] += q;
          }
        }
      };
  std::vector<TokenId> ctx = stable;
  rec(ctx, "", 1.0);
  double z = 0.0;
  for (double x : acc) z += x;
  if (mass) *mass = z;
  if (z > 0)
    for (auto& x : acc) x /= z;
  return acc;
}

/// Oracle for a bigram table backend and a raw context, splitting the
/// context the same documented way (last space) and greedy-tokenizing the
/// stable part by brute force longest match.
inline SymbolProbs oracle_for_context(const BigramTableBackend& be, const std::string& context) {
  const auto& v = be.vocab();
  const auto cut = context.rfind(' ');
  const std::string stable_text = cut == std::string::npos ? "" : context.substr(0, cut);
  const std::string suffix = cut == std::string::npos ? context : context.substr(cut);
  std::vector<TokenId> stable{v.bos_id()};
  std::size_t pos = 0;
  while (pos < stable_text.size()) {
    TokenId best = -1;
    std::size_t best_len = 0;
    for (const auto& t : v.tokens()) {
      if (t.special || t.text.size() <= best_len) continue;
      if (stable_text.compare(pos, t.text.size(), t.text) == 0) {
        best = t.id;
        best_len = t.text.size();
      }
    }
    if (best < 0) throw std::runtime_error("oracle: uncoverable context");
    stable.push_back(best);
    pos += best_len;
  }
  return brute_force_marginal(v, stable, suffix, [&](const std::vector<TokenId>& ctx) {
    std::vector<double> row(v.id_bound());
    for (auto id : v.matchable_ids()) row[id] = be.prob(ctx.back(), id);
    return row;
  });
}

}  // namespace charpred::testing
