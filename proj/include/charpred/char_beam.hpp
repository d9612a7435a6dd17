#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "charpred/error.hpp"
#include "charpred/lm_backend.hpp"
#include "charpred/symbol_set.hpp"
#include "charpred/text.hpp"
#include "charpred/token_vocab.hpp"

namespace charpred {

inline constexpr std::size_t kDefaultBeamWidth = 8;
inline constexpr std::size_t kDefaultMaxCompleted = 32768;

struct SearchParams {
  std::size_t beam_width = kDefaultBeamWidth;
  std::size_t max_completed = kDefaultMaxCompleted;
  /// Replaces BOS as the conditioning head when non-empty.
  std::vector<TokenId> context_prefix;
  CasingMode casing = CasingMode::kAsGiven;

  void validate() const {
    if (beam_width < 1) throw ArgumentError("beam width must be >= 1");
    if (max_completed < 1) throw ArgumentError("max completed must be >= 1");
  }
};

/// Context split into tokens the search keeps fixed and the trailing partial
/// word (with its leading space) that the search regenerates.
struct PreparedContext {
  std::vector<TokenId> stable_tokens;  // head (BOS or prefix) first
  std::size_t head_length = 1;
  std::string volatile_suffix;
};

struct Hypothesis {
  std::vector<TokenId> ext;
  std::size_t matched = 0;
  double logprob = 0.0;
};

struct CharDistribution {
  SymbolProbs probs{};
  double mass_found = 0.0;
  double log_mass = kNegInf;
  std::size_t completed_count = 0;
  std::size_t backend_queries = 0;
  std::size_t rounds = 0;
  double elapsed_ms = 0.0;

  /// Probability of c after folding; 0 for characters outside the set.
  double prob(char c) const {
    auto i = folded_index(c);
    return i ? probs[*i] : 0.0;
  }

  /// Symbols by descending probability, ties in symbol-set order.
  std::vector<std::pair<char, double>> ranked() const {
    std::vector<std::pair<char, double>> out;
    for (std::size_t i = 0; i < kNumSymbols; ++i) out.emplace_back(symbol_at(i), probs[i]);
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
  }
};

namespace detail {

inline std::vector<TokenId> tokenize_stable(LanguageModel& backend, std::string_view text) {
  if (text.empty()) return {};
  if (backend.capabilities().authoritative_tokenize) {
    try {
      return backend.tokenize(text);
    } catch (const UnsupportedOpError&) {
    }
  }
  return backend.vocab().greedy_tokenize(text);
}

// Higher logprob first; ties by the lexicographically smaller id sequence.
inline bool beam_order(const Hypothesis& a, const Hypothesis& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.ext < b.ext;
}

}  // namespace detail

/// Applies the casing mode, checks every character folds into the symbol
/// set, and splits at the last space. Character-level vocabularies keep the
/// whole context stable since their tokenization is unique.
inline PreparedContext prepare_context(LanguageModel& backend, std::string_view context,
                                       const SearchParams& params) {
  const std::string cased = apply_casing(context, params.casing);
  for (std::size_t i = 0; i < cased.size(); ++i) {
    if (!fold(cased[i]))
      throw ContextError("context character at offset " + std::to_string(i) +
                             " is outside the symbol set",
                         i);
  }
  const auto& vocab = backend.vocab();
  PreparedContext pc;
  std::string_view stable_text;
  if (vocab.character_level()) {
    stable_text = cased;
  } else {
    const auto cut = cased.rfind(' ');
    if (cut == std::string::npos) {
      pc.volatile_suffix = cased;
    } else {
      stable_text = std::string_view(cased).substr(0, cut);
      pc.volatile_suffix = cased.substr(cut);
    }
  }
  if (params.context_prefix.empty()) {
    pc.stable_tokens.push_back(vocab.bos_id());
  } else {
    for (auto id : params.context_prefix)
      if (!vocab.contains(id))
        throw ArgumentError("context prefix holds unknown token id " + std::to_string(id));
    pc.stable_tokens = params.context_prefix;
  }
  pc.head_length = pc.stable_tokens.size();
  auto body = detail::tokenize_stable(backend, stable_text);
  pc.stable_tokens.insert(pc.stable_tokens.end(), body.begin(), body.end());
  return pc;
}

/// Normalized distribution over the 28 symbols for the character following
/// context. Breadth-first: each round scores the whole frontier in one
/// backend batch, completing tokens deposit into the bucket of their first
/// character past the context, continuing tokens become the next frontier,
/// which is cut to the best beam_width hypotheses. Stops when the frontier
/// empties or max_completed is reached at a round boundary.
inline CharDistribution predict_next_char(LanguageModel& backend, std::string_view context,
                                          const SearchParams& params = {}) {
  params.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto pc = prepare_context(backend, context, params);
  const auto& vocab = backend.vocab();
  const std::string& suffix = pc.volatile_suffix;

  CharDistribution dist;
  std::array<double, kNumSymbols> bucket;
  bucket.fill(kNegInf);

  std::vector<Hypothesis> frontier(1);
  std::vector<Matches> matches;
  std::vector<Hypothesis> next;
  while (!frontier.empty() && dist.completed_count < params.max_completed) {
    LogProbBatch batch;
    matches.clear();
    std::vector<const Hypothesis*> live;
    for (const auto& h : frontier) {
      LogProbItem item;
      item.ctx = pc.stable_tokens;
      item.ctx.insert(item.ctx.end(), h.ext.begin(), h.ext.end());
      if (h.matched == suffix.size()) {
        if (vocab.all_completions().empty()) continue;
        matches.emplace_back();
      } else {
        auto m = vocab.match_candidates(suffix, h.matched);
        if (m.continuing.empty() && m.completing.empty()) continue;
        std::vector<TokenId> cands;
        cands.reserve(m.continuing.size() + m.completing.size());
        for (const auto& c : m.continuing) cands.push_back(c.id);
        for (const auto& c : m.completing) cands.push_back(c.id);
        item.cands = std::move(cands);
        matches.push_back(std::move(m));
      }
      batch.items.push_back(std::move(item));
      live.push_back(&h);
    }
    if (batch.items.empty()) break;

    backend.next_token_logprobs(batch);
    ++dist.backend_queries;
    ++dist.rounds;

    next.clear();
    for (std::size_t k = 0; k < batch.items.size(); ++k) {
      const auto& item = batch.items[k];
      const Hypothesis& h = *live[k];
      if (!item.cands) {
        for (const auto& c : vocab.all_completions()) {
          auto& b = bucket[*symbol_index(c.next_char)];
          b = log_add(b, h.logprob + item.results[c.id]);
          ++dist.completed_count;
        }
        continue;
      }
      const auto& m = matches[k];
      std::size_t r = 0;
      for (const auto& c : m.continuing) {
        const double lp = h.logprob + item.results[r++];
        if (lp == kNegInf) continue;
        Hypothesis succ{h.ext, c.new_pos, lp};
        succ.ext.push_back(c.id);
        next.push_back(std::move(succ));
      }
      for (const auto& c : m.completing) {
        auto& b = bucket[*symbol_index(c.next_char)];
        b = log_add(b, h.logprob + item.results[r++]);
        ++dist.completed_count;
      }
    }

    if (next.size() > params.beam_width) {
      std::partial_sort(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(params.beam_width),
                        next.end(), detail::beam_order);
      next.resize(params.beam_width);
    } else {
      std::sort(next.begin(), next.end(), detail::beam_order);
    }
    frontier.swap(next);
  }

  dist.log_mass = log_sum_exp(bucket);
  dist.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (dist.log_mass == kNegInf)
    throw NoMassError("no probability mass found for context '" + std::string(context) + "'");
  dist.mass_found = std::exp(dist.log_mass);
  for (std::size_t i = 0; i < kNumSymbols; ++i) dist.probs[i] = std::exp(bucket[i] - dist.log_mass);
  return dist;
}

struct CharLogProb {
  char symbol;
  double logprob;  // -inf when the character got no probability
  bool no_mass = false;
};

/// ln p of every character of sentence given its preceding prefix. The
/// casing mode applies to the prefix only; the scored character is folded.
inline std::vector<CharLogProb> sequence_char_logprobs(LanguageModel& backend,
                                                       std::string_view sentence,
                                                       const SearchParams& params = {}) {
  if (sentence.empty()) throw ArgumentError("empty sentence");
  std::vector<CharLogProb> out;
  out.reserve(sentence.size());
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    auto sym = fold(sentence[i]);
    if (!sym)
      throw ContextError("sentence character at offset " + std::to_string(i) +
                             " is outside the symbol set",
                         i);
    try {
      auto d = predict_next_char(backend, sentence.substr(0, i), params);
      const double p = d.prob(*sym);
      out.push_back({*sym, p > 0.0 ? std::log(p) : kNegInf, false});
    } catch (const NoMassError&) {
      out.push_back({*sym, kNegInf, true});
    }
  }
  return out;
}

}  // namespace charpred
