#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "charpred/error.hpp"
#include "charpred/symbol_set.hpp"
#include "charpred/witten_bell.hpp"
#include "json.hpp"

namespace charpred {

/// Witten-Bell smoothed character n-gram over the 28-symbol set. Histories
/// are padded with a start pseudo-symbol that is never predicted; no
/// end-of-sentence event is modelled.
class CharNGramModel {
 public:
  static constexpr int kMaxOrder = 16;
  static constexpr int kStart = static_cast<int>(kNumSymbols);
  static constexpr char kStartChar = '^';  // start pseudo-symbol in model files

  explicit CharNGramModel(int order) : counts_(check_order(order), kNumSymbols) {}

  int order() const { return counts_.order(); }
  const WittenBellCounts<int>& counts() const { return counts_; }

  /// Counts one normalized sentence.
  void add_sentence(std::string_view s) {
    std::vector<int> hist(static_cast<std::size_t>(order() - 1), kStart);
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto sym = symbol_index(s[i]);
      if (!sym)
        throw ArgumentError("training text character at offset " + std::to_string(i) +
                            " is not a canonical symbol");
      counts_.add(hist, static_cast<int>(*sym));
      if (!hist.empty()) {
        hist.erase(hist.begin());
        hist.push_back(static_cast<int>(*sym));
      }
    }
  }

  double prob(std::string_view context, char symbol) const {
    auto w = symbol_index(symbol);
    if (!w) throw ArgumentError(std::string("'") + symbol + "' is not in the symbol set");
    return counts_.prob(history(context), static_cast<int>(*w));
  }

  double logprob(std::string_view context, char symbol) const {
    return std::log(prob(context, symbol));
  }

  SymbolProbs distribution(std::string_view context) const {
    auto d = counts_.distribution(history(context));
    SymbolProbs out{};
    std::copy(d.begin(), d.end(), out.begin());
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [h, s] : counts_.table()) {
      std::string key;
      for (int x : h) key.push_back(x == kStart ? kStartChar : symbol_at(static_cast<std::size_t>(x)));
      nlohmann::json row = nlohmann::json::object();
      for (const auto& [w, c] : s.counts) row[std::string(1, symbol_at(static_cast<std::size_t>(w)))] = c;
      counts[key] = std::move(row);
    }
    return {{"version", 1},
            {"order", order()},
            {"counts", std::move(counts)},
            {"symbolset", std::string(kSymbols)}};
  }

  static CharNGramModel from_json(const nlohmann::json& j) {
    try {
      if (j.value("version", 0) != 1) throw LoadError("char model: unsupported version");
      if (j.value("symbolset", std::string()) != kSymbols)
        throw LoadError("char model: symbol set does not match");
      CharNGramModel m(j.at("order").get<int>());
      for (const auto& [key, row] : j.at("counts").items()) {
        if (static_cast<int>(key.size()) >= m.order())
          throw LoadError("char model: context '" + key + "' is longer than order-1");
        std::vector<int> h;
        for (char c : key) {
          if (c == kStartChar) {
            h.push_back(kStart);
            continue;
          }
          auto s = symbol_index(c);
          if (!s) throw LoadError("char model: bad context '" + key + "'");
          h.push_back(static_cast<int>(*s));
        }
        for (const auto& [w, c] : row.items()) {
          auto s = w.size() == 1 ? symbol_index(w[0]) : std::nullopt;
          if (!s) throw LoadError("char model: bad symbol '" + w + "'");
          m.counts_.set_count(h, static_cast<int>(*s), c.get<std::uint64_t>());
        }
      }
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(std::string("char model: ") + e.what());
    } catch (const ArgumentError& e) {
      throw LoadError(std::string("char model: ") + e.what());
    }
  }

 private:
  static int check_order(int n) {
    if (n < 1 || n > kMaxOrder) throw ArgumentError("char n-gram order must be in [1, 16]");
    return n;
  }

  // Last order-1 folded symbols of context, start-padded on the left.
  std::vector<int> history(std::string_view context) const {
    const auto n = static_cast<std::size_t>(order() - 1);
    std::vector<int> h(n, kStart);
    const std::size_t take = std::min(n, context.size());
    for (std::size_t i = 0; i < take; ++i) {
      const char c = context[context.size() - take + i];
      auto s = folded_index(c);
      if (!s) throw ArgumentError("context character is outside the symbol set");
      h[n - take + i] = static_cast<int>(*s);
    }
    return h;
  }

  WittenBellCounts<int> counts_;
};

template <typename Range>
CharNGramModel train_char_ngram(const Range& sentences, int order) {
  CharNGramModel m(order);
  std::size_t n = 0;
  for (const auto& s : sentences) {
    std::string_view sv(s);
    if (sv.empty()) continue;
    m.add_sentence(sv);
    ++n;
  }
  if (n == 0) throw TrainingError("empty training corpus");
  return m;
}

inline void save_char_ngram(const CharNGramModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << m.to_json().dump() << '\n';
}

inline CharNGramModel load_char_ngram(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open char model " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("char model " + path + ": " + e.what());
  }
  return CharNGramModel::from_json(j);
}

// ---- two-model interpolation ----------------------------------------------

inline double interpolate(double p1, double p2, double lambda) {
  return lambda * p1 + (1.0 - lambda) * p2;
}

struct ProbPair {
  double p1;
  double p2;
};

struct MixtureWeight {
  double lambda = 0.5;
  double fitted_loglik = 0.0;
  std::size_t iterations = 0;
  std::vector<double> loglik_trace;  // before the first update, then after each
};

inline double mixture_loglik(const std::vector<ProbPair>& pairs, double lambda) {
  double ll = 0.0;
  for (const auto& [a, b] : pairs) ll += std::log(interpolate(a, b, lambda));
  return ll;
}

/// EM for the weight on model 1, starting from 0.5:
///   lambda' = mean_i( lambda p1_i / (lambda p1_i + (1-lambda) p2_i) )
/// until the update moves less than tol or max_iter is reached.
inline MixtureWeight fit_mixture_weight(const std::vector<ProbPair>& pairs, double tol = 1e-9,
                                        std::size_t max_iter = 100000) {
  if (pairs.empty()) throw ArgumentError("no probability pairs to fit");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [a, b] = pairs[i];
    if (!(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0))
      throw ArgumentError("pair " + std::to_string(i) + " holds a probability outside [0,1]");
    if (a == 0.0 && b == 0.0)
      throw ArgumentError("pair " + std::to_string(i) + " has zero probability under both models");
  }
  MixtureWeight w;
  double lambda = 0.5;
  w.loglik_trace.push_back(mixture_loglik(pairs, lambda));
  const double n = static_cast<double>(pairs.size());
  while (w.iterations < max_iter) {
    double post = 0.0;
    for (const auto& [a, b] : pairs) post += lambda * a / interpolate(a, b, lambda);
    const double next = post / n;
    const double delta = std::abs(next - lambda);
    lambda = next;
    ++w.iterations;
    w.loglik_trace.push_back(mixture_loglik(pairs, lambda));
    if (delta < tol) break;
  }
  w.lambda = lambda;
  w.fitted_loglik = w.loglik_trace.back();
  return w;
}

}  // namespace charpred
