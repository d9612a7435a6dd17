#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "charpred/char_beam.hpp"
#include "charpred/char_ngram.hpp"
#include "charpred/error.hpp"
#include "charpred/lm_backend.hpp"
#include "charpred/symbol_set.hpp"
#include "charpred/text.hpp"

namespace charpred {

/// Anything that yields a next-character distribution for a (cased) prefix.
/// Throwing NoMassError signals "no probability anywhere".
class CharSource {
 public:
  virtual ~CharSource() = default;
  virtual SymbolProbs predict(std::string_view prefix) = 0;
  virtual std::string name() const = 0;
  virtual std::string params() const { return ""; }
};

class UniformSource final : public CharSource {
 public:
  SymbolProbs predict(std::string_view) override {
    SymbolProbs p;
    p.fill(1.0 / static_cast<double>(kNumSymbols));
    return p;
  }
  std::string name() const override { return "uniform"; }
};

/// Beam-search marginalization over a token backend. The harness applies
/// casing, so the prefix is passed through as given.
class BeamSource final : public CharSource {
 public:
  BeamSource(LanguageModel& backend, SearchParams params)
      : backend_(backend), params_(std::move(params)) {
    params_.casing = CasingMode::kAsGiven;
  }
  SymbolProbs predict(std::string_view prefix) override {
    return predict_next_char(backend_, prefix, params_).probs;
  }
  std::string name() const override { return backend_.name(); }
  std::string params() const override {
    return "beam=" + std::to_string(params_.beam_width) +
           " max_completed=" + std::to_string(params_.max_completed);
  }

 private:
  LanguageModel& backend_;
  SearchParams params_;
};

class NGramSource final : public CharSource {
 public:
  explicit NGramSource(const CharNGramModel& model) : model_(model) {}
  SymbolProbs predict(std::string_view prefix) override { return model_.distribution(prefix); }
  std::string name() const override { return "char-ngram"; }
  std::string params() const override { return "order=" + std::to_string(model_.order()); }

 private:
  const CharNGramModel& model_;
};

/// lambda * first + (1 - lambda) * second, symbol by symbol. A no-mass
/// failure on one side contributes zero from that side.
class MixtureSource final : public CharSource {
 public:
  MixtureSource(CharSource& first, CharSource& second, double lambda)
      : first_(first), second_(second), lambda_(lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("mixture weight must be in [0,1]");
  }
  SymbolProbs predict(std::string_view prefix) override {
    SymbolProbs a{}, b{};
    bool have_a = true, have_b = true;
    try { a = first_.predict(prefix); } catch (const NoMassError&) { have_a = false; }
    try { b = second_.predict(prefix); } catch (const NoMassError&) { have_b = false; }
    if (!have_a && !have_b) throw NoMassError("neither mixture component has mass");
    SymbolProbs out{};
    for (std::size_t i = 0; i < kNumSymbols; ++i) out[i] = interpolate(a[i], b[i], lambda_);
    return out;
  }
  std::string name() const override { return "mix(" + first_.name() + "," + second_.name() + ")"; }
  std::string params() const override {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", lambda_);
    return "lambda=" + std::string(buf);
  }

 private:
  CharSource& first_;
  CharSource& second_;
  double lambda_;
};

struct EvalOptions {
  CasingMode casing = CasingMode::kNone;
  double floor = 1e-10;
  bool keep_rows = true;
  bool keep_char_probs = false;
};

struct SentenceRow {
  std::string text;  // normalized, lowercase
  std::size_t chars = 0;
  double logprob_sum = 0.0;
  std::size_t floored = 0;
};

struct EvalReport {
  std::string model;
  std::string params;
  double per_char_perplexity = 0.0;
  double logprob_sum = 0.0;
  std::size_t char_count = 0;
  std::size_t sentence_count = 0;
  std::size_t skipped_sentences = 0;
  std::size_t floored_events = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  std::vector<SentenceRow> rows;
  std::vector<double> char_probs;  // scored probability per character, in order
};

/// Raised when a source fails mid-run; carries what was scored so far.
class EvalAborted : public Error {
 public:
  EvalAborted(const std::string& msg, EvalReport partial)
      : Error(msg), partial_(std::move(partial)) {}
  const EvalReport& partial() const { return partial_; }

 private:
  EvalReport partial_;
};

namespace detail {

struct SentenceResult {
  SentenceRow row;
  std::vector<double> probs;
  std::vector<double> ms;
};

inline SentenceResult score_sentence(CharSource& source, const std::string& cased,
                                     const EvalOptions& opt) {
  SentenceResult r;
  r.row.text = apply_casing(cased, CasingMode::kNone);
  r.row.chars = cased.size();
  for (std::size_t i = 0; i < cased.size(); ++i) {
    const std::string prefix = opt.casing == CasingMode::kAsGiven
                                   ? cased.substr(0, i)
                                   : apply_casing(r.row.text.substr(0, i), opt.casing);
    const auto t0 = std::chrono::steady_clock::now();
    double p = 0.0;
    try {
      p = source.predict(prefix)[*folded_index(cased[i])];
    } catch (const NoMassError&) {
      p = 0.0;
    }
    r.ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    if (!(p > 0.0)) {
      p = opt.floor;
      ++r.row.floored;
    }
    r.row.logprob_sum += std::log(p);
    if (opt.keep_char_probs) r.probs.push_back(p);
  }
  return r;
}

inline void finish_report(EvalReport& rep, std::vector<double>& ms) {
  rep.per_char_perplexity =
      rep.char_count ? std::exp(-rep.logprob_sum / static_cast<double>(rep.char_count)) : 0.0;
  if (ms.empty()) return;
  rep.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  const std::size_t n = ms.size();
  rep.median_ms = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  // nearest-rank percentile
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  rep.p95_ms = ms[std::max<std::size_t>(rank, 1) - 1];
}

inline void merge(EvalReport& rep, SentenceResult&& r, const EvalOptions& opt,
                  std::vector<double>& ms) {
  rep.sentence_count += 1;
  rep.char_count += r.row.chars;
  rep.floored_events += r.row.floored;
  rep.logprob_sum += r.row.logprob_sum;
  ms.insert(ms.end(), r.ms.begin(), r.ms.end());
  if (opt.keep_char_probs) rep.char_probs.insert(rep.char_probs.end(), r.probs.begin(), r.probs.end());
  if (opt.keep_rows) rep.rows.push_back(std::move(r.row));
}

}  // namespace detail

/// Per-character perplexity of source over raw sentences. Each sentence is
/// normalized (skipped when that leaves nothing), every character including
/// spaces is scored, no end-of-sentence event. Zero or no-mass predictions
/// are replaced by opt.floor and counted.
template <typename Range>
EvalReport evaluate_perplexity(CharSource& source, const Range& sentences,
                               const EvalOptions& opt = {}) {
  if (!(opt.floor > 0.0 && opt.floor <= 1.0)) throw ArgumentError("floor must be in (0,1]");
  EvalReport rep;
  rep.model = source.name();
  rep.params = source.params();
  std::vector<double> ms;
  for (const auto& raw : sentences) {
    std::string cased = normalize_text(raw, /*keep_case=*/true);
    if (cased.empty()) {
      ++rep.skipped_sentences;
      continue;
    }
    try {
      detail::merge(rep, detail::score_sentence(source, cased, opt), opt, ms);
    } catch (const Error& e) {
      detail::finish_report(rep, ms);
      throw EvalAborted(std::string("evaluation aborted after ") +
                            std::to_string(rep.sentence_count) + " sentences: " + e.what(),
                        std::move(rep));
    }
  }
  if (rep.sentence_count == 0) throw ArgumentError("no sentences");
  detail::finish_report(rep, ms);
  return rep;
}

/// Same result as evaluate_perplexity, with sentences spread over `workers`
/// sources built by make_source (one per worker, e.g. one backend
/// connection each). Rows come back in input order.
inline EvalReport evaluate_perplexity_parallel(
    const std::function<std::unique_ptr<CharSource>()>& make_source,
    const std::vector<std::string>& sentences, const EvalOptions& opt, std::size_t workers) {
  if (workers <= 1) {
    auto src = make_source();
    return evaluate_perplexity(*src, sentences, opt);
  }
  if (!(opt.floor > 0.0 && opt.floor <= 1.0)) throw ArgumentError("floor must be in (0,1]");
  std::vector<std::string> cased(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) cased[i] = normalize_text(sentences[i], true);

  std::vector<std::optional<detail::SentenceResult>> results(sentences.size());
  std::mutex err_mu;
  std::string first_error;
  std::string model, params;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        auto src = make_source();
        if (w == 0) {
          model = src->name();
          params = src->params();
        }
        for (std::size_t i = w; i < cased.size(); i += workers) {
          if (cased[i].empty()) continue;
          results[i] = detail::score_sentence(*src, cased[i], opt);
        }
      } catch (const std::exception& e) {
        std::lock_guard lk(err_mu);
        if (first_error.empty()) first_error = e.what();
      }
    });
  }
  for (auto& t : pool) t.join();

  EvalReport rep;
  rep.model = model;
  rep.params = params;
  std::vector<double> ms;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (cased[i].empty()) {
      ++rep.skipped_sentences;
      continue;
    }
    if (results[i]) detail::merge(rep, std::move(*results[i]), opt, ms);
  }
  detail::finish_report(rep, ms);
  if (!first_error.empty()) throw EvalAborted("evaluation aborted: " + first_error, std::move(rep));
  if (rep.sentence_count == 0) throw ArgumentError("no sentences");
  return rep;
}

enum class ReportFormat { kTsv, kMarkdown };

/// Columns: model, params, perplexity (3 dp), N, floored, mean_ms, p95_ms (1 dp).
inline std::string emit_report(const EvalReport& r, ReportFormat fmt) {
  char ppl[64], mean[64], p95[64];
  std::snprintf(ppl, sizeof ppl, "%.3f", r.per_char_perplexity);
  std::snprintf(mean, sizeof mean, "%.1f", r.mean_ms);
  std::snprintf(p95, sizeof p95, "%.1f", r.p95_ms);
  const std::vector<std::string> cols = {"model", "params", "perplexity", "N",
                                         "floored", "mean_ms", "p95_ms"};
  const std::vector<std::string> vals = {r.model, r.params, ppl,
                                         std::to_string(r.char_count),
                                         std::to_string(r.floored_events), mean, p95};
  std::string out;
  auto join = [&](const std::vector<std::string>& xs, std::string_view sep, std::string_view pre,
                  std::string_view post) {
    out += pre;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) out += sep;
      out += xs[i];
    }
    out += post;
    out += '\n';
  };
  if (fmt == ReportFormat::kTsv) {
    join(cols, "\t", "", "");
    join(vals, "\t", "", "");
  } else {
    join(cols, " | ", "| ", " |");
    join(std::vector<std::string>(cols.size(), "---"), " | ", "| ", " |");
    join(vals, " | ", "| ", " |");
  }
  return out;
}

}  // namespace charpred
