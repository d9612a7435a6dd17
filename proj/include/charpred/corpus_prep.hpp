#pragma once

#include <cstdint>
#include <cstdlib>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "charpred/error.hpp"
#include "charpred/text.hpp"

namespace charpred {

// ---- sentence filter ------------------------------------------------------

struct FilterConfig {
  /// Lowercase dictionary; the OOV rule is skipped when absent.
  std::optional<std::unordered_set<std::string>> wordlist;
  double max_oov_fraction = 0.20;
  std::string end_punct = ".?!";
};

enum class RejectReason { kNone, kCapitalStart, kMixedCase, kEndPunct, kOov };

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kNone: return "keep";
    case RejectReason::kCapitalStart: return "capital-start";
    case RejectReason::kMixedCase: return "mixed-case";
    case RejectReason::kEndPunct: return "end-punct";
    case RejectReason::kOov: return "oov";
  }
  return "keep";
}

struct FilterResult {
  RejectReason reason = RejectReason::kNone;
  std::size_t oov = 0;
  std::size_t words = 0;
  bool keep() const { return reason == RejectReason::kNone; }
};

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_alnum_or_apos(char c) {
  return is_ascii_letter(c) || (c >= '0' && c <= '9') || c == '\'' ||
         static_cast<unsigned char>(c) >= 0x80;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Lowercased with leading/trailing punctuation removed; apostrophes inside
// the word are kept ("don't"), edge ones stripped.
inline std::string oov_key(std::string_view w) {
  std::size_t b = 0, e = w.size();
  auto edge = [](char c) { return !is_alnum_or_apos(c) || c == '\''; };
  while (b < e && edge(w[b])) ++b;
  while (e > b && edge(w[e - 1])) --e;
  std::string out(w.substr(b, e - b));
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

}  // namespace detail

/// Keep iff: first character is an uppercase letter; at least one uppercase
/// and one lowercase letter; last character is end punctuation; OOV fraction
/// at most max_oov_fraction. Reports the first rule that fails.
inline FilterResult filter_sentence(std::string_view s, const FilterConfig& cfg) {
  FilterResult r;
  if (s.empty() || !(s.front() >= 'A' && s.front() <= 'Z')) {
    r.reason = RejectReason::kCapitalStart;
    return r;
  }
  bool upper = false, lower = false;
  for (char c : s) {
    upper |= (c >= 'A' && c <= 'Z');
    lower |= (c >= 'a' && c <= 'z');
  }
  if (!(upper && lower)) {
    r.reason = RejectReason::kMixedCase;
    return r;
  }
  if (cfg.end_punct.find(s.back()) == std::string::npos) {
    r.reason = RejectReason::kEndPunct;
    return r;
  }
  if (cfg.wordlist) {
    for (auto w : detail::split_ws(s)) {
      auto key = detail::oov_key(w);
      if (key.empty()) continue;
      ++r.words;
      if (!cfg.wordlist->contains(key)) ++r.oov;
    }
    if (r.words > 0 &&
        static_cast<double>(r.oov) > cfg.max_oov_fraction * static_cast<double>(r.words))
      r.reason = RejectReason::kOov;
  }
  return r;
}

inline std::unordered_set<std::string> load_wordlist(std::istream& in) {
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto key = detail::oov_key(line);
    if (!key.empty()) words.insert(std::move(key));
  }
  return words;
}

// ---- dedup ----------------------------------------------------------------

/// Streaming exact-duplicate removal: the first occurrence wins.
class Deduplicator {
 public:
  bool first_time(std::string_view s) { return seen_.emplace(s).second; }

 private:
  std::unordered_set<std::string> seen_;
};

inline std::vector<std::string> dedup_stream(const std::vector<std::string>& sentences) {
  Deduplicator d;
  std::vector<std::string> out;
  for (const auto& s : sentences)
    if (d.first_time(s)) out.push_back(s);
  return out;
}

// ---- split ----------------------------------------------------------------

enum class Split { kTrain, kDev, kTest };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

}  // namespace detail

/// Keyed hash of (seed, sentence); 90/5/5 buckets.
inline Split assign_split(std::string_view sentence, std::uint64_t seed) {
  std::uint64_t h = detail::mix64(seed ^ 0x6a09e667f3bcc909ull);
  for (unsigned char c : sentence) {
    h ^= c;
    h *= 1099511628211ull;
  }
  const auto bucket = detail::mix64(h) % 100;
  if (bucket < 90) return Split::kTrain;
  if (bucket < 95) return Split::kDev;
  return Split::kTest;
}

struct CorpusSplit {
  std::vector<std::string> train, dev, test;
};

inline CorpusSplit split_corpus(const std::vector<std::string>& sentences, std::uint64_t seed) {
  CorpusSplit out;
  for (const auto& s : sentences) {
    switch (assign_split(s, seed)) {
      case Split::kTrain: out.train.push_back(s); break;
      case Split::kDev: out.dev.push_back(s); break;
      case Split::kTest: out.test.push_back(s); break;
    }
  }
  return out;
}

// ---- classifier-score selection -------------------------------------------

struct ScoredSentence {
  std::string text;
  double p_written = 0.0;
  double p_spoken = 0.0;
  double p_other = 0.0;
};

/// Parses "text<TAB>p_written<TAB>p_spoken<TAB>p_other". Throws
/// ArgumentError naming line_no on malformed rows.
inline ScoredSentence parse_score_row(std::string_view line, std::size_t line_no) {
  auto fail = [&](const std::string& why) {
    return ArgumentError("score file line " + std::to_string(line_no) + ": " + why);
  };
  std::vector<std::string_view> f;
  std::size_t start = 0;
  for (;;) {
    auto tab = line.find('\t', start);
    f.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (f.size() != 4) throw fail("expected 4 tab-separated columns, got " + std::to_string(f.size()));
  auto num = [&](std::string_view s, const char* what) {
    std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || end != tmp.c_str() + tmp.size()) throw fail(std::string("bad ") + what);
    if (!(v >= 0.0 && v <= 1.0)) throw fail(std::string(what) + " outside [0,1]");
    return v;
  };
  return {std::string(f[0]), num(f[1], "p_written"), num(f[2], "p_spoken"), num(f[3], "p_other")};
}

inline bool passes_threshold(const ScoredSentence& s, double threshold) {
  return std::max(s.p_written, s.p_spoken) >= threshold;
}

inline std::vector<ScoredSentence> select_by_threshold(const std::vector<ScoredSentence>& scored,
                                                       double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("threshold must be in [0,1]");
  std::vector<ScoredSentence> out;
  for (const auto& s : scored)
    if (passes_threshold(s, threshold)) out.push_back(s);
  return out;
}

// ---- statistics -----------------------------------------------------------

struct CorpusStats {
  std::size_t sentences = 0;
  double words_per_sentence = 0.0;
  double chars_per_sentence = 0.0;
  double questions = 0.0;
  double exclamations = 0.0;
  double statements = 0.0;
};

/// Words are whitespace tokens; characters are counted after normalize_text;
/// type comes from the final character ('?', '!', anything else a statement).
inline CorpusStats corpus_stats(const std::vector<std::string>& sentences) {
  CorpusStats st;
  std::size_t words = 0, chars = 0, q = 0, e = 0, s = 0;
  for (const auto& raw : sentences) {
    ++st.sentences;
    words += detail::split_ws(raw).size();
    chars += normalize_text(raw).size();
    std::string_view t(raw);
    while (!t.empty() && detail::is_space(t.back())) t.remove_suffix(1);
    const char last = t.empty() ? '\0' : t.back();
    if (last == '?') ++q;
    else if (last == '!') ++e;
    else ++s;
  }
  if (st.sentences) {
    const double n = static_cast<double>(st.sentences);
    st.words_per_sentence = static_cast<double>(words) / n;
    st.chars_per_sentence = static_cast<double>(chars) / n;
    st.questions = static_cast<double>(q) / n;
    st.exclamations = static_cast<double>(e) / n;
    st.statements = static_cast<double>(s) / n;
  }
  return st;
}

}  // namespace charpred
