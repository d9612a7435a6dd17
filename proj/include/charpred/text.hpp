#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "charpred/error.hpp"

namespace charpred {

/// How the conditioning prefix is cased before a prediction. Scoring is
/// always case-folded.
enum class CasingMode {
  kNone,     // all lowercase
  kSimple,   // sentence-initial letter and I/I'm/I'll/I've/I'd uppercased
  kAsGiven,  // trust the caller's casing
};

inline std::string_view to_string(CasingMode m) {
  switch (m) {
    case CasingMode::kNone: return "none";
    case CasingMode::kSimple: return "simple";
    case CasingMode::kAsGiven: return "as-given";
  }
  return "none";
}

inline CasingMode parse_casing_mode(std::string_view s) {
  if (s == "none" || s == "lower" || s == "lowercase") return CasingMode::kNone;
  if (s == "simple") return CasingMode::kSimple;
  if (s == "as-given" || s == "human") return CasingMode::kAsGiven;
  throw ArgumentError("unknown casing mode '" + std::string(s) + "'");
}

namespace detail {

inline bool is_ascii_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

}  // namespace detail

/// Keeps ASCII letters, apostrophes and spaces (any whitespace counts as a
/// space), collapses space runs and trims. Lowercases unless keep_case.
/// Non-ASCII letters are dropped.
inline std::string normalize_text(std::string_view s, bool keep_case = false) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (!detail::is_ascii_letter(c) && c != '\'') continue;
    if (pending_space) out.push_back(' ');
    pending_space = false;
    if (!keep_case && c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out.push_back(c);
  }
  return out;
}

/// Uppercases the first letter and the whole-word pronoun forms i, i'm,
/// i'll, i've, i'd. Expects normalized lowercase input.
inline std::string simple_case(std::string_view s) {
  static constexpr std::array<std::string_view, 5> kPronouns = {"i", "i'm", "i'll", "i've", "i'd"};
  std::string out(s);
  for (auto& c : out) {
    if (detail::is_ascii_letter(c)) {
      if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
      break;
    }
  }
  std::size_t start = 0;
  while (start <= out.size()) {
    auto end = out.find(' ', start);
    if (end == std::string::npos) end = out.size();
    std::string_view word(out.data() + start, end - start);
    for (auto p : kPronouns) {
      if (word == p) {
        out[start] = 'I';
        break;
      }
    }
    start = end + 1;
  }
  return out;
}

inline std::string apply_casing(std::string_view prefix, CasingMode mode) {
  switch (mode) {
    case CasingMode::kNone: {
      std::string out(prefix);
      for (auto& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      return out;
    }
    case CasingMode::kSimple: return simple_case(apply_casing(prefix, CasingMode::kNone));
    case CasingMode::kAsGiven: return std::string(prefix);
  }
  return std::string(prefix);
}

}  // namespace charpred
