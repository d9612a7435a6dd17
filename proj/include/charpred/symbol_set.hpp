#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace charpred {

// The 28 predictable characters: a-z, space, apostrophe.
inline constexpr std::size_t kNumSymbols = 28;
inline constexpr std::string_view kSymbols = "abcdefghijklmnopqrstuvwxyz '";

using SymbolProbs = std::array<double, kNumSymbols>;

/// Canonical symbol for c, or nullopt when c has none. Only ASCII letters,
/// space and apostrophe fold.
constexpr std::optional<char> fold(char c) noexcept {
  if (c >= 'A' && c <= 'Z') return static_cast<char>(c - 'A' + 'a');
  if ((c >= 'a' && c <= 'z') || c == ' ' || c == '\'') return c;
  return std::nullopt;
}

/// Position of canonical symbol s in kSymbols, or nullopt.
constexpr std::optional<std::size_t> symbol_index(char s) noexcept {
  if (s >= 'a' && s <= 'z') return static_cast<std::size_t>(s - 'a');
  if (s == ' ') return 26;
  if (s == '\'') return 27;
  return std::nullopt;
}

/// Index of fold(c); nullopt for characters outside the set.
constexpr std::optional<std::size_t> folded_index(char c) noexcept {
  auto f = fold(c);
  return f ? symbol_index(*f) : std::nullopt;
}

constexpr char symbol_at(std::size_t i) noexcept { return kSymbols[i]; }

/// ASCII-only lowercasing that leaves every other byte alone. Used as the
/// trie key transform so unfoldable bytes never equal a context symbol.
constexpr char fold_key(char c) noexcept {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::string fold_key(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = fold_key(c);
  return out;
}

/// Printable name for a symbol, used in reports ("<sp>" for space).
inline std::string symbol_name(char s) {
  return s == ' ' ? std::string("<sp>") : std::string(1, s);
}

}  // namespace charpred
