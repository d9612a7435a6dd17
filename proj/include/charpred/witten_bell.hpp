#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "charpred/error.hpp"

namespace charpred {

namespace detail {

template <typename Sym>
struct SymSeqHash {
  std::size_t operator()(const std::vector<Sym>& v) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (auto s : v) {
      h ^= static_cast<std::uint64_t>(static_cast<std::int64_t>(s)) + 0x9e3779b97f4a7c15ull;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace detail

/// Counts and interpolated Witten-Bell estimates for an order-n model over a
/// dense alphabet 0..alphabet_size-1. Histories are sequences of arbitrary
/// symbols (they may include context-only symbols such as a start marker).
///
///   p(w|h) = (c(h,w) + T(h) p(w|h')) / (c(h) + T(h))
///
/// with h' = h minus its oldest symbol and a uniform base distribution.
/// A history that was never observed passes p(w|h') through unchanged.
template <typename Sym>
class WittenBellCounts {
 public:
  struct Stats {
    std::uint64_t total = 0;
    std::unordered_map<Sym, std::uint64_t> counts;
    std::size_t types() const { return counts.size(); }
  };
  using History = std::vector<Sym>;
  using Table = std::unordered_map<History, Stats, detail::SymSeqHash<Sym>>;

  WittenBellCounts() = default;
  WittenBellCounts(int order, std::size_t alphabet_size)
      : order_(order), alphabet_size_(alphabet_size) {
    if (order < 1) throw ArgumentError("n-gram order must be >= 1");
    if (alphabet_size == 0) throw ArgumentError("empty alphabet");
  }

  int order() const { return order_; }
  std::size_t alphabet_size() const { return alphabet_size_; }
  const Table& table() const { return table_; }

  /// Records w after history; only the last order-1 symbols are used.
  void add(std::span<const Sym> history, Sym w, std::uint64_t count = 1) {
    const std::size_t keep = std::min<std::size_t>(history.size(), order_ - 1);
    for (std::size_t k = 0; k <= keep; ++k) {
      History h(history.end() - k, history.end());
      auto& s = table_[std::move(h)];
      s.total += count;
      s.counts[w] += count;
    }
  }

  /// Direct insertion used when loading persisted counts.
  void set_count(const History& h, Sym w, std::uint64_t count) {
    auto& s = table_[h];
    auto& c = s.counts[w];
    s.total = s.total - c + count;
    c = count;
  }

  const Stats* find(const History& h) const {
    auto it = table_.find(h);
    return it == table_.end() ? nullptr : &it->second;
  }

  double prob(std::span<const Sym> history, Sym w) const {
    double p = 1.0 / static_cast<double>(alphabet_size_);
    const std::size_t keep = std::min<std::size_t>(history.size(), order_ - 1);
    History h;
    h.reserve(keep);
    for (std::size_t k = 0; k <= keep; ++k) {
      h.assign(history.end() - k, history.end());
      const Stats* s = find(h);
      if (!s || s->total == 0) continue;
      auto it = s->counts.find(w);
      const double c = it == s->counts.end() ? 0.0 : static_cast<double>(it->second);
      const double t = static_cast<double>(s->types());
      p = (c + t * p) / (static_cast<double>(s->total) + t);
    }
    return p;
  }

  /// Full distribution over the alphabet; index i is symbol i.
  std::vector<double> distribution(std::span<const Sym> history) const {
    std::vector<double> p(alphabet_size_, 1.0 / static_cast<double>(alphabet_size_));
    const std::size_t keep = std::min<std::size_t>(history.size(), order_ - 1);
    History h;
    h.reserve(keep);
    std::vector<double> c(alphabet_size_);
    for (std::size_t k = 0; k <= keep; ++k) {
      h.assign(history.end() - k, history.end());
      const Stats* s = find(h);
      if (!s || s->total == 0) continue;
      std::fill(c.begin(), c.end(), 0.0);
      for (const auto& [w, n] : s->counts) c[static_cast<std::size_t>(w)] = static_cast<double>(n);
      const double t = static_cast<double>(s->types());
      const double denom = static_cast<double>(s->total) + t;
      for (std::size_t w = 0; w < alphabet_size_; ++w) p[w] = (c[w] + t * p[w]) / denom;
    }
    return p;
  }

 private:
  int order_ = 1;
  std::size_t alphabet_size_ = 1;
  Table table_;
};

}  // namespace charpred
