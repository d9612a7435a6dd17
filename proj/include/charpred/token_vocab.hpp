#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "charpred/error.hpp"
#include "charpred/symbol_set.hpp"
#include "json.hpp"

namespace charpred {

using TokenId = std::int32_t;

struct Token {
  TokenId id = 0;
  std::string text;
  bool special = false;
};

struct ContinuingMatch {
  TokenId id;
  std::size_t new_pos;
  bool operator==(const ContinuingMatch&) const = default;
};

struct CompletingMatch {
  TokenId id;
  char next_char;
  bool operator==(const CompletingMatch&) const = default;
};

struct Matches {
  std::vector<ContinuingMatch> continuing;
  std::vector<CompletingMatch> completing;
};

namespace detail {

// Byte trie whose subtrees map onto contiguous ranges of a DFS-ordered id
// array, so "every token below this node" is a slice.
class SurfaceTrie {
 public:
  struct Node {
    std::vector<std::pair<char, std::uint32_t>> children;  // sorted by char
    std::vector<TokenId> terminal;
    std::uint32_t begin = 0, end = 0;
  };

  SurfaceTrie() : nodes_(1) {}

  void insert(std::string_view key, TokenId id) {
    std::uint32_t cur = 0;
    for (char c : key) {
      auto& ch = nodes_[cur].children;
      auto it = std::lower_bound(
          ch.begin(), ch.end(), c,
          [](const auto& p, char k) { return p.first < k; });
      if (it != ch.end() && it->first == c) {
        cur = it->second;
      } else {
        auto next = static_cast<std::uint32_t>(nodes_.size());
        ch.insert(it, {c, next});
        nodes_.emplace_back();
        cur = next;
      }
    }
    nodes_[cur].terminal.push_back(id);
  }

  // Assigns subtree ranges; call once after all inserts.
  void finalize() {
    order_.clear();
    std::vector<std::pair<std::uint32_t, bool>> stack{{0, false}};
    while (!stack.empty()) {
      auto [n, done] = stack.back();
      stack.pop_back();
      if (done) {
        nodes_[n].end = static_cast<std::uint32_t>(order_.size());
        continue;
      }
      auto& node = nodes_[n];
      std::sort(node.terminal.begin(), node.terminal.end());
      node.begin = static_cast<std::uint32_t>(order_.size());
      order_.insert(order_.end(), node.terminal.begin(), node.terminal.end());
      stack.push_back({n, true});
      for (auto it = node.children.rbegin(); it != node.children.rend(); ++it)
        stack.push_back({it->second, false});
    }
  }

  std::optional<std::uint32_t> child(std::uint32_t n, char c) const {
    const auto& ch = nodes_[n].children;
    auto it = std::lower_bound(
        ch.begin(), ch.end(), c,
        [](const auto& p, char k) { return p.first < k; });
    if (it == ch.end() || it->first != c) return std::nullopt;
    return it->second;
  }

  const Node& node(std::uint32_t n) const { return nodes_[n]; }
  std::span<const TokenId> subtree(std::uint32_t n) const {
    const auto& node = nodes_[n];
    return {order_.data() + node.begin, node.end - node.begin};
  }

 private:
  std::vector<Node> nodes_;
  std::vector<TokenId> order_;
};

// Line number (1-based) of every object that opens at nesting depth 3,
// i.e. the records of the top-level "tokens" array.
inline std::vector<std::size_t> record_lines(std::string_view text) {
  std::vector<std::size_t> lines;
  std::size_t line = 1;
  int depth = 0;
  bool in_string = false, escaped = false;
  for (char c : text) {
    if (c == '\n') ++line;
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '{':
      case '[':
        ++depth;
        if (c == '{' && depth == 3) lines.push_back(line);
        break;
      case '}':
      case ']': --depth; break;
      default: break;
    }
  }
  return lines;
}

}  // namespace detail

/// Subword vocabulary with a case-folded prefix trie for candidate matching
/// and a case-sensitive one for the fallback greedy tokenizer. Immutable
/// after construction.
class TokenVocab {
 public:
  TokenVocab() = default;

  TokenVocab(std::vector<Token> tokens, TokenId bos_id)
      : tokens_(std::move(tokens)), bos_id_(bos_id) {
    build(nullptr);
  }

  static TokenVocab from_json(const nlohmann::json& j,
                              const std::vector<std::size_t>* lines = nullptr) {
    auto where = [&](std::size_t i) {
      std::string s = "token record " + std::to_string(i);
      if (lines && i < lines->size())
        s += " (line " + std::to_string((*lines)[i]) + ")";
      return s;
    };
    if (!j.is_object()) throw LoadError("vocab: top level must be an object");
    if (j.value("version", 0) != 1)
      throw LoadError("vocab: unsupported or missing version");
    if (!j.contains("bos_id") || !j["bos_id"].is_number_integer())
      throw LoadError("vocab: missing bos_id");
    if (!j.contains("tokens") || !j["tokens"].is_array())
      throw LoadError("vocab: missing tokens array");

    TokenVocab v;
    v.bos_id_ = j["bos_id"].get<TokenId>();
    const auto& arr = j["tokens"];
    v.tokens_.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& r = arr[i];
      if (!r.is_object() || !r.contains("id") || !r["id"].is_number_integer() ||
          !r.contains("text") || !r["text"].is_string())
        throw LoadError("vocab: malformed " + where(i));
      if (r.contains("special") && !r["special"].is_boolean())
        throw LoadError("vocab: malformed " + where(i));
      Token t{r["id"].get<TokenId>(), r["text"].get<std::string>(),
              r.value("special", false)};
      v.tokens_.push_back(std::move(t));
    }
    v.build(lines);
    return v;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : tokens_)
      arr.push_back({{"id", t.id}, {"text", t.text}, {"special", t.special}});
    return {{"version", 1}, {"bos_id", bos_id_}, {"tokens", std::move(arr)}};
  }

  const std::vector<Token>& tokens() const { return tokens_; }
  TokenId bos_id() const { return bos_id_; }
  std::size_t size() const { return tokens_.size(); }
  /// One past the largest id; dense per-id arrays use this length.
  std::size_t id_bound() const { return slot_.size(); }
  std::size_t matchable_count() const { return matchable_.size(); }
  /// Non-special ids in ascending order.
  const std::vector<TokenId>& matchable_ids() const { return matchable_; }
  /// True when every non-special surface is exactly one character.
  bool character_level() const { return character_level_; }
  /// match_candidates(s, s.size()).completing for any s, precomputed.
  const std::vector<CompletingMatch>& all_completions() const { return all_completions_; }

  bool contains(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < slot_.size() &&
           slot_[id] >= 0;
  }
  const Token& token(TokenId id) const {
    if (!contains(id))
      throw ArgumentError("unknown token id " + std::to_string(id));
    return tokens_[slot_[id]];
  }
  bool is_special(TokenId id) const { return token(id).special; }
  const std::string& surface(TokenId id) const { return token(id).text; }

  std::string detokenize(std::span<const TokenId> ids) const {
    std::string out;
    for (auto id : ids) out += surface(id);
    return out;
  }

  /// Case-sensitive longest-prefix-match segmentation.
  std::vector<TokenId> greedy_tokenize(std::string_view text) const {
    std::vector<TokenId> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::uint32_t n = 0;
      std::optional<TokenId> best;
      std::size_t best_len = 0;
      for (std::size_t i = pos; i < text.size(); ++i) {
        auto c = exact_.child(n, text[i]);
        if (!c) break;
        n = *c;
        if (!exact_.node(n).terminal.empty()) {
          best = exact_.node(n).terminal.front();
          best_len = i + 1 - pos;
        }
      }
      if (!best)
        throw TokenizeError("cannot tokenize character at offset " +
                                std::to_string(pos),
                            pos);
      out.push_back(*best);
      pos += best_len;
    }
    return out;
  }

  /// Tokens that match suffix starting at from_pos, compared case-folded.
  /// Continuing tokens end inside the suffix; completing tokens run past its
  /// end and report the folded first excess character.
  Matches match_candidates(std::string_view suffix, std::size_t from_pos) const {
    if (from_pos > suffix.size())
      throw ArgumentError("match_candidates: from_pos past end of suffix");
    Matches m;
    std::uint32_t n = 0;
    for (std::size_t i = from_pos; i < suffix.size(); ++i) {
      auto c = folded_.child(n, fold_key(suffix[i]));
      if (!c) return m;
      n = *c;
      for (auto id : folded_.node(n).terminal) m.continuing.push_back({id, i + 1});
    }
    for (const auto& [c, child] : folded_.node(n).children) {
      auto f = fold(c);
      if (!f) continue;
      for (auto id : folded_.subtree(child)) m.completing.push_back({id, *f});
    }
    return m;
  }

 private:
  void build(const std::vector<std::size_t>* lines) {
    auto where = [&](std::size_t i) {
      std::string s = "token record " + std::to_string(i);
      if (lines && i < lines->size())
        s += " (line " + std::to_string((*lines)[i]) + ")";
      return s;
    };
    TokenId max_id = -1;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].id < 0)
        throw LoadError("vocab: negative token id in " + where(i));
      max_id = std::max(max_id, tokens_[i].id);
    }
    slot_.assign(static_cast<std::size_t>(max_id + 1), -1);
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      auto& t = tokens_[i];
      if (slot_[t.id] >= 0)
        throw LoadError("duplicate token id " + std::to_string(t.id) + " at " +
                        where(i));
      slot_[t.id] = static_cast<std::int64_t>(i);
      if (t.id == bos_id_) t.special = true;
      if (t.special) continue;
      if (t.text.empty())
        throw LoadError("vocab: empty surface for non-special token id " +
                        std::to_string(t.id) + " at " + where(i));
      if (t.text.find(' ', 1) != std::string::npos)
        throw LoadError("vocab: interior space in token id " +
                        std::to_string(t.id) + " at " + where(i));
    }
    if (!contains(bos_id_))
      throw LoadError("vocab: bos_id " + std::to_string(bos_id_) +
                      " is not a token");

    matchable_.clear();
    character_level_ = true;
    for (const auto& t : tokens_) {
      if (t.special) continue;
      matchable_.push_back(t.id);
      folded_.insert(fold_key(t.text), t.id);
      exact_.insert(t.text, t.id);
      if (t.text.size() != 1) character_level_ = false;
    }
    std::sort(matchable_.begin(), matchable_.end());
    if (matchable_.empty()) character_level_ = false;
    folded_.finalize();
    exact_.finalize();
    all_completions_ = match_candidates("", 0).completing;
  }

  std::vector<Token> tokens_;
  TokenId bos_id_ = 0;
  std::vector<std::int64_t> slot_;
  std::vector<TokenId> matchable_;
  bool character_level_ = false;
  std::vector<CompletingMatch> all_completions_;
  detail::SurfaceTrie folded_;
  detail::SurfaceTrie exact_;
};

inline TokenVocab load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("vocab: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError("vocab: " + path + ": " + e.what());
  }
  auto lines = detail::record_lines(text);
  return TokenVocab::from_json(j, &lines);
}

}  // namespace charpred
