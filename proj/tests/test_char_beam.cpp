#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "charpred/char_beam.hpp"
#include "test_support.hpp"

using namespace charpred;
using charpred::testing::BigramTableBackend;
using charpred::testing::FixedDistBackend;
using charpred::testing::v1;

namespace {

// Letters, space-initial letters and a few words.
TokenVocab word_vocab() {
  std::vector<Token> toks{{0, "</s>", true}};
  TokenId id = 1;
  for (char c = 'a'; c <= 'z'; ++c) {
    toks.push_back({id++, std::string(1, c), false});
    toks.push_back({id++, std::string(" ") + c, false});
  }
  for (const char* w : {"hello", " hello", " wor", "wor", "ld", " world", "I", " I", "'"})
    toks.push_back({id++, w, false});
  toks.push_back({id++, " ", false});
  return TokenVocab(std::move(toks), 0);
}

// Forwards to an inner backend and records every batch context.
class RecordingBackend final : public LanguageModel {
 public:
  explicit RecordingBackend(LanguageModel& inner, bool tokenize = false)
      : inner_(inner), tokenize_(tokenize) {}
  const TokenVocab& vocab() const override { return inner_.vocab(); }
  std::string name() const override { return "recording"; }
  BackendCapabilities capabilities() const override { return {tokenize_}; }
  std::vector<TokenId> tokenize(std::string_view text) override {
    ++tokenize_calls;
    return vocab().greedy_tokenize(text);
  }
  void next_token_logprobs(LogProbBatch& b) override {
    std::vector<std::vector<TokenId>> ctxs;
    for (const auto& it : b.items) ctxs.push_back(it.ctx);
    rounds.push_back(std::move(ctxs));
    inner_.next_token_logprobs(b);
  }
  std::vector<std::vector<std::vector<TokenId>>> rounds;
  int tokenize_calls = 0;

 private:
  LanguageModel& inner_;
  bool tokenize_;
};

SearchParams exhaustive() {
  SearchParams p;
  p.beam_width = std::size_t{1} << 40;
  p.max_completed = std::size_t{1} << 31;
  return p;
}

double sum(const SymbolProbs& p) {
  double s = 0;
  for (double x : p) s += x;
  return s;
}

}  // namespace

TEST(PrepareContext, SplitsAtLastSpace) {
  std::mt19937_64 rng(1);
  auto be = BigramTableBackend::random(word_vocab(), rng);
  const auto& v = be.vocab();
  auto pc = prepare_context(be, "hello wor", {});
  EXPECT_EQ(pc.volatile_suffix, " wor");
  EXPECT_EQ(pc.stable_tokens, (std::vector<TokenId>{0, v.greedy_tokenize("hello")[0]}));
  EXPECT_EQ(v.detokenize(std::span(pc.stable_tokens).subspan(pc.head_length)) + pc.volatile_suffix,
            "hello wor");

  pc = prepare_context(be, "hello ", {});
  EXPECT_EQ(pc.volatile_suffix, " ");
  EXPECT_EQ(pc.stable_tokens.size(), 2u);

  pc = prepare_context(be, "wor", {});
  EXPECT_EQ(pc.volatile_suffix, "wor");
  EXPECT_EQ(pc.stable_tokens, (std::vector<TokenId>{0}));

  pc = prepare_context(be, "", {});
  EXPECT_EQ(pc.volatile_suffix, "");
  EXPECT_EQ(pc.stable_tokens, (std::vector<TokenId>{0}));
}

TEST(PrepareContext, RejectsUnfoldableWithOffset) {
  std::mt19937_64 rng(1);
  auto be = BigramTableBackend::random(word_vocab(), rng);
  try {
    prepare_context(be, "ab1c", {});
    FAIL();
  } catch (const ContextError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }
}

TEST(PrepareContext, CasingAndPrefix) {
  std::mt19937_64 rng(1);
  auto be = BigramTableBackend::random(word_vocab(), rng);
  const auto& v = be.vocab();
  SearchParams p;
  p.casing = CasingMode::kSimple;
  auto pc = prepare_context(be, "i hello wor", p);
  EXPECT_EQ(v.detokenize(std::span(pc.stable_tokens).subspan(1)), "I hello");

  p.casing = CasingMode::kNone;
  pc = prepare_context(be, "I wor", p);
  EXPECT_EQ(v.detokenize(std::span(pc.stable_tokens).subspan(1)), "i");

  p.casing = CasingMode::kAsGiven;
  p.context_prefix = {3, 5, 7};
  pc = prepare_context(be, "x wor", p);
  EXPECT_EQ(pc.head_length, 3u);
  EXPECT_EQ(std::vector<TokenId>(pc.stable_tokens.begin(), pc.stable_tokens.begin() + 3),
            (std::vector<TokenId>{3, 5, 7}));
  p.context_prefix = {9999};
  EXPECT_THROW(prepare_context(be, "x", p), ArgumentError);
}

TEST(PrepareContext, UsesAuthoritativeTokenizerWhenOffered) {
  std::mt19937_64 rng(1);
  auto inner = BigramTableBackend::random(word_vocab(), rng);
  RecordingBackend with(inner, true), without(inner, false);
  prepare_context(with, "hello wor", {});
  prepare_context(without, "hello wor", {});
  EXPECT_EQ(with.tokenize_calls, 1);
  EXPECT_EQ(without.tokenize_calls, 0);
}

TEST(PredictNextChar, CharacterVocabIsOneRound) {
  FixedDistBackend be(charpred::testing::char_vocab("ab "), {0.0, 0.5, 0.3, 0.2});
  auto d = predict_next_char(be, "ab");
  EXPECT_NEAR(d.prob('a'), 0.5, 1e-15);
  EXPECT_NEAR(d.prob('b'), 0.3, 1e-15);
  EXPECT_NEAR(d.prob(' '), 0.2, 1e-15);
  EXPECT_EQ(d.backend_queries, 1u);
  EXPECT_EQ(be.calls(), 1u);
}

TEST(PredictNextChar, V1BigramMatchesBruteForce) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto be = BigramTableBackend::random(v1(), rng);
    for (const std::string ctx : {" a", "", "a", "ab", " ab", "ab a", "b b", " "}) {
      auto want = charpred::testing::oracle_for_context(be, ctx);
      auto got = predict_next_char(be, ctx, exhaustive());
      for (std::size_t i = 0; i < kNumSymbols; ++i)
        ASSERT_NEAR(got.probs[i], want[i], 1e-9) << "ctx='" << ctx << "' sym=" << symbol_at(i);
    }
  }
}

TEST(PredictNextChar, DefaultsFromSearchParams) {
  SearchParams p;
  EXPECT_EQ(p.beam_width, 8u);
  EXPECT_EQ(p.max_completed, 32768u);
  EXPECT_EQ(kDefaultBeamWidth, 8u);
  EXPECT_EQ(kDefaultMaxCompleted, 32768u);
}

TEST(PredictNextChar, InvalidParams) {
  std::mt19937_64 rng(5);
  auto be = BigramTableBackend::random(v1(), rng);
  SearchParams p;
  p.beam_width = 0;
  EXPECT_THROW(predict_next_char(be, "a", p), ArgumentError);
  p = {};
  p.max_completed = 0;
  EXPECT_THROW(predict_next_char(be, "a", p), ArgumentError);
}

TEST(PredictNextChar, NoMassWhenSuffixCannotBeRegenerated) {
  FixedDistBackend be(TokenVocab({{0, "<s>", true}, {1, "a", false}, {2, "bb", false}}, 0),
                      {0.0, 0.5, 0.5});
  EXPECT_THROW(predict_next_char(be, "x"), NoMassError);
  // "b" can only be regenerated by "bb", which overshoots with 'b'.
  auto d = predict_next_char(be, "b");
  EXPECT_NEAR(d.prob('b'), 1.0, 1e-15);
  FixedDistBackend zero(TokenVocab({{0, "<s>", true}, {1, "ab", false}}, 0), {0.0, 0.0});
  EXPECT_THROW(predict_next_char(zero, "a"), NoMassError);
}

TEST(PredictNextChar, TieBreakPrefersSmallerIdSequence) {
  TokenVocab v({{0, "<s>", true}, {1, "A", false}, {2, "a", false}, {3, "b", false}, {4, "ab", false}}, 0);
  FixedDistBackend inner(v, {0.0, 0.25, 0.25, 0.25, 0.25});
  RecordingBackend be(inner);
  SearchParams p;
  p.beam_width = 1;
  predict_next_char(be, "a", p);
  ASSERT_GE(be.rounds.size(), 2u);
  ASSERT_EQ(be.rounds[1].size(), 1u);
  EXPECT_EQ(be.rounds[1][0], (std::vector<TokenId>{0, 1}));
}

TEST(PredictNextChar, PropertiesOnRandomInstances) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    auto be = BigramTableBackend::random(charpred::testing::random_vocab(rng), rng);
    const auto ctx = charpred::testing::random_context(rng);
    SearchParams p;
    p.beam_width = 1 + rng() % 6;
    p.max_completed = 1 + rng() % 200;
    CharDistribution d;
    try {
      d = predict_next_char(be, ctx, p);
    } catch (const NoMassError&) {
      continue;
    }
    EXPECT_NEAR(sum(d.probs), 1.0, 1e-9);
    EXPECT_LE(d.backend_queries, d.rounds);
    // Equal strings give identical output.
    auto d2 = predict_next_char(be, std::string(ctx), p);
    EXPECT_EQ(d.probs, d2.probs);
    // Lower max_completed never costs more queries.
    std::size_t prev = d.backend_queries;
    for (std::size_t mc = p.max_completed; mc >= 1; mc /= 2) {
      SearchParams q = p;
      q.max_completed = mc;
      try {
        auto dq = predict_next_char(be, ctx, q);
        EXPECT_LE(dq.backend_queries, prev);
        prev = dq.backend_queries;
      } catch (const NoMassError&) {
      }
      if (mc == 1) break;
    }
  }
}

TEST(PredictNextChar, CompletedBudgetBound) {
  // Every round can finish at most beam_width * |V'| completions past the cap.
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    auto be = BigramTableBackend::random(charpred::testing::random_vocab(rng), rng);
    SearchParams p;
    p.beam_width = 4;
    p.max_completed = 10;
    try {
      auto d = predict_next_char(be, charpred::testing::random_context(rng), p);
      EXPECT_LE(d.completed_count, p.max_completed + p.beam_width * be.vocab().matchable_count());
    } catch (const NoMassError&) {
    }
  }
}

TEST(PredictNextChar, DegenerateIdentity) {
  std::mt19937_64 rng(8);
  auto vocab = charpred::testing::char_vocab("abcdefghijklmnopqrstuvwxyz 'A,1");
  for (int trial = 0; trial < 20; ++trial) {
    auto be = BigramTableBackend::random(vocab, rng);
    const auto ctx = charpred::testing::random_context(rng, 8);
    auto d = predict_next_char(be, ctx);
    const TokenId last = ctx.empty() ? 0 : vocab.greedy_tokenize(ctx).back();
    SymbolProbs want{};
    double z = 0;
    for (auto id : vocab.matchable_ids()) {
      if (auto i = folded_index(vocab.surface(id)[0])) {
        want[*i] += be.prob(last, id);
        z += be.prob(last, id);
      }
    }
    for (std::size_t i = 0; i < kNumSymbols; ++i) EXPECT_NEAR(d.probs[i], want[i] / z, 1e-12);
    EXPECT_EQ(d.backend_queries, 1u);
  }
}

TEST(SequenceCharLogprobs, UniformCharacterBackend) {
  auto vocab = charpred::testing::char_vocab(std::string(kSymbols));
  std::vector<double> p(vocab.id_bound(), 1.0 / 28.0);
  p[0] = 0.0;
  FixedDistBackend be(vocab, p);
  auto r = sequence_char_logprobs(be, "ab");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].symbol, 'a');
  EXPECT_NEAR(r[0].logprob, std::log(1.0 / 28.0), 1e-12);
  EXPECT_EQ(r[1].symbol, 'b');
  EXPECT_NEAR(r[1].logprob, std::log(1.0 / 28.0), 1e-12);
  EXPECT_THROW(sequence_char_logprobs(be, ""), ArgumentError);
}

TEST(SequenceCharLogprobs, V1BigramMatchesOraclePerPosition) {
  std::mt19937_64 rng(12);
  auto be = BigramTableBackend::random(v1(), rng);
  for (const std::string s : {"ab", "ab ab", "a ba"}) {
    auto r = sequence_char_logprobs(be, s, exhaustive());
    ASSERT_EQ(r.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto want = charpred::testing::oracle_for_context(be, s.substr(0, i));
      EXPECT_NEAR(r[i].logprob, std::log(want[*symbol_index(s[i])]), 1e-9);
    }
  }
}

TEST(SequenceCharLogprobs, ZeroProbabilityIsNegInf) {
  FixedDistBackend be(TokenVocab({{0, "<s>", true}, {1, "a", false}, {2, "b", false}}, 0), {0.0, 1.0, 0.0});
  auto r = sequence_char_logprobs(be, "ab");
  EXPECT_NEAR(r[0].logprob, 0.0, 1e-15);
  EXPECT_EQ(r[1].logprob, kNegInf);
  EXPECT_FALSE(r[1].no_mass);
}
