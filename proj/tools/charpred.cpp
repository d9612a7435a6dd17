// charpred: command-line front end for the character prediction engine.
//
// Exit status: 0 success, 1 usage error, 2 data or backend error.
// CHARPRED_CONFIG names a default INI/TOML config file (sections per
// subcommand, e.g. [eval] floor = 1e-9).

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "charpred/charpred.hpp"

using namespace charpred;
using nlohmann::json;

namespace {

struct BackendOpts {
  std::string model;
  std::string remote_cmd;
  std::string remote;
  int timeout_ms = 30000;
  std::string char_model;
  double lambda = 0.5;
  std::size_t beam = kDefaultBeamWidth;
  std::size_t max_completed = kDefaultMaxCompleted;
  std::string context_prefix;
};

void add_backend_options(CLI::App* cmd, BackendOpts& o) {
  auto* m = cmd->add_option("--model", o.model, "Built-in token n-gram model (JSON)")
                ->check(CLI::ExistingFile);
  auto* rc = cmd->add_option("--remote-cmd", o.remote_cmd, "Spawn a protocol server with this shell command");
  auto* r = cmd->add_option("--remote", o.remote, "Connect to a protocol server at host:port");
  m->excludes(rc)->excludes(r);
  rc->excludes(r);
  cmd->add_option("--timeout-ms", o.timeout_ms, "Remote reply timeout")->check(CLI::PositiveNumber);
  cmd->add_option("--char-model", o.char_model, "Character n-gram model (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--lambda", o.lambda, "Weight of the token model when mixing with --char-model")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--beam", o.beam, "Beam width")->check(CLI::PositiveNumber);
  cmd->add_option("--max-completed", o.max_completed, "Stop after this many completed tokens")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--context-prefix", o.context_prefix,
                  "Text tokenized and used in place of BOS as conditioning head");
}

std::unique_ptr<LanguageModel> open_token_backend(const BackendOpts& o) {
  const auto timeout = std::chrono::milliseconds(o.timeout_ms);
  if (!o.model.empty()) return load_token_ngram(o.model);
  if (!o.remote_cmd.empty())
    return std::make_unique<RemoteBackend>(std::make_unique<ChildProcessChannel>(o.remote_cmd, timeout));
  if (!o.remote.empty()) return std::make_unique<RemoteBackend>(TcpChannel::from_address(o.remote, timeout));
  return nullptr;
}

SearchParams search_params(LanguageModel& be, const BackendOpts& o) {
  SearchParams p;
  p.beam_width = o.beam;
  p.max_completed = o.max_completed;
  if (!o.context_prefix.empty()) p.context_prefix = detail::tokenize_stable(be, o.context_prefix);
  return p;
}

/// Owns whatever a CLI invocation predicts with: token backend, char model,
/// or both mixed.
class Predictor final : public CharSource {
 public:
  Predictor(const BackendOpts& o, CasingMode beam_casing) {
    token_ = open_token_backend(o);
    if (!o.char_model.empty()) char_model_ = load_char_ngram(o.char_model);
    if (!token_ && !char_model_) throw ArgumentError("need --model, --remote-cmd, --remote or --char-model");
    if (token_) {
      params_ = search_params(*token_, o);
      params_.casing = beam_casing;
      beam_ = std::make_unique<BeamSource>(*token_, params_);
    }
    if (char_model_) ngram_ = std::make_unique<NGramSource>(*char_model_);
    if (beam_ && ngram_) mix_ = std::make_unique<MixtureSource>(*beam_, *ngram_, o.lambda);
  }

  SymbolProbs predict(std::string_view prefix) override { return active().predict(prefix); }
  std::string name() const override { return active().name(); }
  std::string params() const override { return active().params(); }

  /// Full search diagnostics; only meaningful with a token backend alone.
  std::optional<CharDistribution> search(std::string_view context) {
    if (!token_ || mix_) return std::nullopt;
    return predict_next_char(*token_, context, params_);
  }

 private:
  CharSource& active() const {
    if (mix_) return *mix_;
    if (beam_) return *beam_;
    return *ngram_;
  }

  std::unique_ptr<LanguageModel> token_;
  std::optional<CharNGramModel> char_model_;
  SearchParams params_;
  std::unique_ptr<BeamSource> beam_;
  std::unique_ptr<NGramSource> ngram_;
  std::unique_ptr<MixtureSource> mix_;
};

std::vector<std::pair<char, double>> ranked(const SymbolProbs& p) {
  std::vector<std::pair<char, double>> out;
  for (std::size_t i = 0; i < kNumSymbols; ++i) out.emplace_back(symbol_at(i), p[i]);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> lines;
  std::ifstream file;
  std::istream* in = &std::cin;
  if (path != "-") {
    file.open(path);
    if (!file) throw LoadError("cannot open " + path);
    in = &file;
  }
  std::string line;
  while (std::getline(*in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_.open(path);
      if (!file_) throw LoadError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

void write_lines(const std::vector<std::string>& lines, const std::string& path) {
  Output out(path);
  for (const auto& l : lines) out.stream() << l << '\n';
}

std::string fmt(double x, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// ---- subcommands -----------------------------------------------------------

int cmd_predict(const BackendOpts& bo, const std::string& context, const std::string& casing, bool as_json) {
  Predictor pred(bo, parse_casing_mode(casing));
  auto diag = pred.search(context);
  const SymbolProbs probs = diag ? diag->probs : pred.predict(apply_casing(context, parse_casing_mode(casing)));
  const auto rows = ranked(probs);
  if (as_json) {
    json j{{"command", "predict"}, {"context", context}, {"model", pred.name()}, {"params", pred.params()}};
    j["distribution"] = json::array();
    for (auto& [c, p] : rows) j["distribution"].push_back({{"symbol", std::string(1, c)}, {"prob", p}});
    if (diag) {
      j["completed"] = diag->completed_count;
      j["backend_queries"] = diag->backend_queries;
      j["rounds"] = diag->rounds;
      j["mass_found"] = diag->mass_found;
      j["elapsed_ms"] = diag->elapsed_ms;
    }
    std::cout << j.dump() << '\n';
    return 0;
  }
  for (auto& [c, p] : rows) std::cout << symbol_name(c) << '\t' << fmt(p, "%.9f") << '\n';
  if (diag)
    std::cerr << "completed=" << diag->completed_count << " queries=" << diag->backend_queries
              << " rounds=" << diag->rounds << " ms=" << fmt(diag->elapsed_ms, "%.2f") << '\n';
  return 0;
}

// Reads typed text line by line; after every character prints the top-k
// next symbols. ":reset" clears the context, ":quit" exits.
int cmd_demo(const BackendOpts& bo, const std::string& casing, std::size_t top, bool as_json) {
  Predictor pred(bo, parse_casing_mode(casing));
  const auto mode = parse_casing_mode(casing);
  std::string context;
  auto show = [&] {
    const auto rows = ranked(pred.predict(apply_casing(context, mode)));
    const std::size_t k = std::min(top, rows.size());
    if (as_json) {
      json j{{"context", context}, {"top", json::array()}};
      for (std::size_t i = 0; i < k; ++i)
        j["top"].push_back({{"symbol", std::string(1, rows[i].first)}, {"prob", rows[i].second}});
      std::cout << j.dump() << std::endl;
      return;
    }
    std::cout << '"' << context << "\" ->";
    for (std::size_t i = 0; i < k; ++i)
      std::cout << ' ' << symbol_name(rows[i].first) << ' ' << fmt(rows[i].second, "%.3f");
    std::cout << std::endl;
  };
  show();
  std::string line;
  while (std::getline(std::cin, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == ":quit") break;
    if (line == ":reset") {
      context.clear();
      show();
      continue;
    }
    for (char c : line) {
      context.push_back(c);
      show();
    }
  }
  return 0;
}

struct EvalArgs {
  std::string corpus;
  std::string casing = "none";
  double floor = 1e-10;
  std::size_t workers = 1;
  std::string format = "tsv";
  std::string rows_out;
  std::string dump_probs;
  bool uniform = false;
  bool as_json = false;
};

int cmd_eval(const BackendOpts& bo, const EvalArgs& a) {
  EvalOptions opt;
  opt.casing = parse_casing_mode(a.casing);
  opt.floor = a.floor;
  opt.keep_rows = !a.rows_out.empty();
  opt.keep_char_probs = !a.dump_probs.empty();
  const auto corpus = read_lines(a.corpus);

  EvalReport rep;
  if (a.uniform) {
    UniformSource u;
    rep = evaluate_perplexity(u, corpus, opt);
  } else {
    // Each worker gets its own backend instance (and remote connection).
    auto factory = [&]() -> std::unique_ptr<CharSource> {
      return std::make_unique<Predictor>(bo, CasingMode::kAsGiven);
    };
    rep = evaluate_perplexity_parallel(factory, corpus, opt, a.workers);
  }

  if (!a.rows_out.empty()) {
    Output out(a.rows_out);
    for (const auto& r : rep.rows)
      out.stream() << r.text << '\t' << r.chars << '\t' << fmt(r.logprob_sum, "%.6f") << '\t' << r.floored
                   << '\n';
  }
  if (!a.dump_probs.empty()) {
    Output out(a.dump_probs);
    for (double p : rep.char_probs) out.stream() << fmt(p, "%.17g") << '\n';
  }
  if (a.as_json) {
    json j{{"command", "eval"},
           {"model", rep.model},
           {"params", rep.params},
           {"casing", std::string(to_string(opt.casing))},
           {"perplexity", rep.per_char_perplexity},
           {"logprob_sum", rep.logprob_sum},
           {"N", rep.char_count},
           {"sentences", rep.sentence_count},
           {"skipped", rep.skipped_sentences},
           {"floored", rep.floored_events},
           {"mean_ms", rep.mean_ms},
           {"median_ms", rep.median_ms},
           {"p95_ms", rep.p95_ms}};
    std::cout << j.dump() << '\n';
  } else {
    std::cout << emit_report(rep, a.format == "md" ? ReportFormat::kMarkdown : ReportFormat::kTsv);
  }
  return 0;
}

int cmd_train_char(const std::string& corpus, int order, const std::string& out, bool as_json) {
  std::vector<std::string> sents;
  for (const auto& l : read_lines(corpus)) sents.push_back(normalize_text(l));
  auto m = train_char_ngram(sents, order);
  save_char_ngram(m, out);
  if (as_json) std::cout << json{{"command", "train-char-ngram"}, {"order", order}, {"out", out}}.dump() << '\n';
  return 0;
}

int cmd_train_token(const std::string& corpus, const std::string& vocab_path, int order, bool lowercase,
                    const std::string& out, bool as_json) {
  auto vocab = load_vocab(vocab_path);
  std::vector<std::string> sents;
  for (const auto& l : read_lines(corpus)) sents.push_back(normalize_text(l, !lowercase));
  auto m = train_token_ngram(sents, std::move(vocab), order);
  std::ofstream f(out);
  if (!f) throw LoadError("cannot write " + out);
  f << m->to_json().dump() << '\n';
  if (as_json) std::cout << json{{"command", "train-token-ngram"}, {"order", order}, {"out", out}}.dump() << '\n';
  return 0;
}

int cmd_prep_filter(const std::string& in, const std::string& out, const std::string& wordlist, double max_oov,
                    bool dedup, const std::string& rejects, bool as_json) {
  FilterConfig cfg;
  cfg.max_oov_fraction = max_oov;
  if (!wordlist.empty()) {
    std::ifstream w(wordlist);
    if (!w) throw LoadError("cannot open wordlist " + wordlist);
    cfg.wordlist = load_wordlist(w);
  }
  std::vector<std::string> lines = read_lines(in);
  const std::size_t read = lines.size();
  if (dedup) lines = dedup_stream(lines);
  std::vector<std::string> kept, rej;
  std::map<std::string, std::size_t> counts;
  for (auto& l : lines) {
    auto r = filter_sentence(l, cfg);
    ++counts[std::string(to_string(r.reason))];
    if (r.keep()) kept.push_back(l);
    else rej.push_back(std::string(to_string(r.reason)) + '\t' + l);
  }
  write_lines(kept, out);
  if (!rejects.empty()) write_lines(rej, rejects);
  json j{{"command", "prep-filter"}, {"read", read}, {"after_dedup", lines.size()}, {"kept", kept.size()}};
  for (auto& [k, v] : counts) j["reasons"][k] = v;
  (as_json ? std::cout : std::cerr) << j.dump() << '\n';
  return 0;
}

int cmd_prep_select(const std::string& scores, double threshold, const std::string& out, bool as_json) {
  std::vector<ScoredSentence> rows;
  std::size_t n = 0;
  for (const auto& l : read_lines(scores)) {
    ++n;
    if (l.empty()) continue;
    rows.push_back(parse_score_row(l, n));
  }
  auto kept = select_by_threshold(rows, threshold);
  std::vector<std::string> text;
  for (auto& k : kept) text.push_back(k.text);
  write_lines(text, out);
  json j{{"command", "prep-select"}, {"threshold", threshold}, {"read", rows.size()}, {"kept", kept.size()}};
  (as_json ? std::cout : std::cerr) << j.dump() << '\n';
  return 0;
}

int cmd_prep_split(const std::string& in, const std::string& prefix, std::uint64_t seed, bool dedup, bool as_json) {
  auto lines = read_lines(in);
  if (dedup) lines = dedup_stream(lines);
  auto s = split_corpus(lines, seed);
  write_lines(s.train, prefix + ".train");
  write_lines(s.dev, prefix + ".dev");
  write_lines(s.test, prefix + ".test");
  json j{{"command", "prep-split"},
         {"seed", seed},
         {"train", s.train.size()},
         {"dev", s.dev.size()},
         {"test", s.test.size()}};
  (as_json ? std::cout : std::cerr) << j.dump() << '\n';
  return 0;
}

int cmd_prep_stats(const std::string& in, bool as_json) {
  auto st = corpus_stats(read_lines(in));
  if (as_json) {
    std::cout << json{{"command", "prep-stats"},
                      {"sentences", st.sentences},
                      {"words_per_sentence", st.words_per_sentence},
                      {"chars_per_sentence", st.chars_per_sentence},
                      {"questions", st.questions},
                      {"exclamations", st.exclamations},
                      {"statements", st.statements}}
                     .dump()
              << '\n';
    return 0;
  }
  std::cout << "sentences\t" << st.sentences << '\n'
            << "words/sentence\t" << fmt(st.words_per_sentence, "%.2f") << '\n'
            << "chars/sentence\t" << fmt(st.chars_per_sentence, "%.2f") << '\n'
            << "questions\t" << fmt(100 * st.questions, "%.1f%%") << '\n'
            << "exclamations\t" << fmt(100 * st.exclamations, "%.1f%%") << '\n'
            << "statements\t" << fmt(100 * st.statements, "%.1f%%") << '\n';
  return 0;
}

double parse_prob(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw LoadError(where + ": not a number: " + s);
  }
  if (used != s.size()) throw LoadError(where + ": not a number: " + s);
  return v;
}

int cmd_fit_mix(const std::string& pairs_path, const std::string& p1_path, const std::string& p2_path,
                bool as_json) {
  std::vector<ProbPair> pairs;
  if (!pairs_path.empty()) {
    std::size_t n = 0;
    for (const auto& l : read_lines(pairs_path)) {
      ++n;
      if (l.empty()) continue;
      std::istringstream ss(l);
      std::string a, b, extra;
      if (!(ss >> a >> b) || (ss >> extra))
        throw LoadError(pairs_path + " line " + std::to_string(n) + ": expected two columns");
      const auto where = pairs_path + " line " + std::to_string(n);
      pairs.push_back({parse_prob(a, where), parse_prob(b, where)});
    }
  } else {
    auto a = read_lines(p1_path), b = read_lines(p2_path);
    std::erase(a, std::string());
    std::erase(b, std::string());
    if (a.size() != b.size())
      throw LoadError("probability files differ in length (" + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()) + ")");
    for (std::size_t i = 0; i < a.size(); ++i)
      pairs.push_back({parse_prob(a[i], p1_path), parse_prob(b[i], p2_path)});
  }
  auto w = fit_mixture_weight(pairs);
  if (as_json) {
    std::cout << json{{"command", "fit-mix"},
                      {"lambda", w.lambda},
                      {"loglik", w.fitted_loglik},
                      {"iterations", w.iterations},
                      {"pairs", pairs.size()}}
                     .dump()
              << '\n';
  } else {
    std::cout << "lambda\t" << fmt(w.lambda) << '\n'
              << "loglik\t" << fmt(w.fitted_loglik) << '\n'
              << "iterations\t" << w.iterations << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Character prediction from token-level language models"};
  app.require_subcommand(1);
  const char* cfg = std::getenv("CHARPRED_CONFIG");
  app.set_config("--config", cfg ? cfg : "", "Config file (default from CHARPRED_CONFIG)");
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable output")->configurable(false);

  const std::vector<std::string> casings{"none", "lower", "simple", "as-given", "human"};

  BackendOpts pb;
  std::string context, p_casing = "as-given";
  auto* predict = app.add_subcommand("predict", "Print the next-character distribution for a context");
  add_backend_options(predict, pb);
  predict->add_option("--context", context, "Text typed so far")->required();
  predict->add_option("--casing", p_casing, "Casing applied to the context")->check(CLI::IsMember(casings));
  predict->fallthrough();

  BackendOpts db;
  std::string d_casing = "as-given";
  std::size_t top = 5;
  auto* demo = app.add_subcommand("demo", "Interactive prediction; reads typed text from stdin");
  add_backend_options(demo, db);
  demo->add_option("--top", top, "Symbols shown per step")->check(CLI::PositiveNumber);
  demo->add_option("--casing", d_casing)->check(CLI::IsMember(casings));
  demo->fallthrough();

  BackendOpts eb;
  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Per-character perplexity over a corpus");
  add_backend_options(eval, eb);
  eval->add_option("--corpus", ea.corpus, "One sentence per line ('-' for stdin)")->required();
  eval->add_option("--casing", ea.casing, "Casing of the conditioning prefix")->check(CLI::IsMember(casings));
  eval->add_option("--floor", ea.floor, "Probability floor for zero-probability events")
      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0));
  eval->add_option("--workers", ea.workers)->check(CLI::PositiveNumber);
  eval->add_option("--format", ea.format)->check(CLI::IsMember({"tsv", "md"}));
  eval->add_option("--rows", ea.rows_out, "Write per-sentence rows here");
  eval->add_option("--dump-probs", ea.dump_probs, "Write each scored character probability here");
  eval->add_flag("--uniform", ea.uniform, "Score the uniform baseline instead of a model");
  eval->fallthrough();

  std::string tc_corpus, tc_out;
  int tc_order = 12;
  auto* tchar = app.add_subcommand("train-char-ngram", "Train a Witten-Bell character n-gram");
  tchar->add_option("--corpus", tc_corpus)->required();
  tchar->add_option("--order", tc_order)->check(CLI::Range(1, CharNGramModel::kMaxOrder));
  tchar->add_option("--out", tc_out)->required();
  tchar->fallthrough();

  std::string tt_corpus, tt_vocab, tt_out;
  int tt_order = 2;
  bool tt_lower = false;
  auto* ttok = app.add_subcommand("train-token-ngram", "Train the built-in token n-gram backend");
  ttok->add_option("--corpus", tt_corpus)->required();
  ttok->add_option("--vocab", tt_vocab, "Vocabulary JSON")->required()->check(CLI::ExistingFile);
  ttok->add_option("--order", tt_order)->check(CLI::PositiveNumber);
  ttok->add_flag("--lowercase", tt_lower, "Lowercase training text");
  ttok->add_option("--out", tt_out)->required();
  ttok->fallthrough();

  std::string pf_in = "-", pf_out = "-", pf_words, pf_rejects;
  double pf_oov = 0.20;
  bool pf_dedup = false;
  auto* pfilter = app.add_subcommand("prep-filter", "Keep well-formed sentences");
  pfilter->add_option("--in", pf_in);
  pfilter->add_option("--out", pf_out);
  pfilter->add_option("--wordlist", pf_words, "Dictionary for the out-of-vocabulary rule");
  pfilter->add_option("--max-oov", pf_oov)->check(CLI::Range(0.0, 1.0));
  pfilter->add_flag("--dedup", pf_dedup, "Drop exact duplicates first");
  pfilter->add_option("--rejects", pf_rejects, "Write rejected lines with their reason");
  pfilter->fallthrough();

  std::string ps_scores, ps_out = "-", ps_preset;
  double ps_threshold = 0.90;
  auto* pselect = app.add_subcommand("prep-select", "Select sentences by classifier score");
  pselect->add_option("--scores", ps_scores, "TSV: text, p_written, p_spoken, p_other")->required();
  auto* thr = pselect->add_option("--threshold", ps_threshold)->check(CLI::Range(0.0, 1.0));
  pselect->add_option("--preset", ps_preset, "c4 (0.90) or subtitle (0.75)")
      ->check(CLI::IsMember({"c4", "subtitle"}))
      ->excludes(thr);
  pselect->add_option("--out", ps_out);
  pselect->fallthrough();

  std::string sp_in = "-", sp_prefix;
  std::uint64_t sp_seed = 0;
  bool sp_dedup = false;
  auto* psplit = app.add_subcommand("prep-split", "Deterministic 90/5/5 train/dev/test split");
  psplit->add_option("--in", sp_in);
  psplit->add_option("--prefix", sp_prefix, "Writes PREFIX.train, PREFIX.dev, PREFIX.test")->required();
  psplit->add_option("--seed", sp_seed);
  psplit->add_flag("--dedup", sp_dedup);
  psplit->fallthrough();

  std::string st_in = "-";
  auto* pstats = app.add_subcommand("prep-stats", "Sentence length and type statistics");
  pstats->add_option("--in", st_in);
  pstats->fallthrough();

  std::string fm_pairs, fm_p1, fm_p2;
  auto* fitmix = app.add_subcommand("fit-mix", "Fit a two-model interpolation weight by EM");
  auto* fp = fitmix->add_option("--pairs", fm_pairs, "Two columns: p_model1 p_model2");
  auto* f1 = fitmix->add_option("--probs1", fm_p1, "One probability per line (eval --dump-probs)");
  auto* f2 = fitmix->add_option("--probs2", fm_p2);
  fp->excludes(f1)->excludes(f2);
  f1->needs(f2);
  f2->needs(f1);
  fitmix->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  auto no_backend = [](const BackendOpts& o) {
    return o.model.empty() && o.remote_cmd.empty() && o.remote.empty() && o.char_model.empty();
  };
  if ((*predict && no_backend(pb)) || (*demo && no_backend(db)) || (*eval && !ea.uniform && no_backend(eb))) {
    std::cerr << "charpred: need --model, --remote-cmd, --remote or --char-model\n";
    return 1;
  }

  try {
    if (*predict) return cmd_predict(pb, context, p_casing, as_json);
    if (*demo) return cmd_demo(db, d_casing, top, as_json);
    if (*eval) return cmd_eval(eb, {ea.corpus, ea.casing, ea.floor, ea.workers, ea.format, ea.rows_out,
                                    ea.dump_probs, ea.uniform, as_json});
    if (*tchar) return cmd_train_char(tc_corpus, tc_order, tc_out, as_json);
    if (*ttok) return cmd_train_token(tt_corpus, tt_vocab, tt_order, tt_lower, tt_out, as_json);
    if (*pfilter) return cmd_prep_filter(pf_in, pf_out, pf_words, pf_oov, pf_dedup, pf_rejects, as_json);
    if (*pselect) {
      if (ps_preset == "c4") ps_threshold = 0.90;
      else if (ps_preset == "subtitle") ps_threshold = 0.75;
      return cmd_prep_select(ps_scores, ps_threshold, ps_out, as_json);
    }
    if (*psplit) return cmd_prep_split(sp_in, sp_prefix, sp_seed, sp_dedup, as_json);
    if (*pstats) return cmd_prep_stats(st_in, as_json);
    if (*fitmix) {
      if (fm_pairs.empty() && fm_p1.empty()) {
        std::cerr << "fit-mix: need --pairs or --probs1/--probs2\n";
        return 1;
      }
      return cmd_fit_mix(fm_pairs, fm_p1, fm_p2, as_json);
    }
  } catch (const Error& e) {
    std::cerr << "charpred: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "charpred: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
