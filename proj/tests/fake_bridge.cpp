// Serves the backend protocol on stdin/stdout from a built-in token n-gram,
// standing in for an out-of-process neural model in tests.
//
//   fake_bridge [--model token_model.json] [--tokenize]
//               [--fail-logprobs] [--garbage] [--hang] [--bad-values]

#include <iostream>
#include <string>
#include <thread>

#include "charpred/charpred.hpp"

using namespace charpred;

namespace {

class Adapter final : public LanguageModel {
 public:
  Adapter(LanguageModel& inner, bool tokenize) : inner_(inner), tokenize_(tokenize) {}
  const TokenVocab& vocab() const override { return inner_.vocab(); }
  std::string name() const override { return "fake-bridge/" + inner_.name(); }
  BackendCapabilities capabilities() const override { return {tokenize_}; }
  std::vector<TokenId> tokenize(std::string_view text) override {
    if (!tokenize_) return LanguageModel::tokenize(text);
    return vocab().greedy_tokenize(text);
  }
  void next_token_logprobs(LogProbBatch& b) override { inner_.next_token_logprobs(b); }

 private:
  LanguageModel& inner_;
  bool tokenize_;
};

std::unique_ptr<TokenNGramBackend> toy_model() {
  TokenVocab v({{0, "<s>", true}, {1, "a", false}, {2, "b", false}, {3, " a", false},
                {4, " b", false}, {5, "ab", false}, {6, " ab", false}, {7, "<unk>", true}},
               0);
  return train_token_ngram(std::vector<std::string>{"ab a", "b ab", "a b ab", "ab ab b"}, v, 2);
}

}  // namespace

int main(int argc, char** argv) {
  std::string model_path;
  bool tokenize = false, fail = false, garbage = false, hang = false, bad_values = false;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--model" && i + 1 < argc) model_path = argv[++i];
    else if (a == "--tokenize") tokenize = true;
    else if (a == "--fail-logprobs") fail = true;
    else if (a == "--garbage") garbage = true;
    else if (a == "--hang") hang = true;
    else if (a == "--bad-values") bad_values = true;
    else {
      std::cerr << "fake_bridge: unknown argument " << a << "\n";
      return 1;
    }
  }
  std::unique_ptr<TokenNGramBackend> model;
  try {
    model = model_path.empty() ? toy_model() : load_token_ngram(model_path);
  } catch (const std::exception& e) {
    std::cerr << "fake_bridge: " << e.what() << "\n";
    return 2;
  }
  Adapter adapter(*model, tokenize);
  ProtocolServer server(adapter);
  std::string line;
  while (std::getline(std::cin, line)) {
    const bool is_logprobs = line.find("\"logprobs\"") != std::string::npos;
    if (is_logprobs && hang) {
      std::this_thread::sleep_for(std::chrono::seconds(30));
      return 0;
    }
    if (is_logprobs && garbage) {
      std::cout << "{not json" << std::endl;
      continue;
    }
    if (is_logprobs && fail) {
      auto id = nlohmann::json::parse(line).value("id", 0);
      std::cout << nlohmann::json{{"op", "error"}, {"id", id}, {"message", "out of memory"}}.dump()
                << std::endl;
      continue;
    }
    auto reply = server.handle(line);
    if (is_logprobs && bad_values) {
      auto j = nlohmann::json::parse(reply);
      if (j["op"] == "logprobs" && !j["items"].empty() && !j["items"][0].empty()) j["items"][0][0] = 0.5;
      reply = j.dump();
    }
    std::cout << reply << std::endl;
  }
  return 0;
}
