#pragma once

// Client and server sides of the newline-delimited JSON backend protocol.
//
//   -> {"op":"hello","version":1}
//   <- {"op":"hello","version":1,"vocab_size":N,"bos_id":k,"tokenize":bool,"name":s}
//   -> {"op":"vocab"}
//   <- {"op":"vocab","tokens":[[id,"text",special?],...]}
//   -> {"op":"tokenize","id":q,"text":s}
//   <- {"op":"tokenize","id":q,"ids":[...]}
//   -> {"op":"logprobs","id":q,"items":[{"ctx":[...],"cands":[...]|"all"},...]}
//   <- {"op":"logprobs","id":q,"items":[[lp,...],...]}
//   any request may yield {"op":"error","id":q,"message":s}

#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <string>
#include <thread>

#include "charpred/error.hpp"
#include "charpred/lm_backend.hpp"
#include "json.hpp"

namespace charpred {

inline constexpr int kProtocolVersion = 1;

/// Bidirectional line transport over a connected stream socket.
class LineChannel {
 public:
  LineChannel(int fd, std::chrono::milliseconds timeout) : fd_(fd), timeout_(timeout) {}
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;
  virtual ~LineChannel() { close_fd(); }

  void send_line(std::string line) {
    line.push_back('\n');
    std::size_t off = 0;
    while (off < line.size()) {
      ssize_t n = ::send(fd_, line.data() + off, line.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw BackendError(std::string("backend connection write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string recv_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
      auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return line;
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw BackendError("backend timed out");
      pollfd p{fd_, POLLIN, 0};
      int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw BackendError(std::string("backend poll failed: ") + std::strerror(errno));
      }
      if (r == 0) throw BackendError("backend timed out");
      char tmp[65536];
      ssize_t n = ::recv(fd_, tmp, sizeof tmp, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw BackendError(std::string("backend read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw BackendError("backend closed the connection");
      buf_.append(tmp, static_cast<std::size_t>(n));
    }
  }

 protected:
  void close_fd() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_;
  std::chrono::milliseconds timeout_;
  std::string buf_;
};

/// Runs `sh -c command` with its stdin/stdout attached to a socket pair.
class ChildProcessChannel final : public LineChannel {
 public:
  ChildProcessChannel(const std::string& command, std::chrono::milliseconds timeout)
      : ChildProcessChannel(spawn(command), timeout) {}

  ~ChildProcessChannel() override {
    close_fd();
    if (pid_ <= 0) return;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ::kill(-pid_, SIGTERM);
    ::waitpid(pid_, nullptr, 0);
  }

 private:
  struct Spawned {
    int fd;
    pid_t pid;
  };

  ChildProcessChannel(Spawned s, std::chrono::milliseconds timeout)
      : LineChannel(s.fd, timeout), pid_(s.pid) {}

  static Spawned spawn(const std::string& command) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0)
      throw BackendError(std::string("socketpair failed: ") + std::strerror(errno));
    pid_t pid = ::fork();
    if (pid < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw BackendError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::setpgid(0, 0);
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      ::close(sv[0]);
      ::close(sv[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(sv[1]);
    return {sv[0], pid};
  }

  pid_t pid_ = -1;
};

class TcpChannel final : public LineChannel {
 public:
  TcpChannel(const std::string& host, const std::string& port, std::chrono::milliseconds timeout)
      : LineChannel(connect_to(host, port), timeout) {}

  /// Parses "host:port".
  static std::unique_ptr<TcpChannel> from_address(const std::string& addr,
                                                  std::chrono::milliseconds timeout) {
    auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
      throw ArgumentError("expected host:port, got '" + addr + "'");
    return std::make_unique<TcpChannel>(addr.substr(0, colon), addr.substr(colon + 1), timeout);
  }

 private:
  static int connect_to(const std::string& host, const std::string& port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
      throw BackendError("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
    int fd = -1;
    for (auto* p = res; p; p = p->ai_next) {
      fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw BackendError("cannot connect to " + host + ":" + port);
    return fd;
  }
};

/// Protocol client. One in-flight request per connection; a failed request
/// aborts the caller's prediction with BackendError.
class RemoteBackend final : public LanguageModel {
 public:
  explicit RemoteBackend(std::unique_ptr<LineChannel> channel) : channel_(std::move(channel)) {
    auto hello = request({{"op", "hello"}, {"version", kProtocolVersion}}, "hello");
    if (hello.value("version", 0) != kProtocolVersion)
      throw BackendError("backend speaks an unsupported protocol version");
    try {
      name_ = hello.value("name", std::string("remote"));
      tokenize_ = hello.value("tokenize", false);
      const auto bos = hello.at("bos_id").get<TokenId>();
      const auto vocab_size = hello.at("vocab_size").get<std::size_t>();

      auto v = request({{"op", "vocab"}}, "vocab");
      std::vector<Token> tokens;
      for (const auto& row : v.at("tokens")) {
        Token t{row.at(0).get<TokenId>(), row.at(1).get<std::string>(),
                row.size() > 2 && row.at(2).get<bool>()};
        tokens.push_back(std::move(t));
      }
      if (tokens.size() != vocab_size)
        throw BackendError("backend vocab frame has " + std::to_string(tokens.size()) +
                           " tokens but hello reported " + std::to_string(vocab_size));
      vocab_ = TokenVocab(std::move(tokens), bos);
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed handshake: ") + e.what());
    } catch (const LoadError& e) {
      throw BackendError(std::string("backend vocab rejected: ") + e.what());
    }
  }

  const TokenVocab& vocab() const override { return vocab_; }
  BackendCapabilities capabilities() const override { return {tokenize_}; }
  std::string name() const override { return name_; }

  std::vector<TokenId> tokenize(std::string_view text) override {
    if (!tokenize_) return LanguageModel::tokenize(text);
    if (text.empty()) return {};
    const auto q = next_id_++;
    auto r = request({{"op", "tokenize"}, {"id", q}, {"text", std::string(text)}}, "tokenize", q);
    try {
      auto ids = r.at("ids").get<std::vector<TokenId>>();
      for (auto id : ids)
        if (!vocab_.contains(id)) throw BackendError("tokenize returned unknown id " + std::to_string(id));
      return ids;
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed tokenize reply: ") + e.what());
    }
  }

  void next_token_logprobs(LogProbBatch& batch) override {
    batch.filled = false;
    for (const auto& item : batch.items) detail::validate_item(vocab_, item);
    const auto q = next_id_++;
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : batch.items) {
      nlohmann::json it = {{"ctx", item.ctx}};
      if (item.cands) it["cands"] = *item.cands;
      else it["cands"] = "all";
      items.push_back(std::move(it));
    }
    auto r = request({{"op", "logprobs"}, {"id", q}, {"items", std::move(items)}}, "logprobs", q);
    try {
      const auto& rows = r.at("items");
      if (rows.size() != batch.items.size())
        throw BackendError("logprobs reply has wrong number of items");
      for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& item = batch.items[i];
        auto vals = rows[i].get<std::vector<double>>();
        const std::size_t want = item.cands ? item.cands->size() : vocab_.size();
        if (vals.size() != want) throw BackendError("logprobs reply length does not match candidates");
        for (double& x : vals) {
          if (!std::isfinite(x) || x > 1e-9) throw BackendError("logprobs reply holds an invalid value");
          // The server's stand-in for zero probability.
          if (x == std::numeric_limits<double>::lowest()) x = kNegInf;
        }
        if (item.cands) {
          item.results = std::move(vals);
        } else {
          // "all" rows follow the vocab frame order; re-index densely by id.
          item.results.assign(vocab_.id_bound(), kNegInf);
          const auto& toks = vocab_.tokens();
          for (std::size_t k = 0; k < toks.size(); ++k) item.results[toks[k].id] = vals[k];
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed logprobs reply: ") + e.what());
    }
    batch.filled = true;
  }

 private:
  nlohmann::json request(const nlohmann::json& msg, const std::string& op,
                         std::optional<std::int64_t> id = std::nullopt) {
    channel_->send_line(msg.dump());
    nlohmann::json r;
    try {
      r = nlohmann::json::parse(channel_->recv_line());
    } catch (const nlohmann::json::parse_error& e) {
      throw BackendError(std::string("backend sent invalid JSON: ") + e.what());
    }
    if (!r.is_object()) throw BackendError("backend reply is not an object");
    const auto rop = r.value("op", std::string());
    if (rop == "error")
      throw BackendError("backend error: " + r.value("message", std::string("(no message)")));
    if (rop != op) throw BackendError("backend replied '" + rop + "' to '" + op + "'");
    if (id && r.value("id", std::int64_t{-1}) != *id)
      throw BackendError("backend reply id does not match request");
    return r;
  }

  std::unique_ptr<LineChannel> channel_;
  TokenVocab vocab_;
  std::string name_;
  bool tokenize_ = false;
  std::int64_t next_id_ = 1;
};

/// Server side: answers one request line with one reply line. Malformed
/// requests produce an error frame and leave the server usable.
class ProtocolServer {
 public:
  explicit ProtocolServer(LanguageModel& model) : model_(model) {}

  std::string handle(const std::string& line) {
    nlohmann::json id = nullptr;
    try {
      auto req = nlohmann::json::parse(line);
      if (!req.is_object()) return error(id, "request must be an object");
      if (req.contains("id")) id = req["id"];
      const auto op = req.value("op", std::string());
      const auto& v = model_.vocab();
      if (op == "hello") {
        return nlohmann::json{{"op", "hello"},
                              {"version", kProtocolVersion},
                              {"vocab_size", v.size()},
                              {"bos_id", v.bos_id()},
                              {"tokenize", model_.capabilities().authoritative_tokenize},
                              {"name", model_.name()}}
            .dump();
      }
      if (op == "vocab") {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& t : v.tokens()) rows.push_back({t.id, t.text, t.special});
        return nlohmann::json{{"op", "vocab"}, {"tokens", std::move(rows)}}.dump();
      }
      if (op == "tokenize") {
        auto ids = model_.tokenize(req.at("text").get<std::string>());
        return nlohmann::json{{"op", "tokenize"}, {"id", id}, {"ids", ids}}.dump();
      }
      if (op == "logprobs") {
        LogProbBatch batch;
        for (const auto& it : req.at("items")) {
          LogProbItem item;
          item.ctx = it.at("ctx").get<std::vector<TokenId>>();
          const auto& c = it.at("cands");
          if (!(c.is_string() && c.get<std::string>() == "all"))
            item.cands = c.get<std::vector<TokenId>>();
          batch.items.push_back(std::move(item));
        }
        model_.next_token_logprobs(batch);
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& item : batch.items) {
          std::vector<double> vals;
          if (item.cands) {
            vals = item.results;
          } else {
            for (const auto& t : v.tokens()) vals.push_back(item.results[t.id]);
          }
          // The wire carries finite doubles only.
          for (auto& x : vals)
            if (!std::isfinite(x)) x = std::numeric_limits<double>::lowest();
          rows.push_back(std::move(vals));
        }
        return nlohmann::json{{"op", "logprobs"}, {"id", id}, {"items", std::move(rows)}}.dump();
      }
      return error(id, "unknown op '" + op + "'");
    } catch (const std::exception& e) {
      return error(id, e.what());
    }
  }

 private:
  static std::string error(const nlohmann::json& id, const std::string& msg) {
    return nlohmann::json{{"op", "error"}, {"id", id}, {"message", msg}}.dump();
  }

  LanguageModel& model_;
};

}  // namespace charpred
