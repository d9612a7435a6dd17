#pragma once

#include <stdexcept>
#include <string>

namespace charpred {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed vocab, model or score file.
class LoadError : public Error {
 public:
  using Error::Error;
};

class TokenizeError : public Error {
 public:
  TokenizeError(const std::string& msg, std::size_t offset)
      : Error(msg), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Context holds a character outside the symbol set.
class ContextError : public Error {
 public:
  ContextError(const std::string& msg, std::size_t offset)
      : Error(msg), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Search finished without depositing probability into any symbol bucket.
class NoMassError : public Error {
 public:
  using Error::Error;
};

/// Backend query failed (bad id, remote failure, protocol violation).
class BackendError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOpError : public BackendError {
 public:
  using BackendError::BackendError;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace charpred
