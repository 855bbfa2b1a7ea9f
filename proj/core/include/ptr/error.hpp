#pragma once

#include <stdexcept>
#include <string>

namespace ptr {

enum class ErrorKind {
  kInvalidInput,    // malformed or out-of-contract data
  kConfig,          // inconsistent engine / synth configuration
  kParameterRange,  // physical parameter outside its admissible range
  kUnstableFilter,  // resonator too close to the unit circle
  kDivergence,      // fitting loss blew up
  kState,           // API misuse (e.g. second backward pass)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace ptr
