#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rffi {

// Error taxonomy shared by all modules. The CLI maps kinds to exit codes,
// so every failure thrown from library code must carry one.
enum class ErrorKind {
    InvalidParams,    // bad configuration or arguments
    MissingArtifact,  // referenced file/dataset/checkpoint absent
    NumericFailure,   // non-finite values, degenerate inputs, divergence
    Verification,     // checksum/shape/consistency failures
    Io,               // filesystem errors
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

}  // namespace rffi
