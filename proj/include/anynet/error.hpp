#pragma once

#include <stdexcept>
#include <string>

namespace anynet {

enum class ErrorKind {
    Config,        // bad plan/optimizer/schedule values, unusable CLI input
    Dimension,     // shape mismatch in tensor arithmetic
    Input,         // out-of-range labels, malformed arguments
    State,         // operation called out of order (backward before forward)
    Numeric,       // NaN/Inf where finite values are required
    Io,            // filesystem failures
    Format,        // unparseable file contents
    Verification,  // a self-check (gradient check, orthogonality audit) failed
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) raise(kind, msg);
}

}  // namespace anynet
