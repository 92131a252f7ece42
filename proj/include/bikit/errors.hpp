#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace bikit {

/// Domain error with a stable machine-readable code.
///
/// Codes are part of the CLI and HTTP contracts (e.g. "duplicate-class",
/// "missing-id", "out-of-range-score"), so they must not change once
/// published. The message is free-form and names the offending field or id.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

} // namespace bikit
