#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gatelab {

enum class ErrorKind {
    InvalidInput,
    EmptyInput,
    EmptyResponse,
    InvalidToken,
    InvalidScenario,
    InvalidSpec,
    MissingVariant,
    Divergence,
    IOError,
    UsageError,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so callers (and the CLI)
// can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace gatelab
