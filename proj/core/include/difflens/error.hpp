#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace difflens {

enum class ErrorKind {
    io,            // file missing / unreadable / unwritable
    validation,    // bundle or input content violates an invariant
    invalid_argument,
    not_found,
    not_computed,
    conflict,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the engine. `where` names the file, field path
// or element the error refers to (may be empty).
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message, std::string where = {})
        : std::runtime_error(std::move(message)), kind_(kind), where_(std::move(where)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& where() const noexcept { return where_; }

private:
    ErrorKind kind_;
    std::string where_;
};

}  // namespace difflens
