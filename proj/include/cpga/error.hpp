#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cpga {

/// Raised when a caller violates a documented precondition (bad dimensions,
/// unsupported QP, mismatched shapes). The CLI maps these to exit code 2.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Structured parse failure for binary containers and checkpoints.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string field, std::size_t offset, const std::string& detail)
        : std::runtime_error("parse error at byte " + std::to_string(offset) + " (" + field +
                             "): " + detail),
          field_(std::move(field)),
          offset_(offset) {}

    const std::string& field() const noexcept { return field_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    std::string field_;
    std::size_t offset_;
};

}  // namespace cpga
