#pragma once

#include <stdexcept>
#include <string>

namespace facekit {

// Exit-code categories used by the CLI: 0 success, 1 usage, 2 validation,
// 3 runtime.
enum class ErrorKind { Usage = 1, Validation = 2, Runtime = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(ErrorKind::Usage, msg) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg)
        : Error(ErrorKind::Validation, msg) {}
};

// Parse failure with a 1-based line number so callers can point at the
// offending record.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& msg, std::size_t line)
        : ValidationError(msg + " (line " + std::to_string(line) + ")"),
          line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class RuntimeError : public Error {
public:
    explicit RuntimeError(const std::string& msg)
        : Error(ErrorKind::Runtime, msg) {}
};

}  // namespace facekit
