#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tabrex {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::string format, std::size_t line, const std::string& what)
        : Error(format + " parse error at line " + std::to_string(line) + ": " + what),
          format_(std::move(format)), line_(line) {}
    const std::string& format() const { return format_; }
    std::size_t line() const { return line_; }

private:
    std::string format_;
    std::size_t line_;
};

class IndexOutOfBounds : public Error {
public:
    IndexOutOfBounds(std::string axis, std::size_t index, std::size_t size)
        : Error(axis + " index " + std::to_string(index) + " out of bounds (size " +
                std::to_string(size) + ")"),
          axis_(std::move(axis)) {}
    /// "row" or "col".
    const std::string& axis() const { return axis_; }

private:
    std::string axis_;
};

class SyntaxError : public Error {
public:
    SyntaxError(std::size_t line, const std::string& message)
        : Error("syntax error at line " + std::to_string(line) + ": " + message), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class MissingAnswer : public Error {
public:
    MissingAnswer() : Error("plan has no ANSWER line") {}
};

class NonLinearizable : public Error {
public:
    explicit NonLinearizable(std::string reason)
        : Error("program is not linearizable: " + reason), reason_(std::move(reason)) {}
    const std::string& reason() const { return reason_; }

private:
    std::string reason_;
};

class UnknownTool : public Error {
public:
    explicit UnknownTool(std::string name) : Error("unknown tool: " + name), name_(std::move(name)) {}
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

class MalformedRef : public Error {
public:
    MalformedRef(std::size_t position, const std::string& message)
        : Error("malformed call reference at offset " + std::to_string(position) + ": " + message),
          position_(position) {}
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

class TraceMissing : public Error {
public:
    TraceMissing() : Error("explanation render needs results but the plan did not execute") {}
};

class PromptTooLong : public Error {
public:
    PromptTooLong(std::size_t estimated, std::size_t budget)
        : Error("prompt needs ~" + std::to_string(estimated) + " tokens, budget is " +
                std::to_string(budget)) {}
};

class NoSolutionFound : public Error {
public:
    NoSolutionFound() : Error("tool maker output has no solution function") {}
};

class SchemaError : public Error {
public:
    SchemaError(std::size_t line, std::string field, const std::string& message)
        : Error("schema error at line " + std::to_string(line) + ", field '" + field + "': " + message),
          line_(line), field_(std::move(field)) {}
    std::size_t line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

} // namespace tabrex
