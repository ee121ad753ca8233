#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tanet {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed caller input: bad indices, shape mismatch, non-finite values.
class InputError : public Error {
public:
    using Error::Error;
};

// Text/file parse failure. line is 1-based, 0 when not tied to a line.
class ParseError : public InputError {
public:
    ParseError(const std::string& what, std::size_t line)
        : InputError(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Dataset directory problem; file names the offending file.
class LoadError : public ParseError {
public:
    LoadError(const std::string& file, const std::string& what, std::size_t line = 0)
        : ParseError(file + ": " + what, line), file_(file) {}
    const std::string& file() const noexcept { return file_; }

private:
    std::string file_;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// alpha_{i\j} <= 0 during message passing. The input precision matrix is not
// walk-summable (or a builder produced garbage).
class NumericBreakdown : public Error {
public:
    NumericBreakdown(int iteration, std::int32_t from, std::int32_t to, double alpha)
        : Error("GaBP numeric breakdown at iteration " + std::to_string(iteration) + " on edge " +
                std::to_string(from) + "->" + std::to_string(to) + " (alpha=" + std::to_string(alpha) + ")"),
          iteration_(iteration), from_(from), to_(to), alpha_(alpha) {}

    int iteration() const noexcept { return iteration_; }
    std::int32_t from() const noexcept { return from_; }
    std::int32_t to() const noexcept { return to_; }
    double alpha() const noexcept { return alpha_; }

private:
    int iteration_;
    std::int32_t from_, to_;
    double alpha_;
};

class TapeError : public Error {
public:
    using Error::Error;
};

}  // namespace tanet
