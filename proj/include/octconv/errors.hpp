#pragma once

#include <stdexcept>
#include <string>

namespace oct {

// Shape/dimension mismatches between tensors and kernels.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

// Invalid operator configuration (even kernel size, bad group split, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

// Net description parse failure; carries a 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(int line, const std::string& msg)
        : std::runtime_error("parse error: line " + std::to_string(line) + ": " + msg),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// File I/O and serialization failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

} // namespace oct
