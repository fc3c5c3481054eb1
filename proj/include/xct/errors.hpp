#pragma once

#include <stdexcept>
#include <string>

namespace xct {

// Contract violations: bad shapes, bad arguments, broken preconditions.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Graph integrity: node from another tape, stale handle, cyclic wiring.
class GraphError : public std::logic_error {
public:
    explicit GraphError(const std::string& msg) : std::logic_error(msg) {}
};

// Malformed files: bad magic, bad version, truncation.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration (negative weights, impossible class mix, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where training cannot continue.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Phantom generation gave up (e.g. no feasible lesion placement).
class GenerationError : public std::runtime_error {
public:
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace xct
