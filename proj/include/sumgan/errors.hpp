#pragma once

#include <stdexcept>
#include <string>

namespace sumgan {

// Shape or axis disagreement between tensor operands.
struct DimError : std::runtime_error {
    explicit DimError(const std::string& what) : std::runtime_error(what) {}
};

// A caller violated an operation's precondition.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Bad user-facing configuration (CLI flags, config file, variant wiring).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A dataset or checkpoint file failed validation on load.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite value surfaced during training; carries the loss term and epoch.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sumgan
