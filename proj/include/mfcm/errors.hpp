#pragma once

#include <stdexcept>
#include <string>

namespace mfcm {

/// Raised when a solver fails; the CLI maps it to exit code 1.
class NumericalError : public std::runtime_error {
public:
    NumericalError(std::string code, const std::string& what, double residual = 0.0)
        : std::runtime_error(code + ": " + what), code_(std::move(code)), residual_(residual) {}
    const std::string& code() const noexcept { return code_; }
    double residual() const noexcept { return residual_; }

private:
    std::string code_;
    double residual_;
};

/// Invalid parameters or configuration; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string code, const std::string& what)
        : std::runtime_error(code + ": " + what), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

} // namespace mfcm
