#pragma once

#include <stdexcept>
#include <string>

namespace qsched {

// Invalid or unsupported configuration (bad parameters, unstable load, policy/server mismatch).
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Argument outside the mathematical domain of a query (q <= 0 for an inverse tail, divergent moment).
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Quadrature or root finding failed to reach its tolerance.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qsched
