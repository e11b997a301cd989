#pragma once

#include <stdexcept>
#include <string>

namespace drfermi {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct SchemaError : Error {
    explicit SchemaError(const std::string& what) : Error("schema", what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error("data", what) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

struct InfeasibleShiftError : Error {
    explicit InfeasibleShiftError(const std::string& what) : Error("infeasible_shift", what) {}
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

// Zero marginal in P_yhat or P_s.
struct DegenerateDistributionError : Error {
    explicit DegenerateDistributionError(const std::string& what)
        : Error("degenerate_distribution", what) {}
};

struct NondifferentiableError : Error {
    explicit NondifferentiableError(const std::string& what) : Error("nondifferentiable", what) {}
};

struct DivergenceError : Error {
    DivergenceError(const std::string& what, long iteration)
        : Error("divergence", what), iteration_(iteration) {}

    long iteration() const noexcept { return iteration_; }

private:
    long iteration_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error("domain", what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

}  // namespace drfermi
