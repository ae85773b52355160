#pragma once

#include <stdexcept>
#include <string>

namespace mg {

// Base of every error the library raises. kind() is the stable,
// machine-readable name used by the CLI's JSON error objects.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define MG_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                            \
    public:                                                                \
        explicit Name(const std::string& what) : Error(#Name, what) {}     \
    }

MG_DEFINE_ERROR(FormatError);
MG_DEFINE_ERROR(DataError);
MG_DEFINE_ERROR(IoError);
MG_DEFINE_ERROR(ParameterError);
MG_DEFINE_ERROR(ShapeError);
MG_DEFINE_ERROR(ConnectivityError);
MG_DEFINE_ERROR(SolverError);
MG_DEFINE_ERROR(CalibrationError);
MG_DEFINE_ERROR(OptimizationError);
MG_DEFINE_ERROR(DegenerateDimensionError);
MG_DEFINE_ERROR(ConfigError);
MG_DEFINE_ERROR(SamplingError);
MG_DEFINE_ERROR(AlignmentError);

#undef MG_DEFINE_ERROR

// Convergence failures carry the residual that was reached.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error("ConvergenceError", what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

}  // namespace mg
