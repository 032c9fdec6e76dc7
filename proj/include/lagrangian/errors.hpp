#pragma once

#include <stdexcept>
#include <string>

namespace lagrangian {

// Every failure the library raises derives from Error; kind() is the stable
// name written into result bundles and CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define LAGRANGIAN_ERROR_KIND(Name)                                                      \
    class Name : public Error {                                                          \
    public:                                                                              \
        explicit Name(const std::string& what) : Error(#Name, what) {}                   \
    };

LAGRANGIAN_ERROR_KIND(DegenerateKernelArgument)
LAGRANGIAN_ERROR_KIND(BranchCutViolation)
LAGRANGIAN_ERROR_KIND(NoContraction)
LAGRANGIAN_ERROR_KIND(BallExit)
LAGRANGIAN_ERROR_KIND(InvalidGeometry)
LAGRANGIAN_ERROR_KIND(InsufficientCoefficients)
LAGRANGIAN_ERROR_KIND(MeshTooCoarse)
LAGRANGIAN_ERROR_KIND(QuadratureNotConverged)
LAGRANGIAN_ERROR_KIND(SearchExhausted)
LAGRANGIAN_ERROR_KIND(ScheduleInfeasible)
LAGRANGIAN_ERROR_KIND(VacuumFormation)
LAGRANGIAN_ERROR_KIND(CFLViolation)
LAGRANGIAN_ERROR_KIND(ShockSuspected)
LAGRANGIAN_ERROR_KIND(ResolutionTooLow)
LAGRANGIAN_ERROR_KIND(ConfigError)

#undef LAGRANGIAN_ERROR_KIND

}  // namespace lagrangian
