#pragma once

#include <stdexcept>
#include <string>

namespace calderon {

// Every failure mode the library promises to diagnose gets its own type so
// callers (and tests) can catch precisely. The kind string doubles as the
// machine-readable code in CLI error reports.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define CALDERON_DEFINE_ERROR(Name)                                           \
  class Name : public Error {                                                 \
  public:                                                                      \
    explicit Name(const std::string& what) : Error(#Name, what) {}             \
  }

CALDERON_DEFINE_ERROR(DegenerateCriticalPoint);
CALDERON_DEFINE_ERROR(BoundaryCriticalPoint);
CALDERON_DEFINE_ERROR(SignConditionUnsatisfiable);
CALDERON_DEFINE_ERROR(CoincidentCriticalPoints);
CALDERON_DEFINE_ERROR(InterpolationSingular);
CALDERON_DEFINE_ERROR(InvalidResolution);
CALDERON_DEFINE_ERROR(OverflowRisk);
CALDERON_DEFINE_ERROR(NonpositiveConductivity);
CALDERON_DEFINE_ERROR(NearResonance);
CALDERON_DEFINE_ERROR(InputNotVanishingOnGammaMinus);
CALDERON_DEFINE_ERROR(InadmissiblePhase);
CALDERON_DEFINE_ERROR(ConstraintInfeasible);
CALDERON_DEFINE_ERROR(SupportInfeasible);
CALDERON_DEFINE_ERROR(DegeneratePhase);
CALDERON_DEFINE_ERROR(MismatchedTau);
CALDERON_DEFINE_ERROR(IllConditionedFit);
CALDERON_DEFINE_ERROR(CriticalPointCollision);
CALDERON_DEFINE_ERROR(SingularNormalSystem);
CALDERON_DEFINE_ERROR(NoConvergence);
CALDERON_DEFINE_ERROR(ResolutionInsufficient);
CALDERON_DEFINE_ERROR(ConfigError);
CALDERON_DEFINE_ERROR(PipelineError);
CALDERON_DEFINE_ERROR(IoError);

#undef CALDERON_DEFINE_ERROR

}  // namespace calderon
