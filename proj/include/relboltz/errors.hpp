#pragma once

#include <stdexcept>
#include <string>

namespace relboltz {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RELBOLTZ_ERROR(Name)            \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  };

RELBOLTZ_ERROR(EvaluationError)
RELBOLTZ_ERROR(SingularMetricError)
RELBOLTZ_ERROR(ZeroVectorError)
RELBOLTZ_ERROR(IntegrationError)
RELBOLTZ_ERROR(NoConnection)
RELBOLTZ_ERROR(DegenerateTargetError)
RELBOLTZ_ERROR(TransversalityError)
RELBOLTZ_ERROR(MollificationError)
RELBOLTZ_ERROR(KernelParamError)
RELBOLTZ_ERROR(NoContractionError)
RELBOLTZ_ERROR(DegenerateInput)
RELBOLTZ_ERROR(TangencyError)
RELBOLTZ_ERROR(DomainError)
RELBOLTZ_ERROR(CausticError)
RELBOLTZ_ERROR(EmptyDetection)

#undef RELBOLTZ_ERROR

// Backward integration left the chart before the answer was determined.
class ChartExitError : public Error {
 public:
  ChartExitError(const std::string& what, double partial_bound)
      : Error(what), partial_bound_(partial_bound) {}
  double partial_bound() const { return partial_bound_; }

 private:
  double partial_bound_;
};

// Schema violation; pointer() is the JSON pointer of the offending value.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& pointer, const std::string& message)
      : Error(pointer + ": " + message), pointer_(pointer) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace relboltz
