#pragma once

#include <stdexcept>
#include <string>

namespace mlharness {

// Root of every error the harness raises. `code()` is the stable,
// machine-readable name used in feedback text and wire responses.
class HarnessError : public std::runtime_error {
 public:
  HarnessError(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

#define MLH_DEFINE_ERROR(Name)                                  \
  class Name : public HarnessError {                            \
   public:                                                      \
    explicit Name(const std::string& message)                   \
        : HarnessError(#Name, message) {}                       \
  };

MLH_DEFINE_ERROR(IoError)
MLH_DEFINE_ERROR(Malformed)
MLH_DEFINE_ERROR(MetricUnknown)
MLH_DEFINE_ERROR(DuplicateName)
MLH_DEFINE_ERROR(ReservedName)
MLH_DEFINE_ERROR(DegenerateInput)
MLH_DEFINE_ERROR(InvalidArgument)
MLH_DEFINE_ERROR(EmptyLeaderboard)
MLH_DEFINE_ERROR(AllInfeasibleTask)
MLH_DEFINE_ERROR(NonPositiveScore)
MLH_DEFINE_ERROR(NotEnoughModels)
MLH_DEFINE_ERROR(NonConvergence)
MLH_DEFINE_ERROR(BudgetExhausted)
MLH_DEFINE_ERROR(UnknownAction)
MLH_DEFINE_ERROR(ConcurrentStep)
MLH_DEFINE_ERROR(MissingPlaceholder)
MLH_DEFINE_ERROR(SystemPromptTooLarge)
MLH_DEFINE_ERROR(EndpointUnavailable)
MLH_DEFINE_ERROR(MalformedTrajectory)
MLH_DEFINE_ERROR(BindError)
MLH_DEFINE_ERROR(IsolationError)

#undef MLH_DEFINE_ERROR

}  // namespace mlharness
