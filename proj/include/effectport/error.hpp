#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace effectport {

// Coarse classification used by the CLI to pick an exit code.
enum class ErrorClass { validation, numerical };

class Error : public std::runtime_error {
 public:
  Error(std::string name, ErrorClass cls, const std::string& what)
      : std::runtime_error(what), name_(std::move(name)), class_(cls) {}

  const std::string& name() const noexcept { return name_; }
  ErrorClass error_class() const noexcept { return class_; }

 private:
  std::string name_;
  ErrorClass class_;
};

#define EFFECTPORT_DEFINE_ERROR(Type, Class)                     \
  class Type : public Error {                                    \
   public:                                                       \
    explicit Type(const std::string& what)                       \
        : Error(#Type, ErrorClass::Class, what) {}               \
  };

// Input/domain problems.
EFFECTPORT_DEFINE_ERROR(DomainError, validation)
EFFECTPORT_DEFINE_ERROR(ZeroCellError, validation)
EFFECTPORT_DEFINE_ERROR(DegenerateMarginError, validation)
EFFECTPORT_DEFINE_ERROR(MissingTermError, validation)
EFFECTPORT_DEFINE_ERROR(NestingError, validation)
EFFECTPORT_DEFINE_ERROR(InsufficientStudiesError, validation)
EFFECTPORT_DEFINE_ERROR(LengthMismatchError, validation)
EFFECTPORT_DEFINE_ERROR(InfeasibleMechanismError, validation)
EFFECTPORT_DEFINE_ERROR(DataValidationError, validation)

// Estimation failures.
EFFECTPORT_DEFINE_ERROR(RankDeficientError, numerical)
EFFECTPORT_DEFINE_ERROR(SeparationError, numerical)
EFFECTPORT_DEFINE_ERROR(NumericalUnderflowError, numerical)
EFFECTPORT_DEFINE_ERROR(NonConvergenceError, numerical)
EFFECTPORT_DEFINE_ERROR(SingularHessianError, numerical)
EFFECTPORT_DEFINE_ERROR(CovarianceUnavailableError, numerical)
EFFECTPORT_DEFINE_ERROR(DegenerateError, numerical)

#undef EFFECTPORT_DEFINE_ERROR

/// Raised when nothing survives the corpus filters. Carries the skip report
/// as (meta_id, study count) pairs.
class EmptyCorpusError : public Error {
 public:
  EmptyCorpusError(const std::string& what,
                   std::vector<std::pair<std::string, int>> skipped)
      : Error("EmptyCorpusError", ErrorClass::validation, what),
        skipped_(std::move(skipped)) {}

  const std::vector<std::pair<std::string, int>>& skipped() const noexcept {
    return skipped_;
  }

 private:
  std::vector<std::pair<std::string, int>> skipped_;
};

}  // namespace effectport
