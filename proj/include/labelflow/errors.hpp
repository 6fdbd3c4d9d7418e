#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace labelflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed workflow file. Carries a JSON pointer to the offending field
/// and the 1-based source line when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string pointer, std::size_t line = 0)
      : Error(format(message, pointer, line)), pointer_(std::move(pointer)), line_(line) {}

  const std::string& pointer() const noexcept { return pointer_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& message, const std::string& pointer,
                            std::size_t line) {
    std::string out = message;
    if (!pointer.empty()) out += " (at " + pointer + ")";
    if (line > 0) out += " [line " + std::to_string(line) + "]";
    return out;
  }

  std::string pointer_;
  std::size_t line_;
};

class InvariantViolation : public Error { using Error::Error; };
class UnknownTemplate : public Error { using Error::Error; };
class UnknownOverrideKey : public Error { using Error::Error; };

// builtins
class InsufficientLabels : public Error { using Error::Error; };
class UntrainedModel : public Error { using Error::Error; };
class MissingFeatures : public Error { using Error::Error; };
class NonNumericContent : public Error { using Error::Error; };
class KOutOfRange : public Error { using Error::Error; };
class InvalidConfig : public Error { using Error::Error; };

// engine
class InvalidWorkflow : public Error { using Error::Error; };
class UnknownNode : public Error { using Error::Error; };
class IterationGuardExceeded : public Error { using Error::Error; };

class ImplementationError : public Error {
 public:
  ImplementationError(std::string node_id, const std::string& message)
      : Error("node '" + node_id + "': " + message), node_id_(std::move(node_id)) {}
  const std::string& node_id() const noexcept { return node_id_; }

 private:
  std::string node_id_;
};

// gateway
class GatewayClosed : public Error { using Error::Error; };
class DuplicateRequestId : public Error { using Error::Error; };
class Timeout : public Error { using Error::Error; };
class ValidationFailure : public Error { using Error::Error; };
class MissingTruth : public Error { using Error::Error; };

// ingestion
class UnreadableSource : public Error { using Error::Error; };
class DimensionMismatch : public Error { using Error::Error; };

}  // namespace labelflow
