#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace icalib {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or range violations in caller-supplied arguments.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Too few samples for the requested operation.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

/// Numerical failures: factorization breakdown, divergence, non-convergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IllConditioned : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateGeometry : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(int epoch, const std::string& what)
      : NumericalError(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

enum class Visibility { kVisible, kBehindCamera, kOutOfFrame };

inline const char* to_string(Visibility v) {
  switch (v) {
    case Visibility::kVisible: return "visible";
    case Visibility::kBehindCamera: return "behind-camera";
    case Visibility::kOutOfFrame: return "out-of-frame";
  }
  return "unknown";
}

struct VisibilityIssue {
  std::size_t point_index = 0;
  std::size_t camera_index = 0;
  Visibility state = Visibility::kVisible;
};

/// A point that is not seen by every camera of the rig.
class VisibilityError : public Error {
 public:
  explicit VisibilityError(std::vector<VisibilityIssue> issues)
      : Error(describe(issues)), issues_(std::move(issues)) {}

  const std::vector<VisibilityIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string describe(const std::vector<VisibilityIssue>& issues) {
    std::string msg = "visibility violation for " + std::to_string(issues.size()) + " point/camera pair(s):";
    const std::size_t shown = issues.size() < 8 ? issues.size() : 8;
    for (std::size_t i = 0; i < shown; ++i) {
      msg += " [point " + std::to_string(issues[i].point_index) + ", camera " +
             std::to_string(issues[i].camera_index + 1) + ": " + to_string(issues[i].state) + "]";
    }
    if (shown < issues.size()) msg += " ...";
    return msg;
  }

  std::vector<VisibilityIssue> issues_;
};

/// Observation rows with missing (non-finite) pixel entries.
class PartialVisibility : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class NotInPool : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Malformed tabular input; carries the 1-based line number.
class DataFormatError : public Error {
 public:
  DataFormatError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace icalib
