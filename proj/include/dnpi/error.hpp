#pragma once

#include <stdexcept>
#include <string>

namespace dnpi {

// Error categories map onto CLI exit codes: validation 2, numeric 3, I/O 4.
enum class ErrorKind { Validation, Numeric, Io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorKind::Validation, "shape error: " + w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Validation, "configuration error: " + w) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& w) : Error(ErrorKind::Validation, w) {}
};

struct LeakageError : Error {
  explicit LeakageError(const std::string& w) : Error(ErrorKind::Validation, "leakage error: " + w) {}
};

struct JoinError : Error {
  explicit JoinError(const std::string& w) : Error(ErrorKind::Validation, "join error: " + w) {}
};

struct SampleSizeError : Error {
  explicit SampleSizeError(const std::string& w) : Error(ErrorKind::Validation, "sample-size error: " + w) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, "numeric error: " + w) {}
};

struct TrainingDivergedError : Error {
  TrainingDivergedError(int epoch, const std::string& w)
      : Error(ErrorKind::Numeric, "training diverged at epoch " + std::to_string(epoch) + ": " + w),
        epoch(epoch) {}
  int epoch;
};

struct DegenerateOutcomeError : Error {
  explicit DegenerateOutcomeError(const std::string& w)
      : Error(ErrorKind::Numeric, "degenerate outcome: " + w) {}
};

struct SeparationError : Error {
  explicit SeparationError(const std::string& w) : Error(ErrorKind::Numeric, "separation: " + w) {}
};

struct CollinearityError : Error {
  explicit CollinearityError(const std::string& w) : Error(ErrorKind::Numeric, "collinearity: " + w) {}
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, "I/O error: " + w) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation: return 2;
    case ErrorKind::Numeric: return 3;
    case ErrorKind::Io: return 4;
  }
  return 1;
}

}  // namespace dnpi
