#pragma once

#include <stdexcept>
#include <string>

namespace avtse {

enum class ErrorKind {
  Schema,
  Data,
  Bounds,
  Config,
  Estimation,
  Metric,
  Io,
};

// Every failure raised by the core carries a kind so the C layer can map it
// onto a status code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct SchemaError : Error {
  explicit SchemaError(const std::string& column)
      : Error(ErrorKind::Schema, "missing required column: " + column), column(column) {}
  std::string column;
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct BoundsError : Error {
  explicit BoundsError(const std::string& what) : Error(ErrorKind::Bounds, what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct EstimationError : Error {
  explicit EstimationError(const std::string& what) : Error(ErrorKind::Estimation, what) {}
};

struct MetricError : Error {
  explicit MetricError(const std::string& what) : Error(ErrorKind::Metric, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

// Pipeline failures are re-raised with the stage that produced them.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.kind(), "[" + stage + "] " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace avtse
