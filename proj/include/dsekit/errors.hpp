#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dsekit {

/**
 * @brief Base class of every toolkit error.
 *
 * Each error carries a short category tag ("config", "data", "numeric")
 * that the CLI maps onto process exit codes.
 */
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
  virtual const char* category() const noexcept { return "error"; }
};

/** Invalid configuration, reference, dimension, or argument. */
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "config"; }
};

/** Malformed or inconsistent data files / series. */
class DataError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "data"; }
};

/** Numerical failure inside model or filter computations. */
class NumericError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "numeric"; }
};

/** Matrix not factorizable even after the diagonal-jitter repair ladder. */
class NotPositiveDefinite : public NumericError {
 public:
  using NumericError::NumericError;
};

/** A state or covariance entry became NaN or infinite. */
class NonFiniteState : public NumericError {
 public:
  using NumericError::NumericError;
};

/** A variance that must be positive is zero or negative. */
class DegenerateVariance : public NumericError {
 public:
  using NumericError::NumericError;
};

/** An iterative solver exhausted its iteration budget. */
class NoConvergence : public NumericError {
 public:
  using NumericError::NumericError;
};

/** Wraps a numeric/model error raised while processing one filter frame. */
class FilterStepError : public NumericError {
 public:
  FilterStepError(int step, const Error& inner)
      : NumericError("filter step " + std::to_string(step) + ": " + inner.what()),
        step_index(step),
        inner_category_(inner.category()) {}
  const char* category() const noexcept override { return inner_category_.c_str(); }

  int step_index;

 private:
  std::string inner_category_;
};

/** Text that could not be parsed; 1-based line and column of the offense. */
class ParseError : public DataError {
 public:
  ParseError(std::size_t line_, std::size_t column_, const std::string& msg)
      : DataError("parse error at line " + std::to_string(line_) + ", column " +
                  std::to_string(column_) + ": " + msg),
        line(line_),
        column(column_) {}

  std::size_t line;
  std::size_t column;
};

/** Structurally wrong document (missing/unexpected field or column). */
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

/** Bad-data event scheduled beyond the end of the series. */
class ScheduleOutOfRange : public DataError {
 public:
  using DataError::DataError;
};

/** Relative error undefined: a truth sample is exactly zero. */
class ZeroTruthSample : public DataError {
 public:
  explicit ZeroTruthSample(std::size_t index_)
      : DataError("relative error undefined: truth sample at index " +
                  std::to_string(index_) + " is zero"),
        index(index_) {}

  std::size_t index;
};

/** A ratio whose denominator is zero (identical series, zero baseline). */
class DegenerateDenominator : public DataError {
 public:
  using DataError::DataError;
};

/** Comparison across runs whose underlying datasets differ. */
class DatasetMismatch : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace dsekit
