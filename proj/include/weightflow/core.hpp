#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace weightflow {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = VectorX<double>;
using MatrixXd = MatrixX<double>;

/// Missing observations are stored as quiet NaN throughout the engine.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return v != v; }

// Error taxonomy. The CLI maps each family onto its exit code.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (exit code 2).
class DataError : public Error {
 public:
  DataError(const std::string& what, std::string source = {}, std::size_t line = 0);
  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

/// Any failure while running a strategy, backtest or session (exit code 3).
class RuntimeError : public Error {
 public:
  using Error::Error;
};

/// A stage tried to read data dated after the rebalance it is computing.
class LookaheadError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

/// Calendar date with day resolution, stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}
  explicit Date(std::chrono::year_month_day ymd);

  /// Parses YYYY-MM-DD; throws DataError on anything else.
  static Date parse(std::string_view iso);

  std::string iso() const;
  std::chrono::year_month_day ymd() const;
  constexpr std::int32_t days() const { return days_; }
  /// Index of the Monday-based week containing this date (bucket key only).
  std::int32_t iso_week_key() const;
  std::int32_t month_key() const;

  friend constexpr auto operator<=>(Date, Date) = default;

 private:
  std::int32_t days_ = 0;
};

}  // namespace weightflow
