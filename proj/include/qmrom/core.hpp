// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_CORE_HPP
#define QMROM_CORE_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qmrom
{

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Failure categories; the command-line tool maps each one to its own exit code.
enum class ErrorKind : std::uint8_t
{
  Config,   // invalid arguments, policies, or configuration values
  Data,     // malformed or inconsistent input data
  Numeric,  // loss of definiteness, blow-up, non-finite values
  IO        // file system and serialization failures
};

class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

class ConfigError : public Error
{
public:
  explicit ConfigError(const std::string &what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error
{
public:
  explicit DataError(const std::string &what) : Error(ErrorKind::Data, what) {}
};

class NumericError : public Error
{
public:
  explicit NumericError(const std::string &what) : Error(ErrorKind::Numeric, what) {}
};

class IOError : public Error
{
public:
  explicit IOError(const std::string &what) : Error(ErrorKind::IO, what) {}
};

namespace detail
{

inline std::string dims(Index rows, Index cols)
{
  return std::to_string(rows) + "x" + std::to_string(cols);
}

inline void require_dims(bool ok, const std::string &context, const std::string &detail)
{
  if (!ok)
  {
    throw DataError(context + ": dimension mismatch (" + detail + ")");
  }
}

inline bool all_finite(const Eigen::Ref<const Matrix> &m)
{
  return m.allFinite();
}

}  // namespace detail

}  // namespace qmrom

#endif  // QMROM_CORE_HPP
