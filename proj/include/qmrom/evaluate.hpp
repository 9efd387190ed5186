// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_EVALUATE_HPP
#define QMROM_EVALUATE_HPP

#include "qmrom/core.hpp"
#include "qmrom/snapshots.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace qmrom::evaluate
{

struct ErrorSeries
{
  enum class NormKind
  {
    Euclidean,
    Weighted
  };

  Vector times;
  Vector values;  // >= 0; +inf marks samples a diverged model never reached
  NormKind norm_kind = NormKind::Euclidean;
  std::optional<double> split_time;  // last training time
};

struct OutputMatrix
{
  Matrix C;  // p x n
  std::vector<std::string> labels;
};

struct Summary
{
  double train_relative_l2 = 0.0;
  std::optional<double> test_relative_l2;
  double max_error = 0.0;
  std::optional<double> blowup_time;  // first time without a finite error
};

/// e_j = sqrt((x_j - y_j)^T W (x_j - y_j)), W = I when absent.
inline ErrorSeries state_error_series(const snapshots::SnapshotSet &ref, const snapshots::SnapshotSet &approx,
                                      const std::optional<Matrix> &weight = std::nullopt)
{
  if (ref.k() != approx.k() || ref.times() != approx.times())
  {
    throw DataError("state_error_series: time grids differ");
  }
  detail::require_dims(ref.n() == approx.n(), "state_error_series", "state dimensions differ");
  ErrorSeries series;
  series.times = ref.times();
  const Matrix diff = ref.states() - approx.states();
  if (weight)
  {
    detail::require_dims(weight->rows() == ref.n() && weight->cols() == ref.n(), "state_error_series",
                         "weight must be n x n");
    series.norm_kind = ErrorSeries::NormKind::Weighted;
    const Matrix Wd = (*weight) * diff;
    series.values = (diff.cwiseProduct(Wd)).colwise().sum().transpose().cwiseMax(0.0).cwiseSqrt();
  }
  else
  {
    series.values = diff.colwise().norm().transpose();
  }
  return series;
}

/// Per-time reference norms, matching the weighting used for the error series.
inline Vector reference_norms(const snapshots::SnapshotSet &ref, const std::optional<Matrix> &weight = std::nullopt)
{
  if (weight)
  {
    const Matrix Wx = (*weight) * ref.states();
    return ref.states().cwiseProduct(Wx).colwise().sum().transpose().cwiseMax(0.0).cwiseSqrt();
  }
  return ref.states().colwise().norm().transpose();
}

inline Matrix output_series(const OutputMatrix &C, const snapshots::SnapshotSet &set)
{
  detail::require_dims(C.C.cols() == set.n(), "output_series",
                       "C has " + std::to_string(C.C.cols()) + " columns, n = " + std::to_string(set.n()));
  return C.C * set.states();
}

/// Trapezoidal quadrature weights on a grid; a single sample gets weight 1.
inline Vector trapezoid_weights(const Eigen::Ref<const Vector> &times)
{
  const Index k = times.size();
  Vector w = Vector::Zero(k);
  if (k == 1)
  {
    w(0) = 1.0;
    return w;
  }
  for (Index j = 0; j + 1 < k; ++j)
  {
    const double half = 0.5 * (times(j + 1) - times(j));
    w(j) += half;
    w(j + 1) += half;
  }
  return w;
}

namespace internal
{

inline double relative_l2(const Eigen::Ref<const Vector> &times, const Eigen::Ref<const Vector> &errors,
                          const Eigen::Ref<const Vector> &ref)
{
  if (times.size() == 0)
  {
    throw DataError("summarize: empty segment");
  }
  if (!errors.allFinite())
  {
    return std::numeric_limits<double>::infinity();
  }
  const Vector w = trapezoid_weights(times);
  const double num = (errors.array().square() * w.array()).sum();
  const double den = (ref.array().square() * w.array()).sum();
  if (den == 0.0)
  {
    return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return std::sqrt(num / den);
}

}  // namespace internal

/**
 * Relative L2 error over time, sqrt(sum e_j^2 w_j) / sqrt(sum |x_j|^2 w_j),
 * with trapezoidal weights. Samples up to split_time form the training
 * segment, later ones the test segment.
 */
inline Summary summarize(const ErrorSeries &series, const Eigen::Ref<const Vector> &ref_norms)
{
  const Index k = series.times.size();
  detail::require_dims(series.values.size() == k && ref_norms.size() == k, "summarize", "series lengths differ");
  if (k == 0)
  {
    throw DataError("summarize: empty error series");
  }
  Summary out;
  Index train = k;
  if (series.split_time)
  {
    train = 0;
    while (train < k && series.times(train) <= *series.split_time)
    {
      ++train;
    }
    if (train == 0 || train == k)
    {
      throw DataError("summarize: split time leaves an empty segment");
    }
  }
  out.train_relative_l2 = internal::relative_l2(series.times.head(train), series.values.head(train), ref_norms.head(train));
  if (train < k)
  {
    out.test_relative_l2 = internal::relative_l2(series.times.tail(k - train), series.values.tail(k - train),
                                                 ref_norms.tail(k - train));
  }
  out.max_error = series.values.maxCoeff();
  for (Index j = 0; j < k; ++j)
  {
    if (!std::isfinite(series.values(j)))
    {
      out.blowup_time = series.times(j);
      out.max_error = std::numeric_limits<double>::infinity();
      break;
    }
  }
  return out;
}

}  // namespace qmrom::evaluate

#endif  // QMROM_EVALUATE_HPP
