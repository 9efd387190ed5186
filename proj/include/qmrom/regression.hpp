// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_REGRESSION_HPP
#define QMROM_REGRESSION_HPP

#include "qmrom/core.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

/**
 * Truncated-SVD least squares in row form: min_G || G Z - Y ||_F.
 *
 * One factorization of the data matrix Z serves every target row and every
 * truncation level. Truncating the SVD trades residual for a smaller
 * coefficient norm; lcurve() exposes that tradeoff.
 */
namespace qmrom::regression
{

struct TruncationPolicy
{
  enum class Mode
  {
    None,
    Rank,
    Threshold
  };

  Mode mode = Mode::None;
  Index rank = 0;
  double threshold = 0.0;

  static TruncationPolicy none() { return {}; }

  static TruncationPolicy keep_rank(Index value)
  {
    if (value < 1)
    {
      throw ConfigError("TruncationPolicy: rank must be at least 1, got " + std::to_string(value));
    }
    return {Mode::Rank, value, 0.0};
  }

  /// Discards singular values below value * sigma_max; values exactly at the cutoff are kept.
  static TruncationPolicy relative_threshold(double value)
  {
    if (!(value >= 0.0 && value < 1.0))
    {
      throw ConfigError("TruncationPolicy: threshold must lie in [0, 1)");
    }
    return {Mode::Threshold, 0, value};
  }

  std::string describe() const
  {
    std::ostringstream os;
    switch (mode)
    {
    case Mode::None: os << "none"; break;
    case Mode::Rank: os << "rank:" << rank; break;
    case Mode::Threshold: os << "threshold:" << threshold; break;
    }
    return os.str();
  }

  bool operator==(const TruncationPolicy &) const = default;
};

struct LeastSquaresReport
{
  double residual_norm = 0.0;
  double solution_norm = 0.0;
  Index effective_rank = 0;
  Vector singular_values;  // descending, all of them
};

struct LeastSquaresSolution
{
  Matrix coefficients;  // p x m
  LeastSquaresReport report;
};

struct LCurvePoint
{
  Index rank = 0;
  double residual_norm = 0.0;
  double solution_norm = 0.0;
};

/// SVD of the data matrix, reusable across targets and truncation levels.
class TruncatedSvdSolver
{
public:
  explicit TruncatedSvdSolver(const Eigen::Ref<const Matrix> &Z) : rows_(Z.rows()), cols_(Z.cols())
  {
    if (rows_ == 0 || cols_ == 0)
    {
      throw DataError("least squares: empty data matrix (" + detail::dims(rows_, cols_) + ")");
    }
    if (!Z.allFinite())
    {
      throw NumericError("least squares: data matrix contains non-finite entries");
    }
    Eigen::BDCSVD<Matrix> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    left_ = svd.matrixU();
    right_ = svd.matrixV();
    sigma_ = svd.singularValues();

    const double eps = std::numeric_limits<double>::epsilon();
    const double cutoff = sigma_.size() > 0 ? sigma_(0) * eps * static_cast<double>(std::max(rows_, cols_)) : 0.0;
    numerical_rank_ = 0;
    while (numerical_rank_ < sigma_.size() && sigma_(numerical_rank_) > cutoff)
    {
      ++numerical_rank_;
    }
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index max_rank() const noexcept { return std::min(rows_, cols_); }
  Index numerical_rank() const noexcept { return numerical_rank_; }
  const Vector &singular_values() const noexcept { return sigma_; }

  /// Number of singular triplets the policy keeps, clipped to the numerical rank.
  Index rank_for(const TruncationPolicy &policy) const
  {
    switch (policy.mode)
    {
    case TruncationPolicy::Mode::None: return numerical_rank_;
    case TruncationPolicy::Mode::Rank:
      if (policy.rank < 1 || policy.rank > max_rank())
      {
        throw ConfigError("least squares: truncation rank " + std::to_string(policy.rank) +
                          " outside [1, " + std::to_string(max_rank()) + "]");
      }
      return std::min(policy.rank, numerical_rank_);
    case TruncationPolicy::Mode::Threshold:
    {
      if (!(policy.threshold >= 0.0 && policy.threshold < 1.0))
      {
        throw ConfigError("least squares: threshold must lie in [0, 1)");
      }
      Index kept = 0;
      const double cut = policy.threshold * sigma_(0);
      while (kept < numerical_rank_ && sigma_(kept) >= cut)
      {
        ++kept;
      }
      return kept;
    }
    }
    return numerical_rank_;
  }

  LeastSquaresSolution solve(const Eigen::Ref<const Matrix> &Y, const TruncationPolicy &policy) const
  {
    check_targets(Y);
    const Index tau = rank_for(policy);
    const Matrix projected = Y * right_.leftCols(numerical_rank_);  // columns Y w_i

    LeastSquaresSolution out;
    out.coefficients = (projected.leftCols(tau) * sigma_.head(tau).cwiseInverse().asDiagonal()) *
                       left_.leftCols(tau).transpose();
    const Vector energy = projected.colwise().squaredNorm().transpose();
    out.report.residual_norm = std::sqrt(out_of_range_energy(Y, projected) + energy.segment(tau, numerical_rank_ - tau).sum());
    out.report.solution_norm = out.coefficients.norm();
    out.report.effective_rank = tau;
    out.report.singular_values = sigma_;
    return out;
  }

  /// Residual and solution norms for each requested rank, from the one factorization.
  std::vector<LCurvePoint> lcurve(const Eigen::Ref<const Matrix> &Y, const std::vector<Index> &ranks) const
  {
    check_targets(Y);
    for (Index r : ranks)
    {
      if (r < 1 || r > max_rank())
      {
        throw ConfigError("lcurve: rank " + std::to_string(r) + " outside [1, " + std::to_string(max_rank()) + "]");
      }
    }
    const Matrix projected = Y * right_.leftCols(numerical_rank_);
    const Vector energy = projected.colwise().squaredNorm().transpose();
    const double base = out_of_range_energy(Y, projected);

    // Suffix sums of discarded energy and prefix sums of coefficient energy keep
    // both curves monotone in floating point.
    Vector discarded = Vector::Zero(numerical_rank_ + 1);
    for (Index i = numerical_rank_ - 1; i >= 0; --i)
    {
      discarded(i) = discarded(i + 1) + energy(i);
    }
    Vector kept = Vector::Zero(numerical_rank_ + 1);
    for (Index i = 0; i < numerical_rank_; ++i)
    {
      kept(i + 1) = kept(i) + energy(i) / (sigma_(i) * sigma_(i));
    }

    std::vector<LCurvePoint> points;
    points.reserve(ranks.size());
    for (Index r : ranks)
    {
      const Index tau = std::min(r, numerical_rank_);
      points.push_back({r, std::sqrt(base + discarded(tau)), std::sqrt(kept(tau))});
    }
    return points;
  }

private:
  void check_targets(const Eigen::Ref<const Matrix> &Y) const
  {
    if (Y.cols() != cols_)
    {
      throw DataError("least squares: targets have " + std::to_string(Y.cols()) + " columns, data has " +
                      std::to_string(cols_));
    }
    if (!Y.allFinite())
    {
      throw NumericError("least squares: targets contain non-finite entries");
    }
  }

  /// || Y - Y W W^T ||_F^2 over the numerical range W, computed directly.
  double out_of_range_energy(const Eigen::Ref<const Matrix> &Y, const Matrix &projected) const
  {
    return (Y - projected * right_.leftCols(numerical_rank_).transpose()).squaredNorm();
  }

  Index rows_;
  Index cols_;
  Index numerical_rank_ = 0;
  Matrix left_;
  Matrix right_;
  Vector sigma_;
};

inline LeastSquaresSolution solve_truncated_lstsq(const Eigen::Ref<const Matrix> &Z, const Eigen::Ref<const Matrix> &Y,
                                                  const TruncationPolicy &policy)
{
  return TruncatedSvdSolver(Z).solve(Y, policy);
}

inline std::vector<LCurvePoint> lcurve_scan(const Eigen::Ref<const Matrix> &Z, const Eigen::Ref<const Matrix> &Y,
                                            const std::vector<Index> &ranks)
{
  return TruncatedSvdSolver(Z).lcurve(Y, ranks);
}

}  // namespace qmrom::regression

#endif  // QMROM_REGRESSION_HPP
