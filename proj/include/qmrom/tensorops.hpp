// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_TENSOROPS_HPP
#define QMROM_TENSOROPS_HPP

#include "qmrom/core.hpp"

#include <cmath>
#include <utility>
#include <vector>

/**
 * Duplication-free quadratic features.
 *
 * For q in R^r the Kronecker square q (x) q has r^2 entries but only r(r+1)/2
 * distinct ones. Every quadratic map Omega (q (x) q) with Omega in R^{n x r^2}
 * is realized by a compressed operator acting on s(q), the vector of products
 * q_i q_j with i <= j in lexicographic order. All modules share that layout.
 */
namespace qmrom::tensorops
{

/// r(r+1)/2, the number of distinct entries of q (x) q.
inline Index half_dim(Index r)
{
  if (r < 1)
  {
    throw ConfigError("half_dim: reduced dimension must be positive, got " + std::to_string(r));
  }
  return r * (r + 1) / 2;
}

/// Lexicographic index set {(i,j) : 0 <= i <= j < r}.
class QuadFeatureLayout
{
public:
  explicit QuadFeatureLayout(Index r) : r_(r), half_dim_(tensorops::half_dim(r))
  {
    pairs_.reserve(static_cast<std::size_t>(half_dim_));
    for (Index i = 0; i < r_; ++i)
    {
      for (Index j = i; j < r_; ++j)
      {
        pairs_.emplace_back(i, j);
      }
    }
  }

  Index r() const noexcept { return r_; }
  Index half_dim() const noexcept { return half_dim_; }
  const std::vector<std::pair<Index, Index>> &pairs() const noexcept { return pairs_; }

  /// Position of the product q_i q_j; the arguments may come in either order.
  Index index_of(Index i, Index j) const
  {
    if (i > j)
    {
      std::swap(i, j);
    }
    if (i < 0 || j >= r_)
    {
      throw ConfigError("QuadFeatureLayout::index_of: pair out of range");
    }
    return i * r_ - i * (i - 1) / 2 + (j - i);
  }

  std::pair<Index, Index> pair_of(Index m) const
  {
    if (m < 0 || m >= half_dim_)
    {
      throw ConfigError("QuadFeatureLayout::pair_of: feature index out of range");
    }
    return pairs_[static_cast<std::size_t>(m)];
  }

  /// Identifier written to persisted artifacts so readers can check compatibility.
  static constexpr const char *order_marker() { return "lex-upper"; }

private:
  Index r_;
  Index half_dim_;
  std::vector<std::pair<Index, Index>> pairs_;
};

/// Entry i*m + j of the result is q_i p_j.
inline Vector kron_vec(const Eigen::Ref<const Vector> &q, const Eigen::Ref<const Vector> &p)
{
  const Index m = p.size();
  Vector out(q.size() * m);
  for (Index i = 0; i < q.size(); ++i)
  {
    out.segment(i * m, m) = q(i) * p;
  }
  return out;
}

inline Vector quad_features(const Eigen::Ref<const Vector> &q)
{
  const Index r = q.size();
  Vector s(r * (r + 1) / 2);
  Index m = 0;
  for (Index i = 0; i < r; ++i)
  {
    for (Index j = i; j < r; ++j)
    {
      s(m++) = q(i) * q(j);
    }
  }
  return s;
}

/// Column j of the result is quad_features(Q.col(j)).
inline Matrix quad_features_batch(const Eigen::Ref<const Matrix> &Q)
{
  const Index r = Q.rows();
  Matrix S(r * (r + 1) / 2, Q.cols());
  for (Index c = 0; c < Q.cols(); ++c)
  {
    Index m = 0;
    for (Index i = 0; i < r; ++i)
    {
      for (Index j = i; j < r; ++j)
      {
        S(m++, c) = Q(i, c) * Q(j, c);
      }
    }
  }
  return S;
}

/// Differential of s at q: row (i,j) holds d(q_i q_j)/dq.
inline Matrix quad_features_jacobian(const Eigen::Ref<const Vector> &q)
{
  const Index r = q.size();
  Matrix D = Matrix::Zero(r * (r + 1) / 2, r);
  Index m = 0;
  for (Index i = 0; i < r; ++i)
  {
    for (Index j = i; j < r; ++j)
    {
      D(m, i) += q(j);
      D(m, j) += q(i);
      ++m;
    }
  }
  return D;
}

/// Column (i,i) is kept; column (i,j), i<j, is the sum of the Kronecker
/// columns i*r+j and j*r+i. Then omega * kron(q,q) == result * s(q).
inline Matrix compress_operator(const Eigen::Ref<const Matrix> &omega)
{
  const auto r = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(omega.cols()))));
  if (r < 1 || r * r != omega.cols())
  {
    throw DataError("compress_operator: column count " + std::to_string(omega.cols()) +
                    " is not a positive perfect square");
  }
  Matrix out(omega.rows(), r * (r + 1) / 2);
  Index m = 0;
  for (Index i = 0; i < r; ++i)
  {
    out.col(m++) = omega.col(i * r + i);
    for (Index j = i + 1; j < r; ++j)
    {
      out.col(m++) = omega.col(i * r + j) + omega.col(j * r + i);
    }
  }
  return out;
}

}  // namespace qmrom::tensorops

#endif  // QMROM_TENSOROPS_HPP
