// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_MANIFOLD_HPP
#define QMROM_MANIFOLD_HPP

#include "qmrom/core.hpp"
#include "qmrom/regression.hpp"
#include "qmrom/tensorops.hpp"

#include <Eigen/SVD>

#include <optional>
#include <utility>

namespace qmrom::manifold
{

/// Orthonormal basis of the r leading left singular directions of the snapshots.
struct PodBasis
{
  Matrix V;                // n x r
  Vector singular_values;  // r leading, descending
  Vector offset;           // n; zero unless the snapshots were centered

  Index n() const noexcept { return V.rows(); }
  Index r() const noexcept { return V.cols(); }
};

/// Flips each column so its largest-magnitude entry (lowest index on ties) is positive.
inline void apply_sign_convention(Matrix &V)
{
  for (Index c = 0; c < V.cols(); ++c)
  {
    Index idx = 0;
    V.col(c).cwiseAbs().maxCoeff(&idx);
    if (V(idx, c) < 0.0)
    {
      V.col(c) *= -1.0;
    }
  }
}

inline PodBasis fit_pod(const Eigen::Ref<const Matrix> &X, Index r, bool center = false)
{
  if (r < 1 || r > std::min(X.rows(), X.cols()))
  {
    throw ConfigError("fit_pod: reduced dimension " + std::to_string(r) + " outside [1, " +
                      std::to_string(std::min(X.rows(), X.cols())) + "]");
  }
  if (!X.allFinite())
  {
    throw NumericError("fit_pod: snapshots contain non-finite entries");
  }
  PodBasis basis;
  basis.offset = center ? Vector(X.rowwise().mean()) : Vector::Zero(X.rows());
  const Matrix centered = X.colwise() - basis.offset;
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU);
  basis.V = svd.matrixU().leftCols(r);
  basis.singular_values = svd.singularValues().head(r);
  apply_sign_convention(basis.V);
  return basis;
}

/// q = V^T (x - offset), column-wise; a single state is an n x 1 matrix.
inline Matrix encode(const PodBasis &basis, const Eigen::Ref<const Matrix> &X)
{
  detail::require_dims(X.rows() == basis.n(), "encode",
                       "state rows " + std::to_string(X.rows()) + " vs basis n " + std::to_string(basis.n()));
  if (basis.offset.size() == 0)
  {
    return basis.V.transpose() * X;
  }
  return basis.V.transpose() * (X.colwise() - basis.offset);
}

/**
 * Quadratic decoder Gamma(q) = offset + V q + 1/2 * omega_c * s(q).
 *
 * omega_c is the compressed quadratic correction (n x r(r+1)/2). The full
 * n x r^2 tensor is never formed.
 */
class QuadDecoder
{
public:
  QuadDecoder(PodBasis basis, Matrix omega_c) : basis_(std::move(basis)), omega_c_(std::move(omega_c)), layout_(basis_.r())
  {
    if (omega_c_.rows() != basis_.n() || omega_c_.cols() != layout_.half_dim())
    {
      throw DataError("QuadDecoder: omega_c is " + detail::dims(omega_c_.rows(), omega_c_.cols()) + ", expected " +
                      detail::dims(basis_.n(), layout_.half_dim()));
    }
    if (basis_.offset.size() == 0)
    {
      basis_.offset = Vector::Zero(basis_.n());
    }
    if (basis_.offset.size() != basis_.n())
    {
      throw DataError("QuadDecoder: offset length does not match n");
    }
  }

  /// Pure POD decoder, omega_c = 0.
  static QuadDecoder linear(PodBasis basis)
  {
    const Index n = basis.n();
    const Index h = tensorops::half_dim(basis.r());
    return {std::move(basis), Matrix::Zero(n, h)};
  }

  Index n() const noexcept { return basis_.n(); }
  Index r() const noexcept { return basis_.r(); }
  const PodBasis &basis() const noexcept { return basis_; }
  const Matrix &V() const noexcept { return basis_.V; }
  const Matrix &omega_c() const noexcept { return omega_c_; }
  const tensorops::QuadFeatureLayout &layout() const noexcept { return layout_; }

  Vector decode(const Eigen::Ref<const Vector> &q) const
  {
    check(q, "decode");
    return basis_.offset + basis_.V * q + 0.5 * (omega_c_ * tensorops::quad_features(q));
  }

  Matrix decode_batch(const Eigen::Ref<const Matrix> &Q) const
  {
    detail::require_dims(Q.rows() == r(), "decode", "reduced rows " + std::to_string(Q.rows()) + " vs r " + std::to_string(r()));
    Matrix X = basis_.V * Q + 0.5 * (omega_c_ * tensorops::quad_features_batch(Q));
    X.colwise() += basis_.offset;
    return X;
  }

  /// J(q) = V + 1/2 * omega_c * D(q), the matrix of delta -> V delta + 1/2 (Omega(q x delta) + Omega(delta x q)).
  Matrix jacobian(const Eigen::Ref<const Vector> &q) const
  {
    check(q, "decoder_jacobian");
    return basis_.V + 0.5 * (omega_c_ * tensorops::quad_features_jacobian(q));
  }

  /// M_q = J(q)^T J(q).
  Matrix mass_matrix(const Eigen::Ref<const Vector> &q) const
  {
    const Matrix J = jacobian(q);
    return J.transpose() * J;
  }

private:
  void check(const Eigen::Ref<const Vector> &q, const char *what) const
  {
    detail::require_dims(q.size() == r(), what, "q has length " + std::to_string(q.size()) + ", r = " + std::to_string(r()));
  }

  PodBasis basis_;
  Matrix omega_c_;
  tensorops::QuadFeatureLayout layout_;
};

inline Vector decode(const QuadDecoder &dec, const Eigen::Ref<const Vector> &q) { return dec.decode(q); }
inline Matrix decoder_jacobian(const QuadDecoder &dec, const Eigen::Ref<const Vector> &q) { return dec.jacobian(q); }
inline Matrix mass_matrix(const QuadDecoder &dec, const Eigen::Ref<const Vector> &q) { return dec.mass_matrix(q); }

/**
 * Evaluates M_q = J^T J in reduced space from precomputed Gram blocks,
 * avoiding the n x r Jacobian on every call:
 *   M_q = V^T V + 1/2 (G D + (G D)^T) + 1/4 D^T W D,  G = V^T omega_c, W = omega_c^T omega_c.
 */
class MassMatrixKernel
{
public:
  explicit MassMatrixKernel(const QuadDecoder &dec)
      : vtv_(dec.V().transpose() * dec.V()), vto_(dec.V().transpose() * dec.omega_c()),
        oto_(dec.omega_c().transpose() * dec.omega_c()), quadratic_(dec.omega_c().squaredNorm() > 0.0)
  {
  }

  Index r() const noexcept { return vtv_.rows(); }

  Matrix operator()(const Eigen::Ref<const Vector> &q) const
  {
    if (!quadratic_)
    {
      return vtv_;
    }
    const Matrix D = tensorops::quad_features_jacobian(q);
    const Matrix GD = vto_ * D;
    return vtv_ + 0.5 * (GD + GD.transpose()) + 0.25 * (D.transpose() * (oto_ * D));
  }

private:
  Matrix vtv_;
  Matrix vto_;
  Matrix oto_;
  bool quadratic_;
};

inline Matrix offset_columns(const PodBasis &basis, Index k)
{
  if (basis.offset.size() == 0)
  {
    return Matrix::Zero(basis.n(), k);
  }
  return basis.offset.replicate(1, k);
}

struct ManifoldFitReport
{
  double pod_residual = 0.0;   // || X - offset - V Q ||_F
  double quad_residual = 0.0;  // || X - offset - V Q - 1/2 omega_c S ||_F
  Index truncation_used = 0;
  Vector singular_values;      // of the feature matrix S
  double snapshot_norm = 0.0;  // || X ||_F
};

/**
 * Fits omega_c as the truncated minimum-norm minimizer of
 * || (X - V Q) - 1/2 omega_c S ||_F with Q = encode(X), S = s(Q).
 */
inline std::pair<QuadDecoder, ManifoldFitReport> fit_quadratic_decoder(const Eigen::Ref<const Matrix> &X,
                                                                       const PodBasis &basis,
                                                                       const regression::TruncationPolicy &policy)
{
  if (X.cols() < 1)
  {
    throw DataError("fit_quadratic_decoder: no snapshots");
  }
  const Matrix Q = encode(basis, X);
  const Matrix linear_misfit = X - basis.V * Q - offset_columns(basis, X.cols());
  const Matrix S = tensorops::quad_features_batch(Q);
  const auto solution = regression::solve_truncated_lstsq(S, linear_misfit, policy);

  ManifoldFitReport report;
  report.pod_residual = linear_misfit.norm();
  report.quad_residual = solution.report.residual_norm;
  report.truncation_used = solution.report.effective_rank;
  report.singular_values = solution.report.singular_values;
  report.snapshot_norm = X.norm();
  return {QuadDecoder(basis, 2.0 * solution.coefficients), std::move(report)};
}

/// Linear decoder with the same report fields, for the omega_c = 0 path.
inline std::pair<QuadDecoder, ManifoldFitReport> fit_linear_decoder(const Eigen::Ref<const Matrix> &X, const PodBasis &basis)
{
  const Matrix Q = encode(basis, X);
  ManifoldFitReport report;
  report.pod_residual = (X - basis.V * Q - offset_columns(basis, X.cols())).norm();
  report.quad_residual = report.pod_residual;
  report.snapshot_norm = X.norm();
  return {QuadDecoder::linear(basis), std::move(report)};
}

/// max_j || encode(decode(q_j)) - q_j ||, a left-inverse diagnostic.
inline double left_inverse_defect(const QuadDecoder &dec, const Eigen::Ref<const Matrix> &Q)
{
  const Matrix back = encode(dec.basis(), dec.decode_batch(Q));
  return (back - Q).colwise().norm().maxCoeff();
}

}  // namespace qmrom::manifold

#endif  // QMROM_MANIFOLD_HPP
