// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_OPINF_HPP
#define QMROM_OPINF_HPP

#include "qmrom/core.hpp"
#include "qmrom/manifold.hpp"
#include "qmrom/regression.hpp"
#include "qmrom/snapshots.hpp"
#include "qmrom/tensorops.hpp"

#include <map>
#include <memory>
#include <string>
#include <utility>

/**
 * Operator inference on a quadratic manifold.
 *
 * Given reduced states q_j and derivatives dq_j, fits
 *   M_{q} dq = A1 q + A2c s(q) + B1
 * where M_q is the decoder's mass matrix, by one row-form truncated
 * regression over the stacked features [q; s(q); 1].
 */
namespace qmrom::opinf
{

/// The affine-quadratic right-hand side, A2 kept in compressed form.
struct QuadOperators
{
  Matrix A1;   // r x r
  Matrix A2c;  // r x r(r+1)/2
  Vector B1;   // r

  Index r() const noexcept { return A1.rows(); }

  Vector evaluate(const Eigen::Ref<const Vector> &q) const
  {
    return A1 * q + A2c * tensorops::quad_features(q) + B1;
  }

  static QuadOperators zero(Index r)
  {
    return {Matrix::Zero(r, r), Matrix::Zero(r, tensorops::half_dim(r)), Vector::Zero(r)};
  }

  /// Rows of [A1 | A2c | B1] as one r x (r + half_dim + 1) block.
  Matrix stacked() const
  {
    Matrix G(r(), A1.cols() + A2c.cols() + 1);
    G << A1, A2c, B1;
    return G;
  }

  static QuadOperators from_stacked(const Eigen::Ref<const Matrix> &G, Index r)
  {
    const Index h = tensorops::half_dim(r);
    detail::require_dims(G.rows() == r && G.cols() == r + h + 1, "QuadOperators",
                         "stacked block is " + detail::dims(G.rows(), G.cols()));
    return {G.leftCols(r), G.middleCols(r, h), G.col(r + h)};
  }
};

struct OpInfReport
{
  double residual_norm = 0.0;
  double solution_norm = 0.0;
  Index effective_rank = 0;
  Vector singular_values;
  Vector per_snapshot_residuals;
};

/// Operators bound to the decoder that defines their mass matrix.
struct ReducedQuadModel
{
  QuadOperators operators;
  std::shared_ptr<const manifold::QuadDecoder> decoder;
  std::map<std::string, std::string> provenance;

  Index r() const noexcept { return operators.r(); }

  void validate() const
  {
    if (!decoder)
    {
      throw DataError("ReducedQuadModel: no decoder attached");
    }
    const Index r = operators.A1.rows();
    if (operators.A1.cols() != r || operators.A2c.rows() != r || operators.B1.size() != r ||
        operators.A2c.cols() != tensorops::half_dim(r) || decoder->r() != r)
    {
      throw DataError("ReducedQuadModel: operator shapes inconsistent with r = " + std::to_string(decoder->r()));
    }
  }
};

struct RegressionData
{
  Matrix Z;  // (r + half_dim + 1) x k: [Q; s(Q); 1]
  Matrix Y;  // r x k: columns M_{q_j} dq_j
};

inline Matrix regression_features(const Eigen::Ref<const Matrix> &Q)
{
  const Index r = Q.rows();
  const Index h = tensorops::half_dim(r);
  Matrix Z(r + h + 1, Q.cols());
  Z.topRows(r) = Q;
  Z.middleRows(r, h) = tensorops::quad_features_batch(Q);
  Z.bottomRows(1).setOnes();
  return Z;
}

inline RegressionData assemble_regression(const manifold::QuadDecoder &dec, const Eigen::Ref<const Matrix> &Q,
                                          const Eigen::Ref<const Matrix> &dotQ)
{
  detail::require_dims(Q.rows() == dec.r() && dotQ.rows() == dec.r() && Q.cols() == dotQ.cols(), "assemble_regression",
                       "Q " + detail::dims(Q.rows(), Q.cols()) + ", dotQ " + detail::dims(dotQ.rows(), dotQ.cols()) +
                           ", r = " + std::to_string(dec.r()));
  RegressionData data;
  data.Z = regression_features(Q);
  data.Y.resize(dec.r(), Q.cols());
  const manifold::MassMatrixKernel mass(dec);
  for (Index j = 0; j < Q.cols(); ++j)
  {
    data.Y.col(j) = mass(Q.col(j)) * dotQ.col(j);
  }
  return data;
}

/// Entry j is || Y_j - [A1 A2c B1] Z_j ||_2.
inline Vector residual_diagnostics(const QuadOperators &ops, const RegressionData &data)
{
  detail::require_dims(data.Z.cols() == data.Y.cols(), "residual_diagnostics", "Z and Y column counts differ");
  return (data.Y - ops.stacked() * data.Z).colwise().norm().transpose();
}

inline std::pair<QuadOperators, OpInfReport> infer_operators(const RegressionData &data,
                                                             const regression::TruncationPolicy &policy)
{
  const Index r = data.Y.rows();
  const Index h = tensorops::half_dim(r);
  detail::require_dims(data.Z.rows() == r + h + 1, "infer_operators",
                       "Z has " + std::to_string(data.Z.rows()) + " rows, expected " + std::to_string(r + h + 1));
  auto solution = regression::solve_truncated_lstsq(data.Z, data.Y, policy);
  QuadOperators ops = QuadOperators::from_stacked(solution.coefficients, r);

  OpInfReport report;
  report.residual_norm = solution.report.residual_norm;
  report.solution_norm = solution.report.solution_norm;
  report.effective_rank = solution.report.effective_rank;
  report.singular_values = std::move(solution.report.singular_values);
  report.per_snapshot_residuals = residual_diagnostics(ops, data);
  return {std::move(ops), std::move(report)};
}

/// Reduced derivatives: V^T times the stored exact derivatives, else finite differences of Q.
inline Matrix reduced_derivatives(const manifold::PodBasis &basis, const snapshots::SnapshotSet &set,
                                  const Eigen::Ref<const Matrix> &Q)
{
  if (set.has_derivatives())
  {
    return basis.V.transpose() * (*set.derivatives());
  }
  return snapshots::estimate_derivatives(Q, set.times());
}

struct OpInfFit
{
  ReducedQuadModel model;
  OpInfReport report;
  RegressionData data;
};

/// Encodes the training snapshots, assembles the regression, and solves it.
inline OpInfFit fit_operators(std::shared_ptr<const manifold::QuadDecoder> decoder, const snapshots::SnapshotSet &train,
                              const regression::TruncationPolicy &policy)
{
  const Matrix Q = manifold::encode(decoder->basis(), train.states());
  const Matrix dotQ = reduced_derivatives(decoder->basis(), train, Q);
  OpInfFit fit;
  fit.data = assemble_regression(*decoder, Q, dotQ);
  auto [ops, report] = infer_operators(fit.data, policy);
  fit.model.operators = std::move(ops);
  fit.model.decoder = std::move(decoder);
  fit.model.provenance["truncation"] = policy.describe();
  fit.model.provenance["derivatives"] = train.has_derivatives() ? "exact" : "finite-difference";
  fit.report = std::move(report);
  return fit;
}

}  // namespace qmrom::opinf

#endif  // QMROM_OPINF_HPP
