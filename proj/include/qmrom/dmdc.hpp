// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_DMDC_HPP
#define QMROM_DMDC_HPP

#include "qmrom/core.hpp"
#include "qmrom/manifold.hpp"
#include "qmrom/regression.hpp"
#include "qmrom/romsim.hpp"

#include <cmath>
#include <memory>
#include <string>

// Baseline: dynamic mode decomposition with a bias term, q_{j+1} = Ad q_j + bd,
// fitted in POD coordinates.
namespace qmrom::dmdc
{

struct DmdcModel
{
  Matrix Ad;
  Vector bd;
  double dt = 0.0;
  double t0 = 0.0;
  std::shared_ptr<const manifold::PodBasis> basis;  // may be null for purely reduced use
  regression::LeastSquaresReport report;

  Index r() const noexcept { return Ad.rows(); }
};

/// Largest |dt_j - mean dt| / mean dt over the grid.
inline double spacing_deviation(const Eigen::Ref<const Vector> &times)
{
  const Index k = times.size();
  const Vector gaps = times.tail(k - 1) - times.head(k - 1);
  const double mean = gaps.mean();
  return (gaps.array() - mean).abs().maxCoeff() / mean;
}

inline DmdcModel fit_dmdc(const Eigen::Ref<const Matrix> &Q, const Eigen::Ref<const Vector> &times,
                          const regression::TruncationPolicy &policy = regression::TruncationPolicy::none())
{
  const Index k = Q.cols();
  const Index r = Q.rows();
  if (k < 2)
  {
    throw DataError("fit_dmdc: need at least 2 snapshots");
  }
  detail::require_dims(times.size() == k, "fit_dmdc", "time stamps vs snapshots");
  const double deviation = k > 2 ? spacing_deviation(times) : 0.0;
  if (!(deviation <= 1e-10))
  {
    throw DataError("fit_dmdc: time grid is not uniform (relative spacing deviation " + std::to_string(deviation) + ")");
  }

  Matrix Z(r + 1, k - 1);
  Z.topRows(r) = Q.leftCols(k - 1);
  Z.bottomRows(1).setOnes();
  auto solution = regression::solve_truncated_lstsq(Z, Q.rightCols(k - 1), policy);

  DmdcModel model;
  model.Ad = solution.coefficients.leftCols(r);
  model.bd = solution.coefficients.col(r);
  model.dt = (times(k - 1) - times(0)) / static_cast<double>(k - 1);
  model.t0 = times(0);
  model.report = std::move(solution.report);
  return model;
}

/// Iterates q_{j+1} = Ad q_j + bd; times are t0 + j dt.
inline romsim::RomTrajectory simulate_dmdc(const DmdcModel &model, const Eigen::Ref<const Vector> &q0, Index steps)
{
  if (steps < 0)
  {
    throw ConfigError("simulate_dmdc: negative step count");
  }
  detail::require_dims(q0.size() == model.r(), "simulate_dmdc", "q0 length vs r");
  romsim::RomTrajectory traj;
  traj.times.resize(steps + 1);
  traj.Q.resize(model.r(), steps + 1);
  traj.mass_condition = Vector::Ones(steps + 1);
  Vector q = q0;
  for (Index j = 0; j <= steps; ++j)
  {
    traj.times(j) = model.t0 + static_cast<double>(j) * model.dt;
    if (!q.allFinite())
    {
      romsim::RomTrajectory partial{traj.times.head(j), traj.Q.leftCols(j), traj.mass_condition.head(j)};
      throw romsim::IntegrationError("simulate_dmdc: non-finite iterate at index " + std::to_string(j) +
                                         " (last valid index " + std::to_string(j - 1) + ")",
                                     j > 0 ? traj.times(j - 1) : model.t0, std::move(partial));
    }
    traj.Q.col(j) = q;
    q = model.Ad * q + model.bd;
  }
  return traj;
}

/// One-step residual || Q+ - Ad Q- - bd 1^T ||_F on given data.
inline double one_step_residual(const DmdcModel &model, const Eigen::Ref<const Matrix> &Q)
{
  const Index k = Q.cols();
  Matrix pred = model.Ad * Q.leftCols(k - 1);
  pred.colwise() += model.bd;
  return (Q.rightCols(k - 1) - pred).norm();
}

}  // namespace qmrom::dmdc

#endif  // QMROM_DMDC_HPP
