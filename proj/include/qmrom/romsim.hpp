// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_ROMSIM_HPP
#define QMROM_ROMSIM_HPP

#include "qmrom/core.hpp"
#include "qmrom/manifold.hpp"
#include "qmrom/opinf.hpp"
#include "qmrom/snapshots.hpp"

#include <Eigen/Cholesky>
#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace qmrom::romsim
{

struct IntegratorConfig
{
  enum class Method
  {
    Rk4Fixed,
    Rk45Adaptive
  };

  Method method = Method::Rk4Fixed;
  double step = 0.0;  // RK4 step; <= 0 selects (smallest grid spacing) / 10
  double rtol = 1e-9;
  double atol = 1e-12;
  double max_step = 0.0;  // RK45 only; <= 0 means unbounded
  double spd_tolerance = 1e-14;  // smallest accepted min/max Cholesky pivot ratio

  void validate() const
  {
    if (!(rtol > 0.0) || !(atol > 0.0))
    {
      throw ConfigError("IntegratorConfig: tolerances must be positive");
    }
    if (!(spd_tolerance > 0.0))
    {
      throw ConfigError("IntegratorConfig: spd_tolerance must be positive");
    }
  }
};

/// Reduced states on a time grid. mass_condition holds max/min Cholesky pivot per sample.
struct RomTrajectory
{
  Vector times;
  Matrix Q;
  Vector mass_condition;

  Index r() const noexcept { return Q.rows(); }
  Index size() const noexcept { return times.size(); }
};

/// The mass matrix lost definiteness at the reported state.
class SpdError : public NumericError
{
public:
  SpdError(const std::string &what, Vector q) : NumericError(what), q_(std::move(q)) {}
  const Vector &state() const noexcept { return q_; }

private:
  Vector q_;
};

/// Integration stopped early; partial() holds every grid sample reached before the failure.
class IntegrationError : public NumericError
{
public:
  IntegrationError(const std::string &what, double last_valid_time, RomTrajectory partial)
      : NumericError(what), last_valid_time_(last_valid_time), partial_(std::move(partial))
  {
  }

  double last_valid_time() const noexcept { return last_valid_time_; }
  const RomTrajectory &partial() const noexcept { return partial_; }

private:
  double last_valid_time_;
  RomTrajectory partial_;
};

namespace internal
{

struct NonFiniteState
{
};

}  // namespace internal

/// q -> M_q^{-1} (A1 q + A2c s(q) + B1), the mass system solved by Cholesky.
class ReducedRhs
{
public:
  ReducedRhs(const opinf::ReducedQuadModel &model, double spd_tolerance)
      : ops_(model.operators), mass_((model.validate(), *model.decoder)), spd_tolerance_(spd_tolerance)
  {
  }

  Index r() const noexcept { return ops_.r(); }

  Vector operator()(const Eigen::Ref<const Vector> &q) const
  {
    double cond = 0.0;
    return eval(q, cond);
  }

  /// Also returns the pivot-ratio condition estimate of M_q.
  Vector eval(const Eigen::Ref<const Vector> &q, double &condition) const
  {
    if (!q.allFinite())
    {
      throw internal::NonFiniteState{};
    }
    const Matrix M = mass_(q);
    const Eigen::LLT<Matrix> llt(M);
    const Vector pivots = llt.matrixLLT().diagonal();
    const double pmin = pivots.size() ? pivots.minCoeff() : 1.0;
    const double pmax = pivots.size() ? pivots.maxCoeff() : 1.0;
    if (llt.info() != Eigen::Success || !(pmin > 0.0) || (pmin * pmin) < spd_tolerance_ * (pmax * pmax))
    {
      std::ostringstream os;
      os << "mass matrix not positive definite at q = [" << q.transpose() << "]";
      throw SpdError(os.str(), q);
    }
    condition = (pmax * pmax) / (pmin * pmin);
    return llt.solve(ops_.evaluate(q));
  }

private:
  opinf::QuadOperators ops_;
  manifold::MassMatrixKernel mass_;
  double spd_tolerance_;
};

inline Vector rhs_reduced(const opinf::ReducedQuadModel &model, const Eigen::Ref<const Vector> &q,
                          double spd_tolerance = IntegratorConfig{}.spd_tolerance)
{
  detail::require_dims(q.size() == model.r(), "rhs_reduced", "q length vs r");
  try
  {
    return ReducedRhs(model, spd_tolerance)(q);
  }
  catch (const internal::NonFiniteState &)
  {
    throw NumericError("rhs_reduced: non-finite state");
  }
}

namespace internal
{

inline void check_grid(const Eigen::Ref<const Vector> &grid)
{
  if (grid.size() < 1)
  {
    throw ConfigError("integrate: empty time grid");
  }
  for (Index j = 1; j < grid.size(); ++j)
  {
    if (!(grid(j) > grid(j - 1)))
    {
      throw ConfigError("integrate: time grid not strictly increasing at index " + std::to_string(j));
    }
  }
}

inline RomTrajectory head(const RomTrajectory &t, Index count)
{
  return {t.times.head(count), t.Q.leftCols(count), t.mass_condition.head(count)};
}

}  // namespace internal

/**
 * Integrates M_q dq/dt = A1 q + A2c s(q) + B1 from q0 and samples the
 * solution at exactly the requested grid points.
 */
inline RomTrajectory integrate(const opinf::ReducedQuadModel &model, const Eigen::Ref<const Vector> &q0,
                               const Eigen::Ref<const Vector> &grid, const IntegratorConfig &config = {})
{
  config.validate();
  internal::check_grid(grid);
  detail::require_dims(q0.size() == model.r(), "integrate", "q0 length vs r");
  if (!q0.allFinite())
  {
    throw ConfigError("integrate: non-finite initial state");
  }

  const ReducedRhs rhs(model, config.spd_tolerance);
  const Index r = model.r();
  RomTrajectory traj{grid, Matrix(r, grid.size()), Vector(grid.size())};
  Index stored = 0;

  auto fail = [&](const std::string &why) -> IntegrationError {
    const double last = stored > 0 ? traj.times(stored - 1) : grid(0);
    return IntegrationError("integrate: " + why + " after t = " + std::to_string(last), last, internal::head(traj, stored));
  };

  try
  {
    double cond = 0.0;
    rhs.eval(q0, cond);
    traj.Q.col(0) = q0;
    traj.mass_condition(0) = cond;
    stored = 1;

    if (config.method == IntegratorConfig::Method::Rk4Fixed)
    {
      double h = config.step;
      if (!(h > 0.0))
      {
        double min_gap = grid.size() > 1 ? (grid.tail(grid.size() - 1) - grid.head(grid.size() - 1)).minCoeff() : 1.0;
        h = min_gap / 10.0;
      }
      Vector q = q0;
      for (Index j = 1; j < grid.size(); ++j)
      {
        const double gap = grid(j) - grid(j - 1);
        const auto substeps = std::max<Index>(1, static_cast<Index>(std::ceil(gap / h - 1e-9)));
        const double dt = gap / static_cast<double>(substeps);
        for (Index s = 0; s < substeps; ++s)
        {
          const Vector k1 = rhs(q);
          const Vector k2 = rhs(q + 0.5 * dt * k1);
          const Vector k3 = rhs(q + 0.5 * dt * k2);
          const Vector k4 = rhs(q + dt * k3);
          q += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        rhs.eval(q, cond);  // also rejects non-finite q
        traj.Q.col(j) = q;
        traj.mass_condition(j) = cond;
        stored = j + 1;
      }
    }
    else
    {
      namespace odeint = boost::numeric::odeint;
      using State = std::vector<double>;
      auto system = [&](const State &x, State &dxdt, double) {
        const Vector out = rhs(Eigen::Map<const Vector>(x.data(), r));
        Eigen::Map<Vector>(dxdt.data(), r) = out;
      };
      auto observer = [&](const State &x, double) {
        const Eigen::Map<const Vector> q(x.data(), r);
        double c = 0.0;
        rhs.eval(q, c);
        traj.Q.col(stored) = q;
        traj.mass_condition(stored) = c;
        ++stored;
      };
      stored = 0;
      State x(q0.data(), q0.data() + r);
      const double max_dt = config.max_step > 0.0 ? config.max_step : 0.0;
      auto stepper = odeint::make_dense_output(config.atol, config.rtol, max_dt, odeint::runge_kutta_dopri5<State>());
      const double span = grid(grid.size() - 1) - grid(0);
      const double dt0 = grid.size() > 1 ? std::min(grid(1) - grid(0), span) / 10.0 : 1e-3;
      std::vector<double> times(grid.data(), grid.data() + grid.size());
      odeint::integrate_times(stepper, system, x, times.begin(), times.end(), dt0, observer);
    }
  }
  catch (const internal::NonFiniteState &)
  {
    throw fail("state became non-finite");
  }
  catch (const SpdError &e)
  {
    throw fail(e.what());
  }
  catch (const boost::numeric::odeint::odeint_error &e)
  {
    throw fail(std::string("adaptive stepper failed: ") + e.what());
  }
  return traj;
}

/// Full states x_j = decode(q_j) on the trajectory grid.
inline snapshots::SnapshotSet reconstruct(const manifold::QuadDecoder &dec, const RomTrajectory &traj,
                                          std::string label = "reconstruction")
{
  detail::require_dims(dec.r() == traj.r(), "reconstruct",
                       "decoder r " + std::to_string(dec.r()) + " vs trajectory r " + std::to_string(traj.r()));
  return {traj.times, dec.decode_batch(traj.Q), std::nullopt, std::move(label)};
}

}  // namespace qmrom::romsim

#endif  // QMROM_ROMSIM_HPP
