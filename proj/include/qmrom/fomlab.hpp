// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_FOMLAB_HPP
#define QMROM_FOMLAB_HPP

#include "qmrom/core.hpp"
#include "qmrom/manifold.hpp"
#include "qmrom/opinf.hpp"
#include "qmrom/romsim.hpp"
#include "qmrom/snapshots.hpp"
#include "qmrom/tensorops.hpp"

#include <Eigen/QR>
#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

/**
 * Desk-scale full-order models x' = A x + H(x (x) x) + B, their reference
 * integrator, and synthetic data lifted from a known reduced model.
 */
namespace qmrom::fomlab
{

struct QuadraticFom
{
  Index n = 0;
  std::function<Vector(const Vector &)> apply_linear;     // x -> A x
  std::function<Vector(const Vector &)> apply_quadratic;  // x -> H (x (x) x), matrix-free
  Vector B;
  std::string description;

  Vector rhs(const Vector &x) const { return apply_linear(x) + apply_quadratic(x) + B; }
};

/// Portable seeded stream: mt19937_64 bits mapped to [-1, 1) without library distributions.
class SeededRng
{
public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53 * 2.0 - 1.0; }

  Matrix matrix(Index rows, Index cols)
  {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
    {
      for (Index i = 0; i < rows; ++i)
      {
        m(i, j) = uniform();
      }
    }
    return m;
  }

  Vector vector(Index size) { return matrix(size, 1).col(0); }

private:
  std::mt19937_64 engine_;
};

/// Periodic viscous Burgers u' = -u .* (D1 u) + nu D2 u with central differences.
inline QuadraticFom make_burgers_fom(Index n, double nu, double length = 1.0)
{
  if (n < 8)
  {
    throw ConfigError("make_burgers_fom: need n >= 8, got " + std::to_string(n));
  }
  if (!(nu >= 0.0))
  {
    throw ConfigError("make_burgers_fom: viscosity must be nonnegative");
  }
  if (!(length > 0.0))
  {
    throw ConfigError("make_burgers_fom: domain length must be positive");
  }
  const double dx = length / static_cast<double>(n);
  QuadraticFom fom;
  fom.n = n;
  fom.B = Vector::Zero(n);
  fom.apply_linear = [n, c = nu / (dx * dx)](const Vector &u) {
    Vector out(n);
    for (Index i = 0; i < n; ++i)
    {
      const Index lo = i == 0 ? n - 1 : i - 1;
      const Index hi = i == n - 1 ? 0 : i + 1;
      out(i) = c * (u(hi) - 2.0 * u(i) + u(lo));
    }
    return out;
  };
  fom.apply_quadratic = [n, c = 0.5 / dx](const Vector &u) {
    Vector out(n);
    for (Index i = 0; i < n; ++i)
    {
      const Index lo = i == 0 ? n - 1 : i - 1;
      const Index hi = i == n - 1 ? 0 : i + 1;
      out(i) = -u(i) * c * (u(hi) - u(lo));
    }
    return out;
  };
  fom.description = "burgers n=" + std::to_string(n) + " nu=" + std::to_string(nu) + " L=" + std::to_string(length);
  return fom;
}

/// u0(x) = offset + amplitude sin(2 pi x / L) plus two seeded low-mode perturbations.
inline Vector burgers_initial_condition(Index n, double length, double offset, double amplitude, std::uint64_t seed)
{
  SeededRng rng(seed);
  const double a2 = 0.25 * amplitude * rng.uniform();
  const double p2 = std::numbers::pi * rng.uniform();
  const double a3 = 0.125 * amplitude * rng.uniform();
  const double p3 = std::numbers::pi * rng.uniform();
  Vector u(n);
  for (Index i = 0; i < n; ++i)
  {
    const double x = length * static_cast<double>(i) / static_cast<double>(n);
    const double w = 2.0 * std::numbers::pi * x / length;
    u(i) = offset + amplitude * std::sin(w) + a2 * std::sin(2.0 * w + p2) + a3 * std::sin(3.0 * w + p3);
  }
  return u;
}

/// A = -I + (R - R^T)/2, H = quad_scale * Hc s(x), B seeded; everything from one seed.
inline QuadraticFom make_random_stable_quad_fom(Index n, std::uint64_t seed, double quad_scale)
{
  if (n < 2)
  {
    throw ConfigError("make_random_stable_quad_fom: need n >= 2");
  }
  SeededRng rng(seed);
  const Matrix R = rng.matrix(n, n);
  const Matrix A = -Matrix::Identity(n, n) + 0.5 * (R - R.transpose());
  const Matrix Hc = quad_scale * rng.matrix(n, tensorops::half_dim(n)) / static_cast<double>(n);
  QuadraticFom fom;
  fom.n = n;
  fom.B = rng.vector(n);
  fom.apply_linear = [A](const Vector &x) { return Vector(A * x); };
  fom.apply_quadratic = [Hc](const Vector &x) { return Vector(Hc * tensorops::quad_features(x)); };
  fom.description = "random-stable-quadratic n=" + std::to_string(n) + " seed=" + std::to_string(seed);
  return fom;
}

/// The dense linear operator of a FOM, recovered column by column.
inline Matrix linear_operator(const QuadraticFom &fom)
{
  Matrix A(fom.n, fom.n);
  for (Index j = 0; j < fom.n; ++j)
  {
    A.col(j) = fom.apply_linear(Vector::Unit(fom.n, j));
  }
  return A;
}

struct Tolerances
{
  double rtol = 1e-10;
  double atol = 1e-12;
};

class FomIntegrationError : public NumericError
{
public:
  FomIntegrationError(const std::string &what, double last_valid_time)
      : NumericError(what), last_valid_time_(last_valid_time)
  {
  }
  double last_valid_time() const noexcept { return last_valid_time_; }

private:
  double last_valid_time_;
};

/// Adaptive Dormand-Prince run sampled on the grid; exact derivatives are the rhs at each sample.
inline snapshots::SnapshotSet integrate_fom(const QuadraticFom &fom, const Eigen::Ref<const Vector> &x0,
                                            const Eigen::Ref<const Vector> &grid, const Tolerances &tol = {},
                                            std::string label = {})
{
  namespace odeint = boost::numeric::odeint;
  using State = std::vector<double>;
  detail::require_dims(x0.size() == fom.n, "integrate_fom", "initial state length vs n");
  if (!x0.allFinite())
  {
    throw ConfigError("integrate_fom: non-finite initial state");
  }
  for (Index j = 1; j < grid.size(); ++j)
  {
    if (!(grid(j) > grid(j - 1)))
    {
      throw ConfigError("integrate_fom: grid not strictly increasing");
    }
  }
  const Index n = fom.n;
  Matrix X(n, grid.size());
  Matrix dX(n, grid.size());
  Index stored = 0;
  auto system = [&](const State &x, State &dxdt, double) {
    const Vector f = fom.rhs(Eigen::Map<const Vector>(x.data(), n));
    Eigen::Map<Vector>(dxdt.data(), n) = f;
  };
  auto observer = [&](const State &x, double t) {
    const Eigen::Map<const Vector> xv(x.data(), n);
    if (!xv.allFinite())
    {
      throw FomIntegrationError("integrate_fom: state became non-finite before t = " + std::to_string(t),
                                stored > 0 ? grid(stored - 1) : grid(0));
    }
    X.col(stored) = xv;
    dX.col(stored) = fom.rhs(xv);
    ++stored;
  };
  State x(x0.data(), x0.data() + n);
  std::vector<double> times(grid.data(), grid.data() + grid.size());
  const double dt0 = grid.size() > 1 ? (grid(1) - grid(0)) / 10.0 : 1e-3;
  try
  {
    odeint::integrate_times(odeint::make_dense_output(tol.atol, tol.rtol, odeint::runge_kutta_dopri5<State>()), system,
                            x, times.begin(), times.end(), dt0, observer);
  }
  catch (const odeint::odeint_error &e)
  {
    throw FomIntegrationError(std::string("integrate_fom: ") + e.what(), stored > 0 ? grid(stored - 1) : grid(0));
  }
  return {grid, std::move(X), std::move(dX), label.empty() ? fom.description : std::move(label)};
}

/// Orthonormal V (sign convention applied) and omega_c orthogonal to span(V).
inline manifold::QuadDecoder make_random_decoder(Index n, Index r, std::uint64_t seed, double omega_scale)
{
  if (r < 1 || r > n)
  {
    throw ConfigError("make_random_decoder: need 1 <= r <= n");
  }
  SeededRng rng(seed);
  const Eigen::HouseholderQR<Matrix> qr(rng.matrix(n, r));
  manifold::PodBasis basis;
  basis.V = qr.householderQ() * Matrix::Identity(n, r);
  manifold::apply_sign_convention(basis.V);
  basis.singular_values = Vector::Ones(r);
  basis.offset = Vector::Zero(n);
  Matrix omega = omega_scale * rng.matrix(n, tensorops::half_dim(r));
  omega -= basis.V * (basis.V.transpose() * omega);
  return {std::move(basis), std::move(omega)};
}

/// Damped oscillatory reduced operators: A1 = -damping I + skew, small quadratic and bias terms.
inline opinf::QuadOperators make_random_reduced_operators(Index r, std::uint64_t seed, double damping,
                                                          double quad_scale, double bias_scale)
{
  SeededRng rng(seed);
  const Matrix R = rng.matrix(r, r);
  opinf::QuadOperators ops;
  ops.A1 = -damping * Matrix::Identity(r, r) + (R - R.transpose());
  ops.A2c = quad_scale * rng.matrix(r, tensorops::half_dim(r));
  ops.B1 = bias_scale * rng.vector(r);
  return ops;
}

struct LiftedTruth
{
  snapshots::SnapshotSet data;
  romsim::RomTrajectory reduced;
  Matrix reduced_derivatives;
};

/**
 * Integrates the reduced system exactly as romsim does, then lifts it:
 * x_j = decode(q_j), dx_j = J(q_j) dq_j with dq_j the reduced right-hand side.
 */
inline LiftedTruth make_lifted_truth(std::shared_ptr<const manifold::QuadDecoder> dec, const opinf::QuadOperators &ops,
                                     const Eigen::Ref<const Vector> &q0, const Eigen::Ref<const Vector> &grid,
                                     const romsim::IntegratorConfig &config = {})
{
  opinf::ReducedQuadModel model{ops, dec, {}};
  model.validate();
  LiftedTruth out;
  out.reduced = romsim::integrate(model, q0, grid, config);
  const romsim::ReducedRhs rhs(model, config.spd_tolerance);
  out.reduced_derivatives.resize(dec->r(), grid.size());
  Matrix dX(dec->n(), grid.size());
  for (Index j = 0; j < grid.size(); ++j)
  {
    out.reduced_derivatives.col(j) = rhs(out.reduced.Q.col(j));
    dX.col(j) = dec->jacobian(out.reduced.Q.col(j)) * out.reduced_derivatives.col(j);
  }
  out.data = snapshots::SnapshotSet(grid, dec->decode_batch(out.reduced.Q), std::move(dX), "lifted-truth");
  return out;
}

}  // namespace qmrom::fomlab

#endif  // QMROM_FOMLAB_HPP
