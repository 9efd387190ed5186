// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmrom/dmdc.hpp"
#include "qmrom/evaluate.hpp"
#include "qmrom/fomlab.hpp"
#include "qmrom/manifold.hpp"
#include "qmrom/opinf.hpp"
#include "qmrom/romsim.hpp"

#include "test_support.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>

using namespace qmrom;
using regression::TruncationPolicy;
using testkit::rel_diff;
using testkit::Rng;

namespace
{

std::shared_ptr<const manifold::QuadDecoder> make_decoder(Matrix V, Matrix omega)
{
  const Index r = V.cols();
  return std::make_shared<const manifold::QuadDecoder>(manifold::PodBasis{std::move(V), Vector::Ones(r), Vector()},
                                                       std::move(omega));
}

std::shared_ptr<const manifold::QuadDecoder> linear_decoder(Matrix V)
{
  Matrix omega = Matrix::Zero(V.rows(), tensorops::half_dim(V.cols()));
  return make_decoder(std::move(V), std::move(omega));
}

// Scalar model dq/dt = a q + b q^2 + c with identity decoder.
opinf::ReducedQuadModel scalar_model(double a, double b, double c)
{
  return {{Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b), Vector::Constant(1, c)}, linear_decoder(Matrix::Identity(1, 1)), {}};
}

double rk4_endpoint(double h, const opinf::ReducedQuadModel &model, double q0, double t1)
{
  romsim::IntegratorConfig cfg;
  cfg.step = h;
  return romsim::integrate(model, Vector::Constant(1, q0), Vector{{0.0, t1}}, cfg).Q(0, 1);
}

romsim::IntegratorConfig tight_rk45()
{
  romsim::IntegratorConfig cfg;
  cfg.method = romsim::IntegratorConfig::Method::Rk45Adaptive;
  cfg.rtol = 1e-12;
  cfg.atol = 1e-14;
  return cfg;
}

}  // namespace

// --- opinf ----------------------------------------------------------------------

TEST(Opinf, RegressionShapesAndLinearDecoder)
{
  Rng rng(1);
  const auto dec = linear_decoder(rng.orthonormal(6, 2));
  const Matrix Q = rng.matrix(2, 3);
  const Matrix dQ = rng.matrix(2, 3);
  const auto data = opinf::assemble_regression(*dec, Q, dQ);
  EXPECT_EQ(data.Z.rows(), 6);
  EXPECT_EQ(data.Z.cols(), 3);
  EXPECT_LE((data.Y - dQ).norm(), 1e-14);
  EXPECT_THROW(opinf::assemble_regression(*dec, Q, rng.matrix(2, 4)), DataError);
}

TEST(Opinf, RegressionTargetsMatchDenseMassMatrix)
{
  Rng rng(2);
  const auto dec = make_decoder(rng.orthonormal(10, 3), rng.matrix(10, 6));
  const Matrix Q = rng.matrix(3, 8);
  const Matrix dQ = rng.matrix(3, 8);
  const auto data = opinf::assemble_regression(*dec, Q, dQ);
  for (Index j = 0; j < 8; ++j)
  {
    const Matrix J = dec->jacobian(Q.col(j));
    EXPECT_LE((data.Y.col(j) - J.transpose() * J * dQ.col(j)).norm(), 1e-12 * (1 + data.Y.col(j).norm()));
  }
}

TEST(Opinf, ZeroTargetsGiveZeroOperators)
{
  Rng rng(3);
  const opinf::RegressionData data{opinf::regression_features(rng.matrix(3, 20)), Matrix::Zero(3, 20)};
  const auto [ops, report] = opinf::infer_operators(data, TruncationPolicy::none());
  EXPECT_EQ(ops.stacked(), Matrix::Zero(3, 10));
  EXPECT_EQ(report.residual_norm, 0.0);
}

TEST(Opinf, ResidualDiagnosticsDefinition)
{
  Rng rng(4);
  const opinf::RegressionData data{opinf::regression_features(rng.matrix(2, 12)), rng.matrix(2, 12)};
  const Vector zero_res = opinf::residual_diagnostics(opinf::QuadOperators::zero(2), data);
  for (Index j = 0; j < 12; ++j)
  {
    EXPECT_DOUBLE_EQ(zero_res(j), data.Y.col(j).norm());
  }
  const auto [ops, report] = opinf::infer_operators(data, TruncationPolicy::none());
  EXPECT_NEAR(report.per_snapshot_residuals.squaredNorm(), report.residual_norm * report.residual_norm,
              1e-10 * (1 + report.residual_norm * report.residual_norm));
}

TEST(Opinf, ExactRecoveryFromForwardSimulation)
{
  const Index r = 5;
  const auto truth = fomlab::make_random_reduced_operators(r, 7, 0.5, 0.2, 0.3);
  const auto dec = linear_decoder(Matrix::Identity(r, r));
  const opinf::ReducedQuadModel model{truth, dec, {}};
  const romsim::ReducedRhs rhs(model, 1e-14);
  Rng rng(5);
  Matrix Q(r, 0);
  Matrix dQ(r, 0);
  for (int traj = 0; traj < 3; ++traj)
  {
    const auto run = romsim::integrate(model, rng.vector(r), Vector::LinSpaced(80, 0.0, 4.0), tight_rk45());
    Matrix d(r, run.size());
    for (Index j = 0; j < run.size(); ++j)
    {
      d.col(j) = rhs(run.Q.col(j));
    }
    Q.conservativeResize(r, Q.cols() + run.size());
    dQ.conservativeResize(r, dQ.cols() + run.size());
    Q.rightCols(run.size()) = run.Q;
    dQ.rightCols(run.size()) = d;
  }
  const auto data = opinf::assemble_regression(*dec, Q, dQ);
  const auto [ops, report] = opinf::infer_operators(data, TruncationPolicy::none());
  EXPECT_LE(report.residual_norm, 1e-8);
  EXPECT_LE(report.per_snapshot_residuals.maxCoeff(), 1e-8);
  EXPECT_LE(rel_diff(ops.stacked(), truth.stacked()), 1e-6);
}

TEST(Opinf, FitOperatorsUsesExactDerivatives)
{
  Rng rng(6);
  const auto data = snapshots::SnapshotSet(Vector::LinSpaced(5, 0, 1), rng.matrix(4, 5), rng.matrix(4, 5));
  const auto dec = linear_decoder(rng.orthonormal(4, 2));
  const Matrix Q = manifold::encode(dec->basis(), data.states());
  EXPECT_LE((opinf::reduced_derivatives(dec->basis(), data, Q) - dec->V().transpose() * *data.derivatives()).norm(), 1e-14);
  const auto fd = snapshots::SnapshotSet(data.times(), data.states());
  EXPECT_EQ(opinf::reduced_derivatives(dec->basis(), fd, Q), snapshots::estimate_derivatives(Q, data.times()));
  const auto fit = opinf::fit_operators(dec, data, TruncationPolicy::none());
  EXPECT_EQ(fit.model.provenance.at("derivatives"), "exact");
  EXPECT_NO_THROW(fit.model.validate());
}

// --- romsim ---------------------------------------------------------------------

TEST(Romsim, RhsHandValues)
{
  EXPECT_DOUBLE_EQ(romsim::rhs_reduced(scalar_model(-1, 0, 0), Vector{{1}})(0), -1.0);
  const opinf::ReducedQuadModel curved{
      {Matrix{{1}}, Matrix{{-1}}, Vector::Zero(1)}, make_decoder(Matrix{{1}, {0}}, Matrix{{0}, {1}}), {}};
  EXPECT_NEAR(romsim::rhs_reduced(curved, Vector{{2}})(0), -0.4, 1e-15);
}

TEST(Romsim, RhsSolvesMassSystem)
{
  Rng rng(7);
  const Index r = 4;
  const opinf::ReducedQuadModel model{fomlab::make_random_reduced_operators(r, 8, 0.1, 0.5, 0.5),
                                      make_decoder(rng.orthonormal(12, r), 0.3 * rng.matrix(12, 10)), {}};
  for (int trial = 0; trial < 10; ++trial)
  {
    const Vector q = rng.vector(r);
    const Vector f = romsim::rhs_reduced(model, q);
    const Vector lhs = model.decoder->mass_matrix(q) * f;
    EXPECT_LE((lhs - model.operators.evaluate(q)).norm(), 1e-12 * (1 + lhs.norm()));
  }
}

TEST(Romsim, SingularMassMatrixIsRejected)
{
  // J = 1 + q vanishes at q = -1.
  const opinf::ReducedQuadModel model{{Matrix{{1}}, Matrix{{0}}, Vector::Zero(1)}, make_decoder(Matrix{{1}}, Matrix{{1}}), {}};
  EXPECT_THROW(romsim::rhs_reduced(model, Vector{{-1}}), romsim::SpdError);
  EXPECT_NO_THROW(romsim::rhs_reduced(model, Vector{{0.5}}));
}

TEST(Romsim, Rk4ExponentialDecay)
{
  EXPECT_NEAR(rk4_endpoint(0.01, scalar_model(-1, 0, 0), 1.0, 1.0), std::exp(-1.0), 1e-8);
}

TEST(Romsim, Rk4Logistic)
{
  EXPECT_NEAR(rk4_endpoint(0.01, scalar_model(1, -1, 0), 0.5, 1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-6);
}

TEST(Romsim, Rk4FourthOrder)
{
  const auto model = scalar_model(-1, 0, 0);
  const double e1 = std::abs(rk4_endpoint(0.1, model, 1.0, 1.0) - std::exp(-1.0));
  const double e2 = std::abs(rk4_endpoint(0.05, model, 1.0, 1.0) - std::exp(-1.0));
  EXPECT_GE(e1 / e2, 12.0);
  EXPECT_LE(e1 / e2, 20.0);
}

TEST(Romsim, SamplesExactlyOnGridAndDefaultStep)
{
  const auto model = scalar_model(-1, 0, 0);
  const Vector grid{{0.0, 0.1, 0.35, 1.0}};
  const auto traj = romsim::integrate(model, Vector{{1}}, grid);
  EXPECT_EQ(traj.times, grid);
  for (Index j = 0; j < grid.size(); ++j)
  {
    EXPECT_NEAR(traj.Q(0, j), std::exp(-grid(j)), 1e-9);
    EXPECT_GE(traj.mass_condition(j), 1.0);
  }
}

TEST(Romsim, AdaptiveMatchesAnalytic)
{
  const auto traj = romsim::integrate(scalar_model(1, -1, 0), Vector{{0.5}}, Vector::LinSpaced(11, 0, 1), tight_rk45());
  for (Index j = 0; j < 11; ++j)
  {
    const double t = traj.times(j);
    EXPECT_NEAR(traj.Q(0, j), 1.0 / (1.0 + std::exp(-t)), 1e-10);
  }
}

TEST(Romsim, ZeroRhsIsConstant)
{
  Rng rng(9);
  const opinf::ReducedQuadModel model{opinf::QuadOperators::zero(3), make_decoder(rng.orthonormal(8, 3), rng.matrix(8, 6)), {}};
  const Vector q0 = 0.1 * rng.vector(3);
  const auto traj = romsim::integrate(model, q0, Vector::LinSpaced(5, 0, 2));
  for (Index j = 0; j < 5; ++j)
  {
    EXPECT_EQ(Vector(traj.Q.col(j)), q0);
  }
}

TEST(Romsim, BlowUpReportsPartialTrajectory)
{
  // dq/dt = q^2 from 1 diverges at t = 1; the discrete solution may stay finite at that grid point.
  try
  {
    romsim::integrate(scalar_model(0, 1, 0), Vector{{1}}, Vector::LinSpaced(21, 0, 2));
    FAIL() << "expected divergence";
  }
  catch (const romsim::IntegrationError &e)
  {
    EXPECT_GE(e.last_valid_time(), 0.9);
    EXPECT_LE(e.last_valid_time(), 1.0);
    EXPECT_GE(e.partial().size(), 10);
    EXPECT_TRUE(e.partial().Q.allFinite());
    EXPECT_DOUBLE_EQ(e.partial().times(e.partial().size() - 1), e.last_valid_time());
  }
}

TEST(Romsim, RejectsBadGrids)
{
  const auto model = scalar_model(-1, 0, 0);
  EXPECT_THROW(romsim::integrate(model, Vector{{1}}, Vector{{0, 0}}), ConfigError);
  EXPECT_THROW(romsim::integrate(model, Vector{{1, 2}}, Vector{{0, 1}}), DataError);
}

TEST(Romsim, Reconstruct)
{
  Rng rng(10);
  const auto lin = linear_decoder(rng.orthonormal(7, 2));
  const romsim::RomTrajectory traj{Vector::LinSpaced(4, 0, 1), rng.matrix(2, 4), Vector::Ones(4)};
  EXPECT_LE((romsim::reconstruct(*lin, traj).states() - lin->V() * traj.Q).norm(), 1e-14);
  const romsim::RomTrajectory zero{traj.times, Matrix::Zero(2, 4), Vector::Ones(4)};
  EXPECT_EQ(romsim::reconstruct(*lin, zero).states(), Matrix::Zero(7, 4));
  const auto quad = make_decoder(rng.orthonormal(7, 2), rng.matrix(7, 3));
  const auto rec = romsim::reconstruct(*quad, traj);
  for (Index j = 0; j < 4; ++j)
  {
    EXPECT_EQ(Vector(rec.states().col(j)), quad->decode(traj.Q.col(j)));
  }
}

// --- dmdc -----------------------------------------------------------------------

TEST(Dmdc, ScalarAffineRecurrence)
{
  Matrix Q(1, 6);
  Q(0, 0) = 0;
  for (Index j = 1; j < 6; ++j)
  {
    Q(0, j) = 0.5 * Q(0, j - 1) + 1;
  }
  const auto m = dmdc::fit_dmdc(Q, Vector::LinSpaced(6, 0, 5));
  EXPECT_NEAR(m.Ad(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(m.bd(0), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.dt, 1.0);
}

TEST(Dmdc, LinearRampHandSolve)
{
  const auto m = dmdc::fit_dmdc(Matrix{{0, 1, 2, 3}}, Vector{{0, 1, 2, 3}});
  EXPECT_NEAR(m.Ad(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(m.bd(0), 1.0, 1e-12);
}

TEST(Dmdc, ZeroDataGivesZeroModel)
{
  const auto m = dmdc::fit_dmdc(Matrix::Zero(3, 10), Vector::LinSpaced(10, 0, 1));
  EXPECT_EQ(m.Ad, Matrix::Zero(3, 3));
  EXPECT_EQ(m.bd, Vector::Zero(3));
}

TEST(Dmdc, SimulateHandIteration)
{
  dmdc::DmdcModel m;
  m.Ad = Matrix{{0.5}};
  m.bd = Vector{{1}};
  m.dt = 1;
  const auto traj = dmdc::simulate_dmdc(m, Vector{{0}}, 3);
  EXPECT_EQ(traj.Q, (Matrix{{0, 1, 1.5, 1.75}}));
  m.Ad = Matrix::Identity(1, 1);
  m.bd = Vector::Zero(1);
  EXPECT_EQ(dmdc::simulate_dmdc(m, Vector{{2}}, 4).Q, Matrix::Constant(1, 5, 2.0));
}

TEST(Dmdc, SeededRecoveryAndClosure)
{
  Rng rng(11);
  for (Index r : {2, 4, 6})
  {
    const Matrix R = rng.matrix(r, r);
    const Matrix Ad = 0.9 * R / Eigen::EigenSolver<Matrix>(R).eigenvalues().cwiseAbs().maxCoeff();
    const Vector bd = rng.vector(r);
    const Index k = 4 * (r + 1);
    Matrix Q(r, k);
    Q.col(0) = rng.vector(r);
    for (Index j = 1; j < k; ++j)
    {
      Q.col(j) = Ad * Q.col(j - 1) + bd;
    }
    const Vector t = Vector::LinSpaced(k, 0.0, 0.1 * static_cast<double>(k - 1));
    const auto m = dmdc::fit_dmdc(Q, t);
    EXPECT_LE(rel_diff(m.Ad, Ad), 1e-8);
    EXPECT_LE(rel_diff(m.bd, bd), 1e-8);
    EXPECT_LE(dmdc::one_step_residual(m, Q), 1e-10);
    const auto sim = dmdc::simulate_dmdc(m, Q.col(0), k - 1);
    EXPECT_LE(rel_diff(sim.Q, Q), 1e-8);
    EXPECT_LE((sim.times - t).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Dmdc, RejectsNonuniformGridAndReportsDivergence)
{
  EXPECT_THROW(dmdc::fit_dmdc(Matrix::Ones(1, 4), Vector{{0, 1, 2, 4}}), DataError);
  dmdc::DmdcModel m;
  m.Ad = Matrix{{1e200}};
  m.bd = Vector::Zero(1);
  m.dt = 1;
  EXPECT_THROW(dmdc::simulate_dmdc(m, Vector{{1e200}}, 5), romsim::IntegrationError);
}

// --- evaluate -------------------------------------------------------------------

TEST(Evaluate, StateErrorSeries)
{
  const snapshots::SnapshotSet ref(Vector{{0}}, Matrix{{3}, {4}});
  const snapshots::SnapshotSet zero(Vector{{0}}, Matrix::Zero(2, 1));
  EXPECT_EQ(evaluate::state_error_series(ref, ref).values, Vector::Zero(1));
  EXPECT_DOUBLE_EQ(evaluate::state_error_series(ref, zero).values(0), 5.0);
  const snapshots::SnapshotSet ones(Vector{{0}}, Matrix::Ones(2, 1));
  const Matrix W = Vector{{4, 1}}.asDiagonal();
  const auto weighted = evaluate::state_error_series(ones, zero, W);
  EXPECT_DOUBLE_EQ(weighted.values(0), std::sqrt(5.0));
  EXPECT_EQ(weighted.norm_kind, evaluate::ErrorSeries::NormKind::Weighted);
  EXPECT_EQ(evaluate::state_error_series(ones, zero, Matrix::Identity(2, 2)).values,
            evaluate::state_error_series(ones, zero).values);
  EXPECT_THROW(evaluate::state_error_series(ref, snapshots::SnapshotSet(Vector{{1}}, Matrix::Zero(2, 1))), DataError);
}

TEST(Evaluate, OutputSeries)
{
  Rng rng(12);
  const snapshots::SnapshotSet set(Vector::LinSpaced(6, 0, 1), rng.matrix(5, 6));
  evaluate::OutputMatrix sel{Matrix::Zero(2, 5), {"a", "b"}};
  sel.C(0, 1) = 1;
  sel.C(1, 4) = 1;
  const Matrix out = evaluate::output_series(sel, set);
  EXPECT_EQ(Vector(out.row(0).transpose()), Vector(set.states().row(1).transpose()));
  EXPECT_EQ(Vector(out.row(1).transpose()), Vector(set.states().row(4).transpose()));
  const snapshots::SnapshotSet constant(Vector::LinSpaced(3, 0, 1), Matrix::Constant(5, 3, 2.5));
  const evaluate::OutputMatrix avg{Matrix::Constant(1, 5, 0.2), {"mean"}};
  EXPECT_LE((evaluate::output_series(avg, constant) - Matrix::Constant(1, 3, 2.5)).norm(), 1e-14);
  const evaluate::OutputMatrix rnd{rng.matrix(3, 5), {"x", "y", "z"}};
  const Matrix o = evaluate::output_series(rnd, set);
  for (Index j = 0; j < 6; ++j)
  {
    EXPECT_LE((o.col(j) - rnd.C * set.states().col(j)).norm(), 1e-15);
  }
}

TEST(Evaluate, TrapezoidWeights)
{
  EXPECT_EQ(evaluate::trapezoid_weights(Vector{{0, 1, 2}}), (Vector{{0.5, 1, 0.5}}));
  EXPECT_EQ(evaluate::trapezoid_weights(Vector{{3}}), (Vector{{1}}));
}

TEST(Evaluate, SummaryValues)
{
  evaluate::ErrorSeries zero{Vector::LinSpaced(5, 0, 4), Vector::Zero(5), {}, 2.0};
  const auto z = evaluate::summarize(zero, Vector::Ones(5));
  EXPECT_EQ(z.train_relative_l2, 0.0);
  EXPECT_EQ(*z.test_relative_l2, 0.0);
  EXPECT_EQ(z.max_error, 0.0);
  EXPECT_FALSE(z.blowup_time);

  evaluate::ErrorSeries constant{Vector::LinSpaced(5, 0, 4), Vector::Constant(5, 0.3), {}, 2.0};
  const auto c = evaluate::summarize(constant, Vector::Constant(5, 2.0));
  EXPECT_NEAR(c.train_relative_l2, 0.15, 1e-15);
  EXPECT_NEAR(*c.test_relative_l2, 0.15, 1e-15);
}

TEST(Evaluate, SegmentsAreSeparated)
{
  // Large test error never leaks into the training metric.
  evaluate::ErrorSeries s{Vector::LinSpaced(6, 0, 5), Vector{{0, 0, 0, 100, 100, 100}}, {}, 2.0};
  const auto sum = evaluate::summarize(s, Vector::Ones(6));
  EXPECT_EQ(sum.train_relative_l2, 0.0);
  EXPECT_NEAR(*sum.test_relative_l2, 100.0, 1e-12);
  s.split_time = 10.0;
  EXPECT_THROW(evaluate::summarize(s, Vector::Ones(6)), DataError);
}

TEST(Evaluate, BlowupTimeIsFirstNonFinite)
{
  const double inf = std::numeric_limits<double>::infinity();
  evaluate::ErrorSeries s{Vector::LinSpaced(6, 0, 5), Vector{{0, 0.1, 0.1, 0.2, inf, inf}}, {}, 2.0};
  const auto sum = evaluate::summarize(s, Vector::Ones(6));
  ASSERT_TRUE(sum.blowup_time);
  EXPECT_DOUBLE_EQ(*sum.blowup_time, 4.0);
  EXPECT_TRUE(std::isfinite(sum.train_relative_l2));
  EXPECT_TRUE(std::isinf(*sum.test_relative_l2));
}

// --- fomlab ---------------------------------------------------------------------

TEST(Fomlab, OperatorHomogeneity)
{
  Rng rng(13);
  for (const auto &fom : {fomlab::make_burgers_fom(32, 0.01), fomlab::make_random_stable_quad_fom(12, 3, 0.5)})
  {
    const Vector x = rng.vector(fom.n);
    const Vector y = rng.vector(fom.n);
    for (double a : {-2.0, 0.5, 3.0})
    {
      const Vector q = fom.apply_quadratic(x);
      EXPECT_LE((fom.apply_quadratic(a * x) - a * a * q).norm(), 1e-12 * (1 + a * a * q.norm()));
      const Vector l = fom.apply_linear(x);
      EXPECT_LE((fom.apply_linear(a * x) - a * l).norm(), 1e-12 * (1 + std::abs(a) * l.norm()));
    }
    const Vector sum = fom.apply_linear(x) + fom.apply_linear(y);
    EXPECT_LE((fom.apply_linear(x + y) - sum).norm(), 1e-12 * (1 + sum.norm()));
  }
}

TEST(Fomlab, BurgersEquilibria)
{
  const auto fom = fomlab::make_burgers_fom(64, 0.01);
  EXPECT_LE(fom.rhs(Vector::Constant(64, 0.7)).norm(), 1e-12);
  const auto data = fomlab::integrate_fom(fom, Vector::Zero(64), Vector::LinSpaced(5, 0, 1));
  EXPECT_EQ(data.states(), Matrix::Zero(64, 5));
  EXPECT_EQ(*data.derivatives(), Matrix::Zero(64, 5));
  EXPECT_THROW(fomlab::make_burgers_fom(4, 0.01), ConfigError);
}

TEST(Fomlab, BurgersEnergyNonincreasing)
{
  const Index n = 128;
  const auto fom = fomlab::make_burgers_fom(n, 0.01);
  Vector u0(n);
  for (Index i = 0; i < n; ++i)
  {
    u0(i) = 0.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  const auto data = fomlab::integrate_fom(fom, u0, Vector::LinSpaced(101, 0, 2), {1e-10, 1e-12});
  const Vector energy = data.states().colwise().squaredNorm().transpose();
  for (Index j = 1; j < energy.size(); ++j)
  {
    EXPECT_LE(energy(j), energy(j - 1) * (1 + 1e-10));
  }
  EXPECT_LT(energy(100), energy(0));
}

TEST(Fomlab, RandomStableFom)
{
  const auto a = fomlab::make_random_stable_quad_fom(10, 5, 0.0);
  const auto b = fomlab::make_random_stable_quad_fom(10, 5, 0.0);
  const Matrix A = fomlab::linear_operator(a);
  EXPECT_EQ(A, fomlab::linear_operator(b));
  EXPECT_EQ(a.B, b.B);
  const auto eig = Eigen::EigenSolver<Matrix>(A).eigenvalues();
  for (Index i = 0; i < eig.size(); ++i)
  {
    EXPECT_NEAR(eig(i).real(), -1.0, 1e-10);
  }
  // Linear case: distance to the equilibrium -A^{-1} B decays monotonically.
  const Vector xs = -A.partialPivLu().solve(a.B);
  const auto data = fomlab::integrate_fom(a, Vector::Constant(10, 2.0), Vector::LinSpaced(41, 0, 4));
  double previous = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < data.k(); ++j)
  {
    const double d = (data.states().col(j) - xs).norm();
    EXPECT_LT(d, previous);
    previous = d;
  }
}

TEST(Fomlab, IntegrateLinearDecay)
{
  fomlab::QuadraticFom fom;
  fom.n = 3;
  fom.B = Vector::Zero(3);
  fom.apply_linear = [](const Vector &x) { return Vector(-x); };
  fom.apply_quadratic = [](const Vector &x) { return Vector(Vector::Zero(x.size())); };
  const Vector grid = Vector::LinSpaced(11, 0, 2);
  const auto data = fomlab::integrate_fom(fom, Vector::Ones(3), grid);
  for (Index j = 0; j < grid.size(); ++j)
  {
    EXPECT_NEAR(data.states()(1, j), std::exp(-grid(j)), 1e-7);
    EXPECT_LE((data.derivatives()->col(j) - fom.rhs(data.states().col(j))).norm(), 1e-13);
  }
}

TEST(Fomlab, LiftedTruthLinearDecoderIsInSubspace)
{
  auto dec = std::make_shared<const manifold::QuadDecoder>(fomlab::make_random_decoder(20, 3, 4, 0.0));
  const auto ops = fomlab::make_random_reduced_operators(3, 5, 1.0, 0.0, 0.1);
  const auto truth = fomlab::make_lifted_truth(dec, ops, Vector{{1, 0.5, -0.2}}, Vector::LinSpaced(30, 0, 3));
  const auto basis = manifold::fit_pod(truth.data.states(), 3);
  EXPECT_LE((truth.data.states() - basis.V * basis.V.transpose() * truth.data.states()).norm(),
            1e-12 * truth.data.states().norm());
}

TEST(Fomlab, LiftedTruthDerivativesAreSecondOrderConsistent)
{
  auto dec = std::make_shared<const manifold::QuadDecoder>(fomlab::make_random_decoder(16, 3, 6, 0.3));
  const auto ops = fomlab::make_random_reduced_operators(3, 7, 0.2, 0.2, 0.1);
  auto fd_error = [&](Index k) {
    const auto truth = fomlab::make_lifted_truth(dec, ops, Vector{{0.4, -0.3, 0.2}}, Vector::LinSpaced(k, 0, 1), tight_rk45());
    const Matrix fd = snapshots::estimate_derivatives(truth.data.states(), truth.data.times());
    return (fd - *truth.data.derivatives()).cwiseAbs().maxCoeff();
  };
  const double coarse = fd_error(21);
  const double fine = fd_error(41);
  EXPECT_GT(coarse / fine, 3.0);
  EXPECT_LT(coarse / fine, 5.0);
}

TEST(Fomlab, RandomDecoderProperties)
{
  const auto a = fomlab::make_random_decoder(30, 4, 9, 0.5);
  const auto b = fomlab::make_random_decoder(30, 4, 9, 0.5);
  EXPECT_EQ(a.V(), b.V());
  EXPECT_EQ(a.omega_c(), b.omega_c());
  EXPECT_LE((a.V().transpose() * a.V() - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((a.V().transpose() * a.omega_c()).norm(), 1e-12);
}
