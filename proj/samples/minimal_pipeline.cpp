// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

// Library-only walk through: Burgers snapshots, quadratic decoder, operator
// inference, reduced simulation, and a DMDc baseline on the same split.

#include "qmrom/dmdc.hpp"
#include "qmrom/evaluate.hpp"
#include "qmrom/fomlab.hpp"
#include "qmrom/manifold.hpp"
#include "qmrom/opinf.hpp"
#include "qmrom/romsim.hpp"
#include "qmrom/snapshots.hpp"

#include <cstdio>
#include <memory>

int main()
{
  using namespace qmrom;
  using regression::TruncationPolicy;

  const Index n = 128;
  const Vector grid = Vector::LinSpaced(400, 0.0, 2.0);
  const auto fom = fomlab::make_burgers_fom(n, 0.01);
  const auto data = fomlab::integrate_fom(fom, fomlab::burgers_initial_condition(n, 1.0, 0.0, 0.5, 1), grid, {1e-8, 1e-10});
  const auto [train, test] = snapshots::split_train_test(data, snapshots::SplitSpec::count(200));

  const auto basis = manifold::fit_pod(train.states(), 8);
  auto [decoder, decoder_report] = manifold::fit_quadratic_decoder(train.states(), basis, TruncationPolicy::keep_rank(6));
  std::printf("decoder residual: POD %.3e, quadratic %.3e\n", decoder_report.pod_residual, decoder_report.quad_residual);

  auto dec = std::make_shared<const manifold::QuadDecoder>(std::move(decoder));
  const auto fit = opinf::fit_operators(dec, train, TruncationPolicy::keep_rank(8));
  const Vector q0 = manifold::encode(basis, data.states().col(0));
  const auto traj = romsim::integrate(fit.model, q0, data.times());

  const auto dm = dmdc::fit_dmdc(manifold::encode(basis, train.states()), train.times());
  const auto dtraj = dmdc::simulate_dmdc(dm, q0, data.k() - 1);

  const Vector ref = evaluate::reference_norms(data);
  const double split = train.times()(train.k() - 1);
  const auto report = [&](const char *name, const Matrix &states) {
    auto series = evaluate::state_error_series(data, snapshots::SnapshotSet(data.times(), states));
    series.split_time = split;
    const auto s = evaluate::summarize(series, ref);
    std::printf("%-5s train %.3e  test %.3e\n", name, s.train_relative_l2, *s.test_relative_l2);
  };
  report("qmf", dec->decode_batch(traj.Q));
  report("dmdc", manifold::QuadDecoder::linear(basis).decode_batch(dtraj.Q));
  return 0;
}
