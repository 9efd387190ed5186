// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

// qmrom: generate -> fit -> simulate -> compare -> report.
//
// Exit status: 0 success, 2 configuration, 3 data, 4 numeric, 5 I/O, 1 other.

#include "qmrom/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace
{

struct Overrides
{
  std::string config;
  std::optional<std::string> data;
  std::optional<qmrom::Index> r;
  std::optional<long> decoder_rank;
  std::optional<long> opinf_rank;
  std::optional<qmrom::Index> train_count;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> basis;
  std::optional<std::string> integrator;
};

// Negative ranks mean no truncation; decoder rank 0 selects the linear decoder.
qmrom::pipeline::PipelineConfig resolve(const Overrides &o)
{
  using qmrom::pipeline::TruncationPolicy;
  qmrom::pipeline::PipelineConfig cfg;
  if (const char *env = std::getenv("QMROM_OUT"); env && *env)
  {
    cfg.out = env;
  }
  if (!o.config.empty())
  {
    cfg = qmrom::pipeline::load_config(o.config, cfg);
  }
  if (o.data)
  {
    cfg.data = *o.data;
  }
  if (o.r)
  {
    cfg.r = *o.r;
  }
  if (o.decoder_rank)
  {
    cfg.linear_decoder = *o.decoder_rank == 0;
    if (*o.decoder_rank != 0)
    {
      cfg.decoder_truncation = *o.decoder_rank < 0 ? TruncationPolicy::none() : TruncationPolicy::keep_rank(*o.decoder_rank);
    }
  }
  if (o.opinf_rank)
  {
    cfg.opinf_truncation = *o.opinf_rank <= 0 ? TruncationPolicy::none() : TruncationPolicy::keep_rank(*o.opinf_rank);
  }
  if (o.train_count)
  {
    cfg.train_count = *o.train_count;
    cfg.train_interval.reset();
  }
  if (o.out)
  {
    cfg.out = *o.out;
  }
  if (o.seed)
  {
    cfg.generator.seed = *o.seed;
  }
  if (o.basis)
  {
    cfg.basis = *o.basis;
  }
  if (o.integrator)
  {
    cfg.integrator.method = *o.integrator == "rk45" ? qmrom::romsim::IntegratorConfig::Method::Rk45Adaptive
                                                    : qmrom::romsim::IntegratorConfig::Method::Rk4Fixed;
  }
  return cfg;
}

int exit_code(qmrom::ErrorKind kind)
{
  switch (kind)
  {
  case qmrom::ErrorKind::Config:
    return 2;
  case qmrom::ErrorKind::Data:
    return 3;
  case qmrom::ErrorKind::Numeric:
    return 4;
  case qmrom::ErrorKind::IO:
    return 5;
  }
  return 1;
}

void print_summary(const qmrom::pipeline::CompareResult &result)
{
  for (const auto &m : result.methods)
  {
    std::cout << m.method << ": train relative L2 " << qmrom::io::format_number(m.summary.train_relative_l2)
              << ", test relative L2 "
              << qmrom::io::format_number(m.summary.test_relative_l2.value_or(std::numeric_limits<double>::quiet_NaN()));
    if (m.summary.blowup_time)
    {
      std::cout << ", diverged at t = " << qmrom::io::format_number(*m.summary.blowup_time);
    }
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Quadratic-manifold operator inference reduced-order models"};
  app.require_subcommand(1);
  Overrides o;
  std::vector<std::string> runs;

  auto add_common = [&](CLI::App *sub) {
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--data", o.data, "snapshot file (.qrom or .csv)");
    sub->add_option("--r", o.r, "reduced dimension")->check(CLI::PositiveNumber);
    sub->add_option("--decoder-rank", o.decoder_rank, "decoder truncation rank (0 linear, <0 none)");
    sub->add_option("--opinf-rank", o.opinf_rank, "operator truncation rank (<=0 none)");
    sub->add_option("--train-count", o.train_count, "number of leading training snapshots");
    sub->add_option("--out", o.out, "output directory (default $QMROM_OUT or qmrom_out)");
    sub->add_option("--seed", o.seed, "generator seed");
    sub->add_option("--basis", o.basis, "decoder JSON whose POD basis is reused");
    sub->add_option("--integrator", o.integrator, "rk4 or rk45")->check(CLI::IsMember({"rk4", "rk45"}));
  };

  auto *gen = app.add_subcommand("generate", "write a snapshot file from a generator spec");
  auto *fit = app.add_subcommand("fit", "fit decoder, operators, and the DMDc baseline");
  auto *sim = app.add_subcommand("simulate", "integrate fitted models over the data grid");
  auto *cmp = app.add_subcommand("compare", "simulate and tabulate errors for qmf and dmdc");
  auto *rep = app.add_subcommand("report", "bundle run directories with a manifest");
  for (auto *sub : {gen, fit, sim, cmp, rep})
  {
    add_common(sub);
  }
  rep->add_option("runs", runs, "run directories")->required();

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError &e)
  {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try
  {
    const auto cfg = resolve(o);
    if (gen->parsed())
    {
      const auto r = qmrom::pipeline::cmd_generate(cfg);
      std::cout << "wrote " << r.path << " (n = " << r.data.n() << ", k = " << r.data.k() << ", sha256 " << r.sha256 << ")\n";
    }
    else if (fit->parsed())
    {
      const auto r = qmrom::pipeline::cmd_fit(cfg);
      std::cout << "fit r = " << r.decoder->r() << " on " << r.train.k() << " snapshots; operator residual "
                << qmrom::io::format_number(r.opinf_report.residual_norm) << "\n";
    }
    else if (sim->parsed())
    {
      const auto r = qmrom::pipeline::cmd_simulate(cfg);
      std::cout << "qmf: " << r.qmf.trajectory.size() << " samples" << (r.qmf.blowup_time ? " (diverged)" : "")
                << "; dmdc: " << r.dmdc.trajectory.size() << " samples" << (r.dmdc.blowup_time ? " (diverged)" : "") << "\n";
    }
    else if (cmp->parsed())
    {
      print_summary(qmrom::pipeline::cmd_compare(cfg));
    }
    else if (rep->parsed())
    {
      const auto r = qmrom::pipeline::cmd_report(runs, cfg);
      std::cout << "wrote " << r.files.size() << " files to " << r.directory << "\n";
    }
  }
  catch (const qmrom::Error &e)
  {
    std::cerr << "qmrom: " << e.what() << "\n";
    return exit_code(e.kind());
  }
  catch (const std::exception &e)
  {
    std::cerr << "qmrom: unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
