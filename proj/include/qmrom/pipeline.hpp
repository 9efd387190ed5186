// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_PIPELINE_HPP
#define QMROM_PIPELINE_HPP

#include "qmrom/core.hpp"
#include "qmrom/dmdc.hpp"
#include "qmrom/evaluate.hpp"
#include "qmrom/fomlab.hpp"
#include "qmrom/io.hpp"
#include "qmrom/manifold.hpp"
#include "qmrom/opinf.hpp"
#include "qmrom/regression.hpp"
#include "qmrom/romsim.hpp"
#include "qmrom/snapshots.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

/**
 * End-to-end experiment driver behind the `qmrom` tool:
 * generate -> fit -> simulate -> compare -> report.
 *
 * Every artifact lands in PipelineConfig::out under a fixed file name, and
 * nothing time- or host-dependent is written, so identical inputs give
 * byte-identical outputs.
 */
namespace qmrom::pipeline
{

using io::json;
namespace fs = std::filesystem;
using regression::TruncationPolicy;

namespace files
{
inline constexpr const char *snapshots = "snapshots.qrom";
inline constexpr const char *generate = "generate.json";
inline constexpr const char *truth_decoder = "truth_decoder.json";
inline constexpr const char *truth_operators = "truth_operators.json";
inline constexpr const char *decoder = "decoder.json";
inline constexpr const char *model = "model.json";
inline constexpr const char *dmdc = "dmdc.json";
inline constexpr const char *fit_report = "fit_report.json";
inline constexpr const char *lcurve_decoder = "lcurve_decoder.csv";
inline constexpr const char *lcurve_opinf = "lcurve_opinf.csv";
inline constexpr const char *traj_qmf = "traj_qmf.csv";
inline constexpr const char *traj_qmf_bin = "traj_qmf.qrom";
inline constexpr const char *traj_dmdc = "traj_dmdc.csv";
inline constexpr const char *traj_dmdc_bin = "traj_dmdc.qrom";
inline constexpr const char *simulate = "simulate.json";
inline constexpr const char *errors_qmf = "errors_qmf.csv";
inline constexpr const char *errors_dmdc = "errors_dmdc.csv";
inline constexpr const char *outputs_fom = "outputs_fom.csv";
inline constexpr const char *outputs_qmf = "outputs_qmf.csv";
inline constexpr const char *outputs_dmdc = "outputs_dmdc.csv";
inline constexpr const char *summary_csv = "summary.csv";
inline constexpr const char *summary_json = "summary.json";
inline constexpr const char *manifest = "manifest.json";
}  // namespace files

struct GeneratorSpec
{
  std::string kind = "burgers";  // burgers | random_quad | lifted
  Index n = 256;
  Index count = 1000;
  double t_start = 0.0;
  double t_end = 4.0;
  std::uint64_t seed = 1;
  // burgers
  double nu = 0.005;
  double length = 1.0;
  double offset = 0.0;
  double amplitude = 0.5;
  // random_quad
  double quad_scale = 0.5;
  // lifted
  Index r = 5;
  double omega_scale = 0.2;
  double damping = 0.1;
  double bias_scale = 0.1;
  // reference integrator
  double rtol = 1e-8;
  double atol = 1e-10;
};

/// A sensor that averages the listed state entries.
struct Probe
{
  std::string label;
  std::vector<Index> indices;
};

struct PipelineConfig
{
  std::string data;  // snapshot file; empty means <out>/snapshots.qrom
  GeneratorSpec generator;
  Index r = 10;
  TruncationPolicy decoder_truncation = TruncationPolicy::keep_rank(7);
  bool linear_decoder = false;  // omega_c = 0, classical operator inference
  TruncationPolicy opinf_truncation = TruncationPolicy::keep_rank(10);
  TruncationPolicy dmdc_truncation = TruncationPolicy::none();
  std::optional<Index> train_count;
  double train_fraction = 0.5;
  std::optional<std::pair<double, double>> train_interval;
  romsim::IntegratorConfig integrator;
  std::string out = "qmrom_out";
  std::string basis;  // decoder JSON whose POD basis replaces fit_pod
  bool center = false;
  std::vector<Probe> outputs;  // empty: three default probes

  fs::path out_path(const char *name) const { return fs::path(out) / name; }

  std::string data_path() const { return data.empty() ? out_path(files::snapshots).string() : data; }
};

// --- config (de)serialization -------------------------------------------------

namespace internal
{

inline void reject_unknown(const json &j, const std::set<std::string> &known, const std::string &where)
{
  for (const auto &[key, _] : j.items())
  {
    if (!known.count(key))
    {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read_opt(const json &j, const char *key, T &dst, const std::string &where)
{
  if (!j.contains(key))
  {
    return;
  }
  try
  {
    dst = j.at(key).get<T>();
  }
  catch (const json::exception &)
  {
    throw ConfigError(where + ": key '" + key + "' has the wrong type");
  }
}

inline TruncationPolicy read_policy(const json &j, const std::string &where)
{
  try
  {
    return io::policy_from_json(j, where);
  }
  catch (const io::SchemaError &e)
  {
    throw ConfigError(e.what());
  }
}

}  // namespace internal

inline json generator_to_json(const GeneratorSpec &g)
{
  json j = {{"kind", g.kind}, {"n", g.n},       {"count", g.count}, {"t_start", g.t_start},
            {"t_end", g.t_end}, {"seed", g.seed}, {"rtol", g.rtol},   {"atol", g.atol}};
  if (g.kind == "burgers")
  {
    j.update({{"nu", g.nu}, {"length", g.length}, {"offset", g.offset}, {"amplitude", g.amplitude}});
  }
  else if (g.kind == "random_quad")
  {
    j["quad_scale"] = g.quad_scale;
  }
  else if (g.kind == "lifted")
  {
    j.update({{"r", g.r},
              {"omega_scale", g.omega_scale},
              {"damping", g.damping},
              {"quad_scale", g.quad_scale},
              {"bias_scale", g.bias_scale}});
  }
  return j;
}

inline GeneratorSpec generator_from_json(const json &j)
{
  const std::string where = "config.generator";
  if (!j.is_object())
  {
    throw ConfigError(where + " must be an object");
  }
  internal::reject_unknown(j,
                           {"kind", "n", "count", "t_start", "t_end", "seed", "nu", "length", "offset", "amplitude",
                            "quad_scale", "r", "omega_scale", "damping", "bias_scale", "rtol", "atol"},
                           where);
  GeneratorSpec g;
  internal::read_opt(j, "kind", g.kind, where);
  internal::read_opt(j, "n", g.n, where);
  internal::read_opt(j, "count", g.count, where);
  internal::read_opt(j, "t_start", g.t_start, where);
  internal::read_opt(j, "t_end", g.t_end, where);
  internal::read_opt(j, "seed", g.seed, where);
  internal::read_opt(j, "nu", g.nu, where);
  internal::read_opt(j, "length", g.length, where);
  internal::read_opt(j, "offset", g.offset, where);
  internal::read_opt(j, "amplitude", g.amplitude, where);
  internal::read_opt(j, "quad_scale", g.quad_scale, where);
  internal::read_opt(j, "r", g.r, where);
  internal::read_opt(j, "omega_scale", g.omega_scale, where);
  internal::read_opt(j, "damping", g.damping, where);
  internal::read_opt(j, "bias_scale", g.bias_scale, where);
  internal::read_opt(j, "rtol", g.rtol, where);
  internal::read_opt(j, "atol", g.atol, where);
  return g;
}

inline json integrator_to_json(const romsim::IntegratorConfig &c)
{
  return {{"method", c.method == romsim::IntegratorConfig::Method::Rk4Fixed ? "rk4" : "rk45"},
          {"step", c.step},
          {"rtol", c.rtol},
          {"atol", c.atol},
          {"max_step", c.max_step},
          {"spd_tolerance", c.spd_tolerance}};
}

inline json config_to_json(const PipelineConfig &c)
{
  json j = {{"data", c.data},
            {"generator", generator_to_json(c.generator)},
            {"r", c.r},
            {"decoder_truncation", c.linear_decoder ? json{{"mode", "linear"}} : io::policy_to_json(c.decoder_truncation)},
            {"opinf_truncation", io::policy_to_json(c.opinf_truncation)},
            {"dmdc_truncation", io::policy_to_json(c.dmdc_truncation)},
            {"train_fraction", c.train_fraction},
            {"integrator", integrator_to_json(c.integrator)},
            {"out", c.out},
            {"basis", c.basis},
            {"center", c.center}};
  if (c.train_count)
  {
    j["train_count"] = *c.train_count;
  }
  if (c.train_interval)
  {
    j["train_interval"] = {c.train_interval->first, c.train_interval->second};
  }
  if (!c.outputs.empty())
  {
    json probes = json::array();
    for (const auto &p : c.outputs)
    {
      probes.push_back({{"label", p.label}, {"indices", p.indices}});
    }
    j["outputs"] = probes;
  }
  return j;
}

/// Overlays the keys present in `j` onto `base`.
inline PipelineConfig config_from_json(const json &j, PipelineConfig base = {})
{
  const std::string where = "config";
  if (!j.is_object())
  {
    throw ConfigError("config must be a JSON object");
  }
  internal::reject_unknown(j,
                           {"data", "generator", "r", "decoder_truncation", "opinf_truncation", "dmdc_truncation",
                            "train_count", "train_fraction", "train_interval", "integrator", "out", "basis", "center",
                            "outputs"},
                           where);
  PipelineConfig c = std::move(base);
  internal::read_opt(j, "data", c.data, where);
  if (j.contains("generator"))
  {
    c.generator = generator_from_json(j.at("generator"));
  }
  internal::read_opt(j, "r", c.r, where);
  if (j.contains("decoder_truncation"))
  {
    const json &p = j.at("decoder_truncation");
    const bool rank_zero = p.is_object() && p.value("mode", "") == "rank" && p.contains("value") && p["value"] == 0;
    if (p.is_object() && (p.value("mode", "") == "linear" || rank_zero))
    {
      c.linear_decoder = true;
    }
    else
    {
      c.linear_decoder = false;
      c.decoder_truncation = internal::read_policy(p, "config.decoder_truncation");
    }
  }
  if (j.contains("opinf_truncation"))
  {
    c.opinf_truncation = internal::read_policy(j.at("opinf_truncation"), "config.opinf_truncation");
  }
  if (j.contains("dmdc_truncation"))
  {
    c.dmdc_truncation = internal::read_policy(j.at("dmdc_truncation"), "config.dmdc_truncation");
  }
  if (j.contains("train_count"))
  {
    Index count = 0;
    internal::read_opt(j, "train_count", count, where);
    c.train_count = count;
  }
  internal::read_opt(j, "train_fraction", c.train_fraction, where);
  if (j.contains("train_interval"))
  {
    std::vector<double> iv;
    internal::read_opt(j, "train_interval", iv, where);
    if (iv.size() != 2)
    {
      throw ConfigError("config.train_interval must be [t_a, t_b]");
    }
    c.train_interval = std::make_pair(iv[0], iv[1]);
  }
  if (j.contains("integrator"))
  {
    const json &ij = j.at("integrator");
    const std::string iw = "config.integrator";
    internal::reject_unknown(ij, {"method", "step", "rtol", "atol", "max_step", "spd_tolerance"}, iw);
    std::string method = "rk4";
    internal::read_opt(ij, "method", method, iw);
    if (method == "rk4")
    {
      c.integrator.method = romsim::IntegratorConfig::Method::Rk4Fixed;
    }
    else if (method == "rk45")
    {
      c.integrator.method = romsim::IntegratorConfig::Method::Rk45Adaptive;
    }
    else
    {
      throw ConfigError(iw + ": method must be 'rk4' or 'rk45'");
    }
    internal::read_opt(ij, "step", c.integrator.step, iw);
    internal::read_opt(ij, "rtol", c.integrator.rtol, iw);
    internal::read_opt(ij, "atol", c.integrator.atol, iw);
    internal::read_opt(ij, "max_step", c.integrator.max_step, iw);
    internal::read_opt(ij, "spd_tolerance", c.integrator.spd_tolerance, iw);
  }
  internal::read_opt(j, "out", c.out, where);
  internal::read_opt(j, "basis", c.basis, where);
  internal::read_opt(j, "center", c.center, where);
  if (j.contains("outputs"))
  {
    c.outputs.clear();
    for (const auto &p : j.at("outputs"))
    {
      Probe probe;
      internal::read_opt(p, "label", probe.label, "config.outputs");
      internal::read_opt(p, "indices", probe.indices, "config.outputs");
      c.outputs.push_back(std::move(probe));
    }
  }
  return c;
}

inline PipelineConfig load_config(const std::string &path, PipelineConfig base = {})
{
  json j;
  try
  {
    j = json::parse(io::read_file(path));
  }
  catch (const json::parse_error &e)
  {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return config_from_json(j, std::move(base));
}

// --- helpers ----------------------------------------------------------------

/// Runs one pipeline stage, prefixing failures with the stage name.
template <typename F>
auto stage(const char *name, F &&fn) -> decltype(fn())
{
  try
  {
    return fn();
  }
  catch (const Error &e)
  {
    throw Error(e.kind(), std::string("stage '") + name + "': " + e.what());
  }
}

inline snapshots::SnapshotSet load_data(const PipelineConfig &cfg)
{
  const std::string path = cfg.data_path();
  if (!fs::exists(path))
  {
    throw IOError("data file not found: " + path + " (run `generate` or pass --data)");
  }
  if (fs::path(path).extension() == ".csv")
  {
    return snapshots::load_snapshots_csv(path);
  }
  return snapshots::load_snapshots(path);
}

inline snapshots::SplitSpec split_spec(const PipelineConfig &cfg, Index k)
{
  if (cfg.train_count)
  {
    return snapshots::SplitSpec::count(*cfg.train_count);
  }
  if (cfg.train_interval)
  {
    return snapshots::SplitSpec::interval(cfg.train_interval->first, cfg.train_interval->second);
  }
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
  {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  return snapshots::SplitSpec::count(static_cast<Index>(std::floor(cfg.train_fraction * static_cast<double>(k))));
}

/// Averaging sensors; default is three windows of five entries at n/4, n/2, 3n/4.
inline evaluate::OutputMatrix output_matrix(const PipelineConfig &cfg, Index n)
{
  std::vector<Probe> probes = cfg.outputs;
  if (probes.empty())
  {
    for (int s = 1; s <= 3; ++s)
    {
      Probe p{"probe" + std::to_string(s), {}};
      const Index centre = s * n / 4;
      for (Index i = std::max<Index>(0, centre - 2); i <= std::min<Index>(n - 1, centre + 2); ++i)
      {
        p.indices.push_back(i);
      }
      probes.push_back(std::move(p));
    }
  }
  evaluate::OutputMatrix C;
  C.C = Matrix::Zero(static_cast<Index>(probes.size()), n);
  for (std::size_t s = 0; s < probes.size(); ++s)
  {
    if (probes[s].indices.empty())
    {
      throw ConfigError("output probe '" + probes[s].label + "' has no indices");
    }
    for (Index i : probes[s].indices)
    {
      if (i < 0 || i >= n)
      {
        throw ConfigError("output probe '" + probes[s].label + "' index " + std::to_string(i) + " out of range");
      }
      C.C(static_cast<Index>(s), i) += 1.0 / static_cast<double>(probes[s].indices.size());
    }
    C.labels.push_back(probes[s].label);
  }
  return C;
}

// --- generate ---------------------------------------------------------------

struct GenerateResult
{
  snapshots::SnapshotSet data;
  std::string path;
  std::string sha256;
};

inline snapshots::SnapshotSet generate_snapshots(const GeneratorSpec &g, std::shared_ptr<const manifold::QuadDecoder> *truth_decoder = nullptr,
                                                 opinf::QuadOperators *truth_ops = nullptr)
{
  if (g.count < 3)
  {
    throw ConfigError("generator.count must be at least 3");
  }
  if (!(g.t_end > g.t_start))
  {
    throw ConfigError("generator.t_end must exceed t_start");
  }
  const Vector grid = Vector::LinSpaced(g.count, g.t_start, g.t_end);
  const std::string label = generator_to_json(g).dump();
  if (g.kind == "burgers")
  {
    const auto fom = fomlab::make_burgers_fom(g.n, g.nu, g.length);
    const Vector x0 = fomlab::burgers_initial_condition(g.n, g.length, g.offset, g.amplitude, g.seed);
    return fomlab::integrate_fom(fom, x0, grid, {g.rtol, g.atol}, label);
  }
  if (g.kind == "random_quad")
  {
    const auto fom = fomlab::make_random_stable_quad_fom(g.n, g.seed, g.quad_scale);
    fomlab::SeededRng rng(g.seed + 1);
    return fomlab::integrate_fom(fom, rng.vector(g.n), grid, {g.rtol, g.atol}, label);
  }
  if (g.kind == "lifted")
  {
    auto dec = std::make_shared<const manifold::QuadDecoder>(fomlab::make_random_decoder(g.n, g.r, g.seed, g.omega_scale));
    const auto ops = fomlab::make_random_reduced_operators(g.r, g.seed + 1, g.damping, g.quad_scale, g.bias_scale);
    fomlab::SeededRng rng(g.seed + 2);
    const Vector q0 = rng.vector(g.r);
    romsim::IntegratorConfig ic;
    ic.method = romsim::IntegratorConfig::Method::Rk45Adaptive;
    ic.rtol = g.rtol;
    ic.atol = g.atol;
    auto truth = fomlab::make_lifted_truth(dec, ops, q0, grid, ic);
    if (truth_decoder)
    {
      *truth_decoder = dec;
    }
    if (truth_ops)
    {
      *truth_ops = ops;
    }
    return truth.data.with_label(label);
  }
  throw ConfigError("generator.kind must be burgers, random_quad, or lifted (got '" + g.kind + "')");
}

inline GenerateResult cmd_generate(const PipelineConfig &cfg)
{
  std::shared_ptr<const manifold::QuadDecoder> truth_decoder;
  opinf::QuadOperators truth_ops;
  GenerateResult out;
  out.data = stage("generate", [&] { return generate_snapshots(cfg.generator, &truth_decoder, &truth_ops); });
  out.path = cfg.data.empty() ? cfg.out_path(files::snapshots).string() : cfg.data;
  fs::create_directories(fs::path(out.path).parent_path().empty() ? fs::path(".") : fs::path(out.path).parent_path());
  const std::string bytes = snapshots::encode_snapshots(out.data);
  io::write_file(out.path, bytes);
  out.sha256 = io::sha256_hex(bytes);

  json prov = {{"generator", generator_to_json(cfg.generator)},
               {"file", fs::path(out.path).filename().string()},
               {"sha256", out.sha256},
               {"n", out.data.n()},
               {"k", out.data.k()},
               {"exact_derivatives", out.data.has_derivatives()}};
  if (truth_decoder)
  {
    io::save_decoder(*truth_decoder, cfg.out_path(files::truth_decoder).string(), {{"source", "generator"}});
    io::write_json(cfg.out_path(files::truth_operators).string(),
                   {{"format", "qmrom-operators"},
                    {"version", 1},
                    {"r", truth_ops.r()},
                    {"A1", io::matrix_to_json(truth_ops.A1)},
                    {"A2c", io::matrix_to_json(truth_ops.A2c)},
                    {"B1", io::vector_to_json(truth_ops.B1)}});
    prov["truth_decoder"] = files::truth_decoder;
    prov["truth_operators"] = files::truth_operators;
  }
  io::write_json(cfg.out_path(files::generate).string(), prov);
  return out;
}

// --- fit --------------------------------------------------------------------

struct FitResult
{
  std::shared_ptr<const manifold::QuadDecoder> decoder;
  manifold::ManifoldFitReport decoder_report;
  opinf::ReducedQuadModel model;
  opinf::OpInfReport opinf_report;
  dmdc::DmdcModel dmdc;
  snapshots::SnapshotSet train;
  snapshots::SnapshotSet test;
  std::vector<regression::LCurvePoint> lcurve_decoder;
  std::vector<regression::LCurvePoint> lcurve_opinf;
};

namespace internal
{

inline std::string lcurve_csv(const std::vector<regression::LCurvePoint> &points)
{
  std::string out = "rank,residual_norm,solution_norm\n";
  for (const auto &p : points)
  {
    out += std::to_string(p.rank) + "," + io::format_number(p.residual_norm) + "," + io::format_number(p.solution_norm) + "\n";
  }
  return out;
}

inline std::vector<Index> all_ranks(Index max_rank)
{
  std::vector<Index> ranks(static_cast<std::size_t>(max_rank));
  for (Index i = 0; i < max_rank; ++i)
  {
    ranks[static_cast<std::size_t>(i)] = i + 1;
  }
  return ranks;
}

}  // namespace internal

inline FitResult fit_all(const PipelineConfig &cfg, const snapshots::SnapshotSet &data)
{
  FitResult fit;
  std::tie(fit.train, fit.test) = stage("split", [&] { return snapshots::split_train_test(data, split_spec(cfg, data.k())); });

  const manifold::PodBasis basis = stage("pod", [&] {
    if (!cfg.basis.empty())
    {
      manifold::PodBasis b = io::load_decoder(cfg.basis).basis();
      if (b.n() != data.n())
      {
        throw DataError("basis file " + cfg.basis + " has n = " + std::to_string(b.n()) + ", data has n = " + std::to_string(data.n()));
      }
      if (b.r() != cfg.r)
      {
        throw ConfigError("basis file " + cfg.basis + " has r = " + std::to_string(b.r()) + ", config asks for r = " + std::to_string(cfg.r));
      }
      return b;
    }
    return manifold::fit_pod(fit.train.states(), cfg.r, cfg.center);
  });

  stage("decoder", [&] {
    auto [dec, report] = cfg.linear_decoder ? manifold::fit_linear_decoder(fit.train.states(), basis)
                                            : manifold::fit_quadratic_decoder(fit.train.states(), basis, cfg.decoder_truncation);
    fit.decoder = std::make_shared<const manifold::QuadDecoder>(std::move(dec));
    fit.decoder_report = std::move(report);
    if (!cfg.linear_decoder)
    {
      const Matrix Q = manifold::encode(basis, fit.train.states());
      const Matrix S = tensorops::quad_features_batch(Q);
      const Matrix E = fit.train.states() - basis.V * Q - manifold::offset_columns(basis, Q.cols());
      regression::TruncatedSvdSolver solver(S);
      fit.lcurve_decoder = solver.lcurve(E, internal::all_ranks(solver.max_rank()));
    }
    return 0;
  });

  stage("opinf", [&] {
    auto of = opinf::fit_operators(fit.decoder, fit.train, cfg.opinf_truncation);
    regression::TruncatedSvdSolver solver(of.data.Z);
    fit.lcurve_opinf = solver.lcurve(of.data.Y, internal::all_ranks(solver.max_rank()));
    fit.model = std::move(of.model);
    fit.model.provenance["decoder_truncation"] = cfg.linear_decoder ? "linear" : cfg.decoder_truncation.describe();
    fit.opinf_report = std::move(of.report);
    return 0;
  });

  fit.dmdc = stage("dmdc", [&] {
    auto m = dmdc::fit_dmdc(manifold::encode(basis, fit.train.states()), fit.train.times(), cfg.dmdc_truncation);
    m.basis = std::make_shared<const manifold::PodBasis>(basis);
    return m;
  });
  return fit;
}

inline json fit_report_json(const PipelineConfig &cfg, const FitResult &fit)
{
  const auto &dr = fit.decoder_report;
  const auto &orep = fit.opinf_report;
  const Matrix Qtrain = manifold::encode(fit.decoder->basis(), fit.train.states());
  return {{"r", cfg.r},
          {"decoder_truncation", cfg.linear_decoder ? json{{"mode", "linear"}} : io::policy_to_json(cfg.decoder_truncation)},
          {"opinf_truncation", io::policy_to_json(cfg.opinf_truncation)},
          {"dmdc_truncation", io::policy_to_json(cfg.dmdc_truncation)},
          {"train_count", fit.train.k()},
          {"test_count", fit.test.k()},
          {"train_end_time", fit.train.times()(fit.train.k() - 1)},
          {"basis_source", cfg.basis.empty() ? "pod" : cfg.basis},
          {"decoder",
           {{"pod_residual", dr.pod_residual},
            {"quad_residual", dr.quad_residual},
            {"snapshot_norm", dr.snapshot_norm},
            {"effective_rank", dr.truncation_used},
            {"left_inverse_defect", manifold::left_inverse_defect(*fit.decoder, Qtrain)}}},
          {"opinf",
           {{"residual_norm", orep.residual_norm},
            {"solution_norm", orep.solution_norm},
            {"effective_rank", orep.effective_rank},
            {"max_snapshot_residual", orep.per_snapshot_residuals.size() ? orep.per_snapshot_residuals.maxCoeff() : 0.0},
            {"derivatives", fit.model.provenance.at("derivatives")}}},
          {"dmdc",
           {{"residual_norm", fit.dmdc.report.residual_norm},
            {"solution_norm", fit.dmdc.report.solution_norm},
            {"effective_rank", fit.dmdc.report.effective_rank}}}};
}

inline void write_fit_artifacts(const PipelineConfig &cfg, const FitResult &fit)
{
  fs::create_directories(cfg.out);
  const std::string decoder_file = cfg.out_path(files::decoder).string();
  io::save_decoder(*fit.decoder, decoder_file,
                   {{"pod_residual", fit.decoder_report.pod_residual},
                    {"quad_residual", fit.decoder_report.quad_residual},
                    {"effective_rank", fit.decoder_report.truncation_used},
                    {"truncation", cfg.linear_decoder ? json{{"mode", "linear"}} : io::policy_to_json(cfg.decoder_truncation)}});
  const std::string digest = io::sha256_file(decoder_file);
  io::write_json(cfg.out_path(files::model).string(),
                 io::model_to_json(fit.model, fit.opinf_report, cfg.opinf_truncation, files::decoder, digest));
  io::write_json(cfg.out_path(files::dmdc).string(), io::dmdc_to_json(fit.dmdc, cfg.dmdc_truncation, files::decoder, digest));
  io::write_json(cfg.out_path(files::fit_report).string(), fit_report_json(cfg, fit));
  io::write_file(cfg.out_path(files::lcurve_opinf).string(), internal::lcurve_csv(fit.lcurve_opinf));
  if (!fit.lcurve_decoder.empty())
  {
    io::write_file(cfg.out_path(files::lcurve_decoder).string(), internal::lcurve_csv(fit.lcurve_decoder));
  }
}

inline FitResult cmd_fit(const PipelineConfig &cfg)
{
  const auto data = stage("load", [&] { return load_data(cfg); });
  FitResult fit = fit_all(cfg, data);
  stage("write", [&] {
    write_fit_artifacts(cfg, fit);
    return 0;
  });
  return fit;
}

// --- simulate ---------------------------------------------------------------

struct MethodRun
{
  romsim::RomTrajectory trajectory;  // may stop early
  std::optional<double> blowup_time;  // last valid time when the run diverged
  std::string failure;
};

struct SimulateResult
{
  snapshots::SnapshotSet data;
  std::shared_ptr<const manifold::QuadDecoder> decoder;
  double train_end_time = 0.0;
  MethodRun qmf;
  MethodRun dmdc;
};

/// Loads fitted artifacts from the output directory, or fits them if absent.
inline std::pair<opinf::ReducedQuadModel, dmdc::DmdcModel> artifacts(const PipelineConfig &cfg,
                                                                      const snapshots::SnapshotSet &data)
{
  const bool present = fs::exists(cfg.out_path(files::model)) && fs::exists(cfg.out_path(files::dmdc));
  if (!present)
  {
    FitResult fit = fit_all(cfg, data);
    stage("write", [&] {
      write_fit_artifacts(cfg, fit);
      return 0;
    });
    return {std::move(fit.model), std::move(fit.dmdc)};
  }
  return stage("load artifacts", [&] {
    auto loaded = io::load_model(cfg.out_path(files::model).string());
    auto dm = io::load_dmdc(cfg.out_path(files::dmdc).string());
    dm.basis = std::make_shared<const manifold::PodBasis>(loaded.model.decoder->basis());
    if (loaded.model.decoder->n() != data.n())
    {
      throw DataError("fitted decoder has n = " + std::to_string(loaded.model.decoder->n()) + ", data has n = " +
                      std::to_string(data.n()));
    }
    return std::make_pair(std::move(loaded.model), std::move(dm));
  });
}

inline SimulateResult simulate_all(const PipelineConfig &cfg)
{
  SimulateResult out;
  out.data = stage("load", [&] { return load_data(cfg); });
  auto [model, dm] = artifacts(cfg, out.data);
  out.decoder = model.decoder;
  {
    const auto [train, test] = snapshots::split_train_test(out.data, split_spec(cfg, out.data.k()));
    out.train_end_time = train.times()(train.k() - 1);
  }
  const Vector q0 = manifold::encode(model.decoder->basis(), out.data.states().col(0));

  stage("simulate qmf", [&] {
    try
    {
      out.qmf.trajectory = romsim::integrate(model, q0, out.data.times(), cfg.integrator);
    }
    catch (const romsim::IntegrationError &e)
    {
      out.qmf.trajectory = e.partial();
      out.qmf.blowup_time = e.last_valid_time();
      out.qmf.failure = e.what();
    }
    return 0;
  });
  stage("simulate dmdc", [&] {
    try
    {
      out.dmdc.trajectory = dmdc::simulate_dmdc(dm, q0, out.data.k() - 1);
    }
    catch (const romsim::IntegrationError &e)
    {
      out.dmdc.trajectory = e.partial();
      out.dmdc.blowup_time = e.last_valid_time();
      out.dmdc.failure = e.what();
    }
    // Report on the data grid itself rather than t0 + j dt.
    out.dmdc.trajectory.times = out.data.times().head(out.dmdc.trajectory.size());
    return 0;
  });
  return out;
}

inline json run_status(const MethodRun &run)
{
  return {{"samples", run.trajectory.size()},
          {"diverged", run.blowup_time.has_value()},
          {"last_valid_time", run.blowup_time ? json(*run.blowup_time) : json(nullptr)},
          {"failure", run.failure}};
}

inline SimulateResult cmd_simulate(const PipelineConfig &cfg)
{
  SimulateResult sim = simulate_all(cfg);
  stage("write", [&] {
    io::save_trajectory_csv(sim.qmf.trajectory, cfg.out_path(files::traj_qmf).string());
    io::save_trajectory_csv(sim.dmdc.trajectory, cfg.out_path(files::traj_dmdc).string());
    if (sim.qmf.trajectory.size() > 0)
    {
      io::save_trajectory(sim.qmf.trajectory, cfg.out_path(files::traj_qmf_bin).string(), "qmf");
    }
    if (sim.dmdc.trajectory.size() > 0)
    {
      io::save_trajectory(sim.dmdc.trajectory, cfg.out_path(files::traj_dmdc_bin).string(), "dmdc");
    }
    io::write_json(cfg.out_path(files::simulate).string(),
                   {{"qmf", run_status(sim.qmf)}, {"dmdc", run_status(sim.dmdc)}, {"train_end_time", sim.train_end_time}});
    return 0;
  });
  return sim;
}

// --- compare ----------------------------------------------------------------

struct MethodSummary
{
  std::string method;
  evaluate::ErrorSeries series;
  evaluate::Summary summary;
};

struct CompareResult
{
  std::vector<MethodSummary> methods;  // qmf, dmdc
  Vector ref_norms;
};

namespace internal
{

/// Error series on the full data grid; samples after a divergence are +inf.
inline evaluate::ErrorSeries padded_errors(const snapshots::SnapshotSet &data, const Matrix &approx_prefix, double split_time)
{
  const Index valid = approx_prefix.cols();
  evaluate::ErrorSeries series;
  if (valid > 0)
  {
    const snapshots::SnapshotSet ref = data.slice(0, valid, data.label());
    series = evaluate::state_error_series(ref, snapshots::SnapshotSet(ref.times(), approx_prefix));
  }
  Vector values = Vector::Constant(data.k(), std::numeric_limits<double>::infinity());
  if (valid > 0)
  {
    values.head(valid) = series.values;
  }
  series.times = data.times();
  series.values = std::move(values);
  series.split_time = split_time;
  return series;
}

inline std::string summary_csv(const std::vector<MethodSummary> &methods)
{
  std::string out = "method,segment,relative_l2,max_error,blowup_time\n";
  for (const auto &m : methods)
  {
    const std::string blow = m.summary.blowup_time ? io::format_number(*m.summary.blowup_time) : "";
    const double test = m.summary.test_relative_l2.value_or(std::numeric_limits<double>::quiet_NaN());
    out += m.method + ",train," + io::format_number(m.summary.train_relative_l2) + "," + io::format_number(m.summary.max_error) + "," + blow + "\n";
    out += m.method + ",test," + io::format_number(test) + "," + io::format_number(m.summary.max_error) + "," + blow + "\n";
  }
  return out;
}

inline json summary_json(const std::vector<MethodSummary> &methods, double split_time)
{
  json rows = json::array();
  for (const auto &m : methods)
  {
    rows.push_back({{"method", m.method},
                    {"train_relative_l2", io::finite_or_null(m.summary.train_relative_l2)},
                    {"test_relative_l2", io::finite_or_null(m.summary.test_relative_l2.value_or(NAN))},
                    {"max_error", io::finite_or_null(m.summary.max_error)},
                    {"blowup_time", m.summary.blowup_time ? json(*m.summary.blowup_time) : json(nullptr)}});
  }
  return {{"format", "qmrom-summary"}, {"version", 1}, {"split_time", split_time}, {"methods", rows}};
}

}  // namespace internal

inline CompareResult cmd_compare(const PipelineConfig &cfg)
{
  SimulateResult sim = cmd_simulate(cfg);
  CompareResult out;
  out.ref_norms = evaluate::reference_norms(sim.data);
  const evaluate::OutputMatrix C = output_matrix(cfg, sim.data.n());

  const Matrix qmf_states = sim.decoder->decode_batch(sim.qmf.trajectory.Q);
  const Matrix dmdc_states = manifold::QuadDecoder::linear(sim.decoder->basis()).decode_batch(sim.dmdc.trajectory.Q);

  stage("evaluate", [&] {
    for (const auto &[name, states] : {std::pair<std::string, const Matrix *>{"qmf", &qmf_states}, {"dmdc", &dmdc_states}})
    {
      MethodSummary m;
      m.method = name;
      m.series = internal::padded_errors(sim.data, *states, sim.train_end_time);
      m.summary = evaluate::summarize(m.series, out.ref_norms);
      out.methods.push_back(std::move(m));
    }
    return 0;
  });

  stage("write", [&] {
    io::save_error_series_csv(out.methods[0].series, out.ref_norms, cfg.out_path(files::errors_qmf).string());
    io::save_error_series_csv(out.methods[1].series, out.ref_norms, cfg.out_path(files::errors_dmdc).string());
    std::vector<std::string> header{"time"};
    header.insert(header.end(), C.labels.begin(), C.labels.end());
    io::write_file(cfg.out_path(files::outputs_fom).string(),
                   io::series_csv(header, sim.data.times(), evaluate::output_series(C, sim.data)));
    io::write_file(cfg.out_path(files::outputs_qmf).string(),
                   io::series_csv(header, sim.qmf.trajectory.times, C.C * qmf_states));
    io::write_file(cfg.out_path(files::outputs_dmdc).string(),
                   io::series_csv(header, sim.dmdc.trajectory.times, C.C * dmdc_states));
    io::write_file(cfg.out_path(files::summary_csv).string(), internal::summary_csv(out.methods));
    io::write_json(cfg.out_path(files::summary_json).string(), internal::summary_json(out.methods, sim.train_end_time));
    return 0;
  });
  return out;
}

// --- report -----------------------------------------------------------------

/// Files a run directory must hold before it can be bundled.
inline const std::vector<std::string> &report_inputs()
{
  static const std::vector<std::string> names{files::decoder,    files::model,        files::dmdc,
                                              files::fit_report, files::lcurve_opinf, files::errors_qmf,
                                              files::errors_dmdc, files::summary_csv, files::summary_json};
  return names;
}

struct ReportResult
{
  std::string directory;
  std::vector<std::string> files;  // relative to directory, sorted
};

/**
 * Validates each run directory and copies its outputs into
 * <out>/report/<run>/ together with a merged summary and a manifest.
 */
inline ReportResult cmd_report(const std::vector<std::string> &runs, const PipelineConfig &cfg)
{
  if (runs.empty())
  {
    throw ConfigError("report: no run directories given");
  }
  std::vector<std::string> missing;
  for (const auto &run : runs)
  {
    for (const auto &name : report_inputs())
    {
      if (!fs::exists(fs::path(run) / name))
      {
        missing.push_back((fs::path(run) / name).string());
      }
    }
  }
  if (!missing.empty())
  {
    std::string msg = "report: missing inputs:";
    for (const auto &m : missing)
    {
      msg += "\n  " + m;
    }
    throw IOError(msg);
  }

  // Schema checks before anything is written.
  std::vector<json> summaries;
  for (const auto &run : runs)
  {
    stage("validate", [&] {
      io::load_model((fs::path(run) / files::model).string());
      io::load_dmdc((fs::path(run) / files::dmdc).string());
      const std::string path = (fs::path(run) / files::summary_json).string();
      const json s = io::read_json(path);
      io::internal::expect_format(s, "qmrom-summary", path);
      const json &methods = io::internal::field(s, "methods", path);
      if (!methods.is_array())
      {
        throw io::SchemaError("methods", path + ": field 'methods' must be an array");
      }
      for (const auto &m : methods)
      {
        io::internal::text(m, "method", path + ": methods[]");
        io::internal::field(m, "train_relative_l2", path + ": methods[]");
        io::internal::field(m, "test_relative_l2", path + ": methods[]");
      }
      summaries.push_back(s);
      return 0;
    });
  }

  const fs::path dest = fs::path(cfg.out) / "report";
  fs::create_directories(dest);
  std::vector<std::string> names;
  std::map<std::string, int> seen;
  for (const auto &run : runs)
  {
    std::string base = fs::path(run).lexically_normal().filename().string();
    if (base.empty() || base == ".")
    {
      base = fs::absolute(run).lexically_normal().filename().string();
    }
    if (base.empty())
    {
      base = "run";
    }
    const int count = seen[base]++;
    names.push_back(count ? base + "_" + std::to_string(count) : base);
  }

  std::vector<std::string> written;
  std::string merged = "run,method,segment,relative_l2,max_error,blowup_time\n";
  for (std::size_t i = 0; i < runs.size(); ++i)
  {
    for (const auto &file : report_inputs())
    {
      const std::string rel = names[i] + "/" + file;
      io::write_file((dest / rel).string(), io::read_file((fs::path(runs[i]) / file).string()));
      written.push_back(rel);
    }
    for (const auto &m : summaries[i]["methods"])
    {
      const auto num = [&](const char *key) {
        return m[key].is_number() ? io::format_number(m[key].get<double>()) : std::string("inf");
      };
      const std::string blow = m.contains("blowup_time") && m["blowup_time"].is_number()
                                   ? io::format_number(m["blowup_time"].get<double>())
                                   : "";
      const std::string method = m["method"].get<std::string>();
      merged += names[i] + "," + method + ",train," + num("train_relative_l2") + "," + num("max_error") + "," + blow + "\n";
      merged += names[i] + "," + method + ",test," + num("test_relative_l2") + "," + num("max_error") + "," + blow + "\n";
    }
  }
  io::write_file((dest / "summary_all.csv").string(), merged);
  written.push_back("summary_all.csv");
  std::sort(written.begin(), written.end());

  json entries = json::array();
  for (const auto &rel : written)
  {
    const std::string bytes = io::read_file((dest / rel).string());
    entries.push_back({{"path", rel}, {"bytes", bytes.size()}, {"sha256", io::sha256_hex(bytes)}});
  }
  json runs_json = json::array();
  for (std::size_t i = 0; i < runs.size(); ++i)
  {
    // Relative to the bundle so the manifest does not depend on where runs live.
    const fs::path source = fs::absolute(runs[i]).lexically_normal().lexically_relative(fs::absolute(dest).lexically_normal());
    runs_json.push_back({{"name", names[i]}, {"source", source.generic_string()}});
  }
  io::write_json((dest / files::manifest).string(), {{"format", "qmrom-report"}, {"version", 1}, {"runs", runs_json}, {"files", entries}});

  ReportResult out;
  out.directory = dest.string();
  out.files = written;
  out.files.push_back(files::manifest);
  std::sort(out.files.begin(), out.files.end());
  return out;
}

}  // namespace qmrom::pipeline

#endif  // QMROM_PIPELINE_HPP
