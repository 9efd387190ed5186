// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_IO_HPP
#define QMROM_IO_HPP

#include "qmrom/core.hpp"
#include "qmrom/dmdc.hpp"
#include "qmrom/evaluate.hpp"
#include "qmrom/manifold.hpp"
#include "qmrom/opinf.hpp"
#include "qmrom/regression.hpp"
#include "qmrom/romsim.hpp"
#include "qmrom/snapshots.hpp"
#include "qmrom/tensorops.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

// JSON and CSV persistence for decoders, models, trajectories, and reports.
namespace qmrom::io
{

using json = nlohmann::json;
namespace fs = std::filesystem;

/// A persisted artifact is missing a field or has one of the wrong shape.
class SchemaError : public DataError
{
public:
  SchemaError(std::string field, const std::string &what) : DataError(what), field_(std::move(field)) {}
  const std::string &field() const noexcept { return field_; }

private:
  std::string field_;
};

// --- files ------------------------------------------------------------------

inline std::string read_file(const std::string &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw IOError("cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string &path, const std::string &content)
{
  const fs::path p(path);
  if (p.has_parent_path())
  {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
  {
    throw IOError("cannot open " + path + " for writing");
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out)
  {
    throw IOError("write failed: " + path);
  }
}

inline std::string sha256_hex(const std::string &bytes)
{
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
  {
    throw IOError("sha256 computation failed");
  }
  static const char *hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i)
  {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_file(const std::string &path) { return sha256_hex(read_file(path)); }

inline void write_json(const std::string &path, const json &j) { write_file(path, j.dump(2) + "\n"); }

inline json read_json(const std::string &path)
{
  const std::string text = read_file(path);
  try
  {
    return json::parse(text);
  }
  catch (const json::parse_error &e)
  {
    throw SchemaError("<document>", path + ": invalid JSON: " + e.what());
  }
}

// --- numbers ----------------------------------------------------------------

/// Round-trippable text for a double; non-finite values become inf/-inf/nan.
inline std::string format_number(double v)
{
  if (std::isnan(v))
  {
    return "nan";
  }
  if (std::isinf(v))
  {
    return v > 0 ? "inf" : "-inf";
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json matrix_to_json(const Eigen::Ref<const Matrix> &m)
{
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i)
  {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j)
    {
      row.push_back(m(i, j));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Eigen::Ref<const Vector> &v)
{
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i)
  {
    out.push_back(v(i));
  }
  return out;
}

namespace internal
{

inline const json &field(const json &obj, const std::string &name, const std::string &where)
{
  if (!obj.is_object() || !obj.contains(name))
  {
    throw SchemaError(name, where + ": missing field '" + name + "'");
  }
  return obj.at(name);
}

inline double number(const json &obj, const std::string &name, const std::string &where)
{
  const json &v = field(obj, name, where);
  if (!v.is_number())
  {
    throw SchemaError(name, where + ": field '" + name + "' must be a number");
  }
  return v.get<double>();
}

inline Index integer(const json &obj, const std::string &name, const std::string &where)
{
  const json &v = field(obj, name, where);
  if (!v.is_number_integer())
  {
    throw SchemaError(name, where + ": field '" + name + "' must be an integer");
  }
  return v.get<Index>();
}

inline std::string text(const json &obj, const std::string &name, const std::string &where)
{
  const json &v = field(obj, name, where);
  if (!v.is_string())
  {
    throw SchemaError(name, where + ": field '" + name + "' must be a string");
  }
  return v.get<std::string>();
}

inline Matrix matrix(const json &obj, const std::string &name, Index rows, Index cols, const std::string &where)
{
  const json &v = field(obj, name, where);
  const auto bad = [&] {
    return SchemaError(name, where + ": field '" + name + "' must be a " + detail::dims(rows, cols) + " array of rows");
  };
  if (!v.is_array() || static_cast<Index>(v.size()) != rows)
  {
    throw bad();
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
  {
    const json &row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
    {
      throw bad();
    }
    for (Index j = 0; j < cols; ++j)
    {
      const json &x = row[static_cast<std::size_t>(j)];
      if (!x.is_number())
      {
        throw bad();
      }
      m(i, j) = x.get<double>();
    }
  }
  return m;
}

inline Vector vector(const json &obj, const std::string &name, Index size, const std::string &where)
{
  const json &v = field(obj, name, where);
  if (!v.is_array() || (size >= 0 && static_cast<Index>(v.size()) != size))
  {
    throw SchemaError(name, where + ": field '" + name + "' must be an array of length " + std::to_string(size));
  }
  Vector out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
  {
    if (!v[i].is_number())
    {
      throw SchemaError(name, where + ": field '" + name + "' must hold numbers");
    }
    out(static_cast<Index>(i)) = v[i].get<double>();
  }
  return out;
}

inline void expect_format(const json &j, const std::string &format, const std::string &where)
{
  if (text(j, "format", where) != format)
  {
    throw SchemaError("format", where + ": expected format '" + format + "'");
  }
  if (integer(j, "version", where) != 1)
  {
    throw SchemaError("version", where + ": unsupported version");
  }
}

}  // namespace internal

// --- truncation policies ----------------------------------------------------

inline json policy_to_json(const regression::TruncationPolicy &p)
{
  using Mode = regression::TruncationPolicy::Mode;
  switch (p.mode)
  {
  case Mode::Rank: return {{"mode", "rank"}, {"value", p.rank}};
  case Mode::Threshold: return {{"mode", "threshold"}, {"value", p.threshold}};
  case Mode::None: break;
  }
  return {{"mode", "none"}};
}

inline regression::TruncationPolicy policy_from_json(const json &j, const std::string &where)
{
  const std::string mode = internal::text(j, "mode", where);
  try
  {
    if (mode == "none")
    {
      return regression::TruncationPolicy::none();
    }
    if (mode == "rank")
    {
      return regression::TruncationPolicy::keep_rank(internal::integer(j, "value", where));
    }
    if (mode == "threshold")
    {
      return regression::TruncationPolicy::relative_threshold(internal::number(j, "value", where));
    }
  }
  catch (const ConfigError &e)
  {
    throw SchemaError("value", where + ": " + e.what());
  }
  throw SchemaError("mode", where + ": unknown truncation mode '" + mode + "'");
}

inline json lstsq_report_to_json(double residual, double solution, Index rank, const Vector &sigma)
{
  return {{"residual_norm", residual},
          {"solution_norm", solution},
          {"effective_rank", rank},
          {"singular_values", vector_to_json(sigma)}};
}

// --- decoder ----------------------------------------------------------------

inline json decoder_to_json(const manifold::QuadDecoder &dec, const json &fit_metadata = json::object())
{
  return {{"format", "qmrom-decoder"},
          {"version", 1},
          {"n", dec.n()},
          {"r", dec.r()},
          {"layout", tensorops::QuadFeatureLayout::order_marker()},
          {"V", matrix_to_json(dec.V())},
          {"omega_c", matrix_to_json(dec.omega_c())},
          {"offset", vector_to_json(dec.basis().offset)},
          {"singular_values", vector_to_json(dec.basis().singular_values)},
          {"fit", fit_metadata}};
}

inline manifold::QuadDecoder decoder_from_json(const json &j, const std::string &where = "decoder")
{
  internal::expect_format(j, "qmrom-decoder", where);
  const Index n = internal::integer(j, "n", where);
  const Index r = internal::integer(j, "r", where);
  if (n < 1 || r < 1 || r > n)
  {
    throw SchemaError("r", where + ": need 1 <= r <= n");
  }
  if (internal::text(j, "layout", where) != tensorops::QuadFeatureLayout::order_marker())
  {
    throw SchemaError("layout", where + ": unsupported feature layout");
  }
  manifold::PodBasis basis;
  basis.V = internal::matrix(j, "V", n, r, where);
  basis.offset = internal::vector(j, "offset", n, where);
  basis.singular_values = internal::vector(j, "singular_values", r, where);
  Matrix omega = internal::matrix(j, "omega_c", n, tensorops::half_dim(r), where);
  return {std::move(basis), std::move(omega)};
}

inline void save_decoder(const manifold::QuadDecoder &dec, const std::string &path, const json &fit_metadata = json::object())
{
  write_json(path, decoder_to_json(dec, fit_metadata));
}

inline manifold::QuadDecoder load_decoder(const std::string &path) { return decoder_from_json(read_json(path), path); }

// --- reduced quadratic model --------------------------------------------------

/// decoder_path is stored as given (relative paths resolve against the model file's directory).
inline json model_to_json(const opinf::ReducedQuadModel &model, const opinf::OpInfReport &report,
                          const regression::TruncationPolicy &policy, const std::string &decoder_path,
                          const std::string &decoder_sha256)
{
  json prov = json::object();
  for (const auto &[k, v] : model.provenance)
  {
    prov[k] = v;
  }
  return {{"format", "qmrom-model"},
          {"version", 1},
          {"r", model.r()},
          {"layout", tensorops::QuadFeatureLayout::order_marker()},
          {"A1", matrix_to_json(model.operators.A1)},
          {"A2c", matrix_to_json(model.operators.A2c)},
          {"B1", vector_to_json(model.operators.B1)},
          {"truncation", policy_to_json(policy)},
          {"report", lstsq_report_to_json(report.residual_norm, report.solution_norm, report.effective_rank,
                                          report.singular_values)},
          {"decoder", {{"path", decoder_path}, {"sha256", decoder_sha256}}},
          {"provenance", prov}};
}

struct LoadedModel
{
  opinf::ReducedQuadModel model;
  regression::TruncationPolicy policy;
  std::string decoder_path;
};

inline opinf::QuadOperators operators_from_json(const json &j, Index r, const std::string &where)
{
  opinf::QuadOperators ops;
  ops.A1 = internal::matrix(j, "A1", r, r, where);
  ops.A2c = internal::matrix(j, "A2c", r, tensorops::half_dim(r), where);
  ops.B1 = internal::vector(j, "B1", r, where);
  return ops;
}

inline LoadedModel load_model(const std::string &path)
{
  const json j = read_json(path);
  internal::expect_format(j, "qmrom-model", path);
  const Index r = internal::integer(j, "r", path);
  if (r < 1)
  {
    throw SchemaError("r", path + ": r must be positive");
  }
  LoadedModel out;
  out.model.operators = operators_from_json(j, r, path);
  out.policy = policy_from_json(internal::field(j, "truncation", path), path + ": truncation");
  const json &ref = internal::field(j, "decoder", path);
  const std::string rel = internal::text(ref, "path", path + ": decoder");
  const std::string digest = internal::text(ref, "sha256", path + ": decoder");
  fs::path dp(rel);
  if (dp.is_relative())
  {
    dp = fs::path(path).parent_path() / dp;
  }
  out.decoder_path = dp.string();
  const std::string bytes = read_file(out.decoder_path);
  if (sha256_hex(bytes) != digest)
  {
    throw SchemaError("sha256", path + ": decoder file " + out.decoder_path + " does not match recorded hash");
  }
  out.model.decoder = std::make_shared<const manifold::QuadDecoder>(decoder_from_json(json::parse(bytes), out.decoder_path));
  if (const auto it = j.find("provenance"); it != j.end() && it->is_object())
  {
    for (const auto &[k, v] : it->items())
    {
      if (v.is_string())
      {
        out.model.provenance[k] = v.get<std::string>();
      }
    }
  }
  try
  {
    out.model.validate();
  }
  catch (const DataError &e)
  {
    throw SchemaError("r", path + ": " + e.what());
  }
  return out;
}

// --- DMDc ------------------------------------------------------------------

inline json dmdc_to_json(const dmdc::DmdcModel &m, const regression::TruncationPolicy &policy,
                         const std::string &decoder_path, const std::string &decoder_sha256)
{
  return {{"format", "qmrom-dmdc"},
          {"version", 1},
          {"r", m.r()},
          {"Ad", matrix_to_json(m.Ad)},
          {"bd", vector_to_json(m.bd)},
          {"dt", m.dt},
          {"t0", m.t0},
          {"truncation", policy_to_json(policy)},
          {"report", lstsq_report_to_json(m.report.residual_norm, m.report.solution_norm, m.report.effective_rank,
                                          m.report.singular_values)},
          {"decoder", {{"path", decoder_path}, {"sha256", decoder_sha256}}}};
}

inline dmdc::DmdcModel load_dmdc(const std::string &path)
{
  const json j = read_json(path);
  internal::expect_format(j, "qmrom-dmdc", path);
  const Index r = internal::integer(j, "r", path);
  if (r < 1)
  {
    throw SchemaError("r", path + ": r must be positive");
  }
  dmdc::DmdcModel m;
  m.Ad = internal::matrix(j, "Ad", r, r, path);
  m.bd = internal::vector(j, "bd", r, path);
  m.dt = internal::number(j, "dt", path);
  m.t0 = internal::number(j, "t0", path);
  if (!(m.dt > 0.0))
  {
    throw SchemaError("dt", path + ": dt must be positive");
  }
  return m;
}

// --- CSV -------------------------------------------------------------------

/// One row per time: t, then each row of `values` at that time.
inline std::string series_csv(const std::vector<std::string> &header, const Eigen::Ref<const Vector> &times,
                              const Eigen::Ref<const Matrix> &values)
{
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i)
  {
    out += (i ? "," : "") + header[i];
  }
  out += "\n";
  for (Index j = 0; j < times.size(); ++j)
  {
    out += format_number(times(j));
    for (Index i = 0; i < values.rows(); ++i)
    {
      out += "," + format_number(values(i, j));
    }
    out += "\n";
  }
  return out;
}

inline void save_trajectory_csv(const romsim::RomTrajectory &traj, const std::string &path)
{
  std::vector<std::string> header{"time"};
  for (Index i = 0; i < traj.r(); ++i)
  {
    header.push_back("q" + std::to_string(i + 1));
  }
  write_file(path, series_csv(header, traj.times, traj.Q));
}

/// Reduced trajectory in the snapshot binary format (states = Q).
inline void save_trajectory(const romsim::RomTrajectory &traj, const std::string &path, const std::string &label)
{
  snapshots::save_snapshots(snapshots::SnapshotSet(traj.times, traj.Q, std::nullopt, label), path);
}

inline void save_error_series_csv(const evaluate::ErrorSeries &series, const Eigen::Ref<const Vector> &ref_norms,
                                  const std::string &path)
{
  Matrix values(4, series.times.size());
  for (Index j = 0; j < series.times.size(); ++j)
  {
    values(0, j) = series.values(j);
    values(1, j) = ref_norms(j) > 0.0 ? series.values(j) / ref_norms(j) : (series.values(j) == 0.0 ? 0.0 : INFINITY);
    values(2, j) = ref_norms(j);
    values(3, j) = series.split_time && series.times(j) > *series.split_time ? 1.0 : 0.0;
  }
  write_file(path, series_csv({"time", "abs_error", "rel_error", "ref_norm", "extrapolation"}, series.times, values));
}

}  // namespace qmrom::io

#endif  // QMROM_IO_HPP
