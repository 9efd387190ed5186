// Copyright 2026 The qmrom Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef QMROM_SNAPSHOTS_HPP
#define QMROM_SNAPSHOTS_HPP

#include "qmrom/core.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace qmrom::snapshots
{

/// Time grid plus the n x k snapshot matrix, optionally with exact state derivatives.
class SnapshotSet
{
public:
  SnapshotSet() = default;

  SnapshotSet(Vector times, Matrix states, std::optional<Matrix> derivatives = std::nullopt, std::string label = {})
      : times_(std::move(times)), states_(std::move(states)), derivatives_(std::move(derivatives)), label_(std::move(label))
  {
    if (states_.cols() != times_.size())
    {
      throw DataError("SnapshotSet: " + std::to_string(times_.size()) + " time stamps for " +
                      std::to_string(states_.cols()) + " snapshots");
    }
    for (Index j = 1; j < times_.size(); ++j)
    {
      if (!(times_(j) > times_(j - 1)))
      {
        throw DataError("SnapshotSet: times not strictly increasing at index " + std::to_string(j));
      }
    }
    if (derivatives_ && (derivatives_->rows() != states_.rows() || derivatives_->cols() != states_.cols()))
    {
      throw DataError("SnapshotSet: derivative matrix " + detail::dims(derivatives_->rows(), derivatives_->cols()) +
                      " does not match states " + detail::dims(states_.rows(), states_.cols()));
    }
  }

  Index n() const noexcept { return states_.rows(); }
  Index k() const noexcept { return states_.cols(); }
  bool empty() const noexcept { return times_.size() == 0; }
  const Vector &times() const noexcept { return times_; }
  const Matrix &states() const noexcept { return states_; }
  bool has_derivatives() const noexcept { return derivatives_.has_value(); }
  const std::optional<Matrix> &derivatives() const noexcept { return derivatives_; }
  const std::string &label() const noexcept { return label_; }

  /// Columns [first, first + count).
  SnapshotSet slice(Index first, Index count, std::string label) const
  {
    std::optional<Matrix> d;
    if (derivatives_)
    {
      d = derivatives_->middleCols(first, count);
    }
    return {times_.segment(first, count), states_.middleCols(first, count), std::move(d), std::move(label)};
  }

  SnapshotSet with_label(std::string label) const { return {times_, states_, derivatives_, std::move(label)}; }

  bool operator==(const SnapshotSet &other) const
  {
    const bool same_derivatives = derivatives_.has_value() == other.derivatives_.has_value() &&
                                  (!derivatives_ || *derivatives_ == *other.derivatives_);
    return label_ == other.label_ && times_.size() == other.times_.size() && times_ == other.times_ &&
           states_.rows() == other.states_.rows() && states_.cols() == other.states_.cols() &&
           states_ == other.states_ && same_derivatives;
  }

private:
  Vector times_;
  Matrix states_;
  std::optional<Matrix> derivatives_;
  std::string label_;
};

/// Either a count of leading snapshots or a closed training interval.
struct SplitSpec
{
  std::variant<Index, std::pair<double, double>> value = Index{2};

  static SplitSpec count(Index train_count) { return {train_count}; }
  static SplitSpec interval(double t_a, double t_b) { return {std::make_pair(t_a, t_b)}; }
};

/**
 * Time derivatives of each row of Q on a (possibly nonuniform) grid.
 *
 * Interior columns use the three-point central formula, endpoints the
 * second-order one-sided three-point formulas. All stencils are exact for
 * quadratics in t.
 */
inline Matrix estimate_derivatives(const Eigen::Ref<const Matrix> &Q, const Eigen::Ref<const Vector> &times)
{
  const Index k = times.size();
  if (k < 3)
  {
    throw DataError("estimate_derivatives: need at least 3 samples, got " + std::to_string(k));
  }
  detail::require_dims(Q.cols() == k, "estimate_derivatives", "columns vs time stamps");
  for (Index j = 1; j < k; ++j)
  {
    if (!(times(j) > times(j - 1)))
    {
      throw DataError("estimate_derivatives: times not strictly increasing");
    }
  }

  Matrix dQ(Q.rows(), k);
  {
    const double h1 = times(1) - times(0);
    const double h2 = times(2) - times(1);
    dQ.col(0) = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * Q.col(0) + (h1 + h2) / (h1 * h2) * Q.col(1) -
                h1 / (h2 * (h1 + h2)) * Q.col(2);
  }
  for (Index j = 1; j + 1 < k; ++j)
  {
    const double h1 = times(j) - times(j - 1);
    const double h2 = times(j + 1) - times(j);
    dQ.col(j) = -h2 / (h1 * (h1 + h2)) * Q.col(j - 1) + (h2 - h1) / (h1 * h2) * Q.col(j) +
                h1 / (h2 * (h1 + h2)) * Q.col(j + 1);
  }
  {
    const double h1 = times(k - 2) - times(k - 3);
    const double h2 = times(k - 1) - times(k - 2);
    dQ.col(k - 1) = h2 / (h1 * (h1 + h2)) * Q.col(k - 3) - (h1 + h2) / (h1 * h2) * Q.col(k - 2) +
                    (2.0 * h2 + h1) / (h2 * (h1 + h2)) * Q.col(k - 1);
  }
  return dQ;
}

/// Snapshots with t_a <= t_j <= t_b, in order.
inline SnapshotSet window(const SnapshotSet &set, double t_a, double t_b)
{
  Index first = 0;
  while (first < set.k() && set.times()(first) < t_a)
  {
    ++first;
  }
  Index last = first;
  while (last < set.k() && set.times()(last) <= t_b)
  {
    ++last;
  }
  if (last - first < 1)
  {
    throw DataError("window: no snapshots inside [" + std::to_string(t_a) + ", " + std::to_string(t_b) + "]");
  }
  return set.slice(first, last - first, set.label());
}

/**
 * Leading training block and the remaining test block.
 *
 * For an interval spec the training set is window(t_a, t_b) and the test set
 * holds every later snapshot; snapshots before t_a belong to neither.
 */
inline std::pair<SnapshotSet, SnapshotSet> split_train_test(const SnapshotSet &set, const SplitSpec &spec)
{
  Index first = 0;
  Index count = 0;
  if (const auto *c = std::get_if<Index>(&spec.value))
  {
    count = *c;
  }
  else
  {
    const auto [t_a, t_b] = std::get<std::pair<double, double>>(spec.value);
    while (first < set.k() && set.times()(first) < t_a)
    {
      ++first;
    }
    Index last = first;
    while (last < set.k() && set.times()(last) <= t_b)
    {
      ++last;
    }
    count = last - first;
  }
  if (count < 2 || first + count >= set.k())
  {
    throw ConfigError("split_train_test: training block of " + std::to_string(count) + " snapshots invalid for " +
                      std::to_string(set.k()) + " snapshots (need at least 2 and a nonempty test block)");
  }
  const Index rest = set.k() - first - count;
  return {set.slice(first, count, set.label() + ":train"), set.slice(first + count, rest, set.label() + ":test")};
}

/// Column-wise union of two sets whose grids follow each other.
inline SnapshotSet concatenate(const SnapshotSet &a, const SnapshotSet &b, std::string label)
{
  detail::require_dims(a.n() == b.n(), "concatenate", "state dimensions differ");
  Vector t(a.k() + b.k());
  t << a.times(), b.times();
  Matrix x(a.n(), a.k() + b.k());
  x << a.states(), b.states();
  std::optional<Matrix> d;
  if (a.has_derivatives() && b.has_derivatives())
  {
    d = Matrix(a.n(), a.k() + b.k());
    *d << *a.derivatives(), *b.derivatives();
  }
  return {std::move(t), std::move(x), std::move(d), std::move(label)};
}

// ---------------------------------------------------------------------------
// Binary snapshot file
//
//   "QROM" | u32 version | u8 flags | u64 n | u64 k | f64 times[k]
//   | f64 states[n*k] (column-major) | [f64 derivatives[n*k]] | u32 len | label
//
// Everything little-endian. Flag bit 0 marks the derivative block.
// ---------------------------------------------------------------------------

/// Distinguishes the ways a snapshot file can be rejected.
class SnapshotFormatError : public DataError
{
public:
  enum class Reason
  {
    BadMagic,
    BadVersion,
    Truncated,
    NonIncreasingTimes,
    Malformed
  };

  SnapshotFormatError(Reason reason, const std::string &what) : DataError(what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

private:
  Reason reason_;
};

inline constexpr std::uint32_t kSnapshotFileVersion = 1;
inline constexpr char kSnapshotMagic[4] = {'Q', 'R', 'O', 'M'};

namespace wire
{

template <typename T>
T byteswap_if_needed(T value)
{
  if constexpr (std::endian::native == std::endian::little)
  {
    return value;
  }
  else
  {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
    {
      std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

template <typename T>
void put(std::string &buf, T value)
{
  value = byteswap_if_needed(value);
  const auto *p = reinterpret_cast<const char *>(&value);
  buf.append(p, sizeof(T));
}

inline void put_doubles(std::string &buf, const double *data, Index count)
{
  for (Index i = 0; i < count; ++i)
  {
    put(buf, data[i]);
  }
}

class Reader
{
public:
  explicit Reader(const std::string &buf) : buf_(buf) {}

  template <typename T>
  T get(const char *what)
  {
    if (pos_ + sizeof(T) > buf_.size())
    {
      throw SnapshotFormatError(SnapshotFormatError::Reason::Truncated,
                                std::string("snapshot file truncated while reading ") + what);
    }
    T value;
    std::memcpy(&value, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_needed(value);
  }

  void get_doubles(double *out, Index count, const char *what)
  {
    if (static_cast<std::uint64_t>(count) > (buf_.size() - pos_) / sizeof(double))
    {
      throw SnapshotFormatError(SnapshotFormatError::Reason::Truncated,
                                std::string("snapshot file truncated while reading ") + what);
    }
    for (Index i = 0; i < count; ++i)
    {
      out[i] = get<double>(what);
    }
  }

  std::string get_bytes(std::size_t count, const char *what)
  {
    if (pos_ + count > buf_.size())
    {
      throw SnapshotFormatError(SnapshotFormatError::Reason::Truncated,
                                std::string("snapshot file truncated while reading ") + what);
    }
    std::string out = buf_.substr(pos_, count);
    pos_ += count;
    return out;
  }

  bool at_end() const noexcept { return pos_ == buf_.size(); }

private:
  const std::string &buf_;
  std::size_t pos_ = 0;
};

}  // namespace wire

inline std::string encode_snapshots(const SnapshotSet &set)
{
  std::string buf;
  buf.reserve(64 + static_cast<std::size_t>(set.k() * (1 + set.n() * (set.has_derivatives() ? 2 : 1))) * 8 +
              set.label().size());
  buf.append(kSnapshotMagic, 4);
  wire::put<std::uint32_t>(buf, kSnapshotFileVersion);
  wire::put<std::uint8_t>(buf, set.has_derivatives() ? 1 : 0);
  wire::put<std::uint64_t>(buf, static_cast<std::uint64_t>(set.n()));
  wire::put<std::uint64_t>(buf, static_cast<std::uint64_t>(set.k()));
  wire::put_doubles(buf, set.times().data(), set.k());
  wire::put_doubles(buf, set.states().data(), set.n() * set.k());
  if (set.has_derivatives())
  {
    wire::put_doubles(buf, set.derivatives()->data(), set.n() * set.k());
  }
  wire::put<std::uint32_t>(buf, static_cast<std::uint32_t>(set.label().size()));
  buf.append(set.label());
  return buf;
}

inline SnapshotSet decode_snapshots(const std::string &buf)
{
  using Reason = SnapshotFormatError::Reason;
  wire::Reader in(buf);
  if (in.get_bytes(4, "magic") != std::string(kSnapshotMagic, 4))
  {
    throw SnapshotFormatError(Reason::BadMagic, "snapshot file: bad magic (expected \"QROM\")");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kSnapshotFileVersion)
  {
    throw SnapshotFormatError(Reason::BadVersion, "snapshot file: unsupported version " + std::to_string(version));
  }
  const auto flags = in.get<std::uint8_t>("flags");
  if ((flags & ~std::uint8_t{1}) != 0)
  {
    throw SnapshotFormatError(Reason::Malformed, "snapshot file: unknown flag bits set");
  }
  const auto n = in.get<std::uint64_t>("n");
  const auto k = in.get<std::uint64_t>("k");
  if (k > 0 && n > (std::uint64_t{1} << 40) / k)
  {
    throw SnapshotFormatError(Reason::Malformed, "snapshot file: implausible dimensions");
  }
  Vector times(static_cast<Index>(k));
  in.get_doubles(times.data(), times.size(), "times");
  for (Index j = 1; j < times.size(); ++j)
  {
    if (!(times(j) > times(j - 1)))
    {
      throw SnapshotFormatError(Reason::NonIncreasingTimes,
                                "snapshot file: times not strictly increasing at index " + std::to_string(j));
    }
  }
  Matrix states(static_cast<Index>(n), static_cast<Index>(k));
  in.get_doubles(states.data(), states.size(), "states");
  std::optional<Matrix> derivatives;
  if (flags & 1)
  {
    derivatives = Matrix(static_cast<Index>(n), static_cast<Index>(k));
    in.get_doubles(derivatives->data(), derivatives->size(), "derivatives");
  }
  const auto len = in.get<std::uint32_t>("label length");
  std::string label = in.get_bytes(len, "label");
  if (!in.at_end())
  {
    throw SnapshotFormatError(Reason::Malformed, "snapshot file: trailing bytes after label");
  }
  return {std::move(times), std::move(states), std::move(derivatives), std::move(label)};
}

inline void save_snapshots(const SnapshotSet &set, const std::string &path)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
  {
    throw IOError("cannot open " + path + " for writing");
  }
  const std::string buf = encode_snapshots(set);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out)
  {
    throw IOError("write failed: " + path);
  }
}

inline SnapshotSet load_snapshots(const std::string &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw IOError("cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_snapshots(ss.str());
}

/// Plain-text import: one row per snapshot, first column time, then the state entries.
inline SnapshotSet load_snapshots_csv(const std::string &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw IOError("cannot open " + path);
  }
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line))
  {
    ++lineno;
    if (line.empty() || line[0] == '#')
    {
      continue;
    }
    std::vector<double> values;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ','))
    {
      try
      {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
      }
      catch (const std::exception &)
      {
        if (rows.empty() && times.empty() && values.empty())
        {
          values.clear();
          break;  // header row
        }
        throw DataError(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
    }
    if (values.empty())
    {
      continue;
    }
    if (values.size() < 2)
    {
      throw DataError(path + ":" + std::to_string(lineno) + ": need a time and at least one state entry");
    }
    if (!rows.empty() && values.size() - 1 != rows.front().size())
    {
      throw DataError(path + ":" + std::to_string(lineno) + ": inconsistent column count");
    }
    times.push_back(values.front());
    rows.emplace_back(values.begin() + 1, values.end());
  }
  if (rows.empty())
  {
    throw DataError(path + ": no snapshots");
  }
  const auto k = static_cast<Index>(rows.size());
  const auto n = static_cast<Index>(rows.front().size());
  Vector t(k);
  Matrix x(n, k);
  for (Index j = 0; j < k; ++j)
  {
    t(j) = times[static_cast<std::size_t>(j)];
    for (Index i = 0; i < n; ++i)
    {
      x(i, j) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    }
  }
  return {std::move(t), std::move(x), std::nullopt, path};
}

}  // namespace qmrom::snapshots

#endif  // QMROM_SNAPSHOTS_HPP
