#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dsvb/tensor.hpp"

namespace dsvb {

struct SchemaError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct TooShort : Error {
  using Error::Error;
};
struct EmptyDataset : Error {
  using Error::Error;
};

enum class Domain { source, target };

inline const char* to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

constexpr Index kMeasurementDim = 2;  // actuation pressure, flex reading
constexpr Index kMarkerCount = 10;
constexpr Index kStateDim = 2 * kMarkerCount + 2;  // marker coords + contact forces X,Z

inline std::vector<std::string> measurement_columns() { return {"pressure", "flex"}; }

inline std::vector<std::string> state_columns() {
  std::vector<std::string> cols;
  for (Index m = 1; m <= kMarkerCount; ++m) {
    cols.push_back("m" + std::to_string(m) + "x");
    cols.push_back("m" + std::to_string(m) + "z");
  }
  cols.push_back("fx");
  cols.push_back("fz");
  return cols;
}

/// Multivariate time series in the soft-finger schema: measurements always
/// present, per-step state labels optional.
struct SequenceDataset {
  MatrixRM measurements;               // [T x n_y]
  std::optional<MatrixRM> states;      // [T x n_x]
  Domain domain = Domain::source;
  double sample_rate_hz = 10.0;

  Index rows() const { return measurements.rows(); }
  bool labeled() const { return states.has_value(); }

  SequenceDataset without_labels() const {
    SequenceDataset copy = *this;
    copy.states.reset();
    return copy;
  }
};

// ---------------------------------------------------------------------------
// CSV schema:  t,pressure,flex,m1x,m1z,...,m10x,m10z,fx,fz
// A measurement-only file carries just t,pressure,flex.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline std::string expected_header(bool with_states) {
  std::string header = "t";
  for (const auto& c : measurement_columns()) header += "," + c;
  if (with_states)
    for (const auto& c : state_columns()) header += "," + c;
  return header;
}

inline double parse_cell(const std::string& cell, Index row, const std::string& column) {
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &consumed);
  } catch (const std::exception&) {
    throw ParseError("non-numeric cell '" + cell + "' in column " + column + " at data row " +
                     std::to_string(row));
  }
  if (consumed != cell.size())
    throw ParseError("trailing junk in cell '" + cell + "' in column " + column +
                     " at data row " + std::to_string(row));
  return value;
}

}  // namespace detail

inline SequenceDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw SchemaError(path + ": empty file");
  if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();

  bool with_states;
  if (header_line == detail::expected_header(true)) {
    with_states = true;
  } else if (header_line == detail::expected_header(false)) {
    with_states = false;
  } else {
    throw SchemaError(path + ": header does not match schema; got '" + header_line + "'");
  }

  const Index n_cols = 1 + kMeasurementDim + (with_states ? kStateDim : 0);
  std::vector<double> meas, states;
  std::string line;
  Index row = 0;
  std::vector<std::string> names{"t"};
  for (const auto& c : measurement_columns()) names.push_back(c);
  if (with_states)
    for (const auto& c : state_columns()) names.push_back(c);

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (static_cast<Index>(cells.size()) != n_cols)
      throw ParseError(path + ": expected " + std::to_string(n_cols) + " cells, got " +
                       std::to_string(cells.size()) + " at data row " + std::to_string(row));
    for (Index c = 0; c < n_cols; ++c) {
      const double v = detail::parse_cell(cells[c], row, names[c]);
      if (!std::isfinite(v))
        throw ParseError(path + ": non-finite value in column " + names[c] + " at data row " +
                         std::to_string(row));
      if (c == 0) continue;  // time column is regenerated from the sample rate
      if (c <= kMeasurementDim) {
        meas.push_back(v);
      } else {
        states.push_back(v);
      }
    }
  }
  if (row == 0) throw EmptyDataset(path + ": no data rows");

  SequenceDataset ds;
  ds.measurements.resize(row, kMeasurementDim);
  std::copy(meas.begin(), meas.end(), ds.measurements.data());
  if (with_states) {
    MatrixRM s(row, kStateDim);
    std::copy(states.begin(), states.end(), s.data());
    ds.states = std::move(s);
  }
  return ds;
}

inline void save_csv(const std::string& path, const SequenceDataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << detail::expected_header(ds.labeled()) << "\n";
  char buf[32];
  const double dt = 1.0 / ds.sample_rate_hz;
  for (Index r = 0; r < ds.rows(); ++r) {
    std::snprintf(buf, sizeof(buf), "%.17g", r * dt);
    out << buf;
    for (Index c = 0; c < ds.measurements.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.measurements(r, c));
      out << ',' << buf;
    }
    if (ds.labeled()) {
      for (Index c = 0; c < ds.states->cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", (*ds.states)(r, c));
        out << ',' << buf;
      }
    }
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Normalisation (fit on the source training split only)
// ---------------------------------------------------------------------------

/// Per-channel standardisation parameters. Channels whose raw spread falls
/// below the clamp floor are marked degenerate: they normalise to exactly
/// zero and invert back to their mean, instead of amplifying rounding noise
/// by 1e8.
struct NormalizationStats {
  Eigen::VectorXd meas_mean, meas_std, meas_active;
  Eigen::VectorXd state_mean, state_std, state_active;
};

namespace detail {
inline void fit_channels(const MatrixRM& data, Eigen::VectorXd& mean, Eigen::VectorXd& std,
                         Eigen::VectorXd& active) {
  mean = data.colwise().mean();
  Eigen::VectorXd var =
      (data.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  Eigen::VectorXd raw = var.array().sqrt();
  active = (raw.array() >= 1e-8).cast<double>();
  std = raw.array().max(1e-8);
}

inline MatrixRM standardise(const MatrixRM& data, const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& std, const Eigen::VectorXd& active) {
  MatrixRM out =
      (data.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
  return out.array().rowwise() * active.transpose().array();
}

inline MatrixRM destandardise(const MatrixRM& data, const Eigen::VectorXd& mean,
                              const Eigen::VectorXd& std, const Eigen::VectorXd& active) {
  MatrixRM out = data.array().rowwise() * (std.array() * active.array()).transpose();
  return out.rowwise() + mean.transpose();
}
}  // namespace detail

inline NormalizationStats fit_normalizer(const SequenceDataset& source_train) {
  if (source_train.rows() == 0) throw EmptyDataset("fit_normalizer: empty dataset");
  if (!source_train.labeled())
    throw SchemaError("fit_normalizer: the source training split must be labeled");
  NormalizationStats stats;
  detail::fit_channels(source_train.measurements, stats.meas_mean, stats.meas_std,
                       stats.meas_active);
  detail::fit_channels(*source_train.states, stats.state_mean, stats.state_std,
                       stats.state_active);
  return stats;
}

inline SequenceDataset apply_normalizer(const NormalizationStats& stats,
                                        const SequenceDataset& ds) {
  SequenceDataset out = ds;
  out.measurements =
      detail::standardise(ds.measurements, stats.meas_mean, stats.meas_std, stats.meas_active);
  if (ds.labeled())
    out.states =
        detail::standardise(*ds.states, stats.state_mean, stats.state_std, stats.state_active);
  return out;
}

inline SequenceDataset invert_normalizer(const NormalizationStats& stats,
                                         const SequenceDataset& ds) {
  SequenceDataset out = ds;
  out.measurements =
      detail::destandardise(ds.measurements, stats.meas_mean, stats.meas_std, stats.meas_active);
  if (ds.labeled())
    out.states =
        detail::destandardise(*ds.states, stats.state_mean, stats.state_std, stats.state_active);
  return out;
}

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

/// One training window; labels sliced consistently with the measurements.
struct SequenceWindow {
  MatrixRM measurements;           // [seq_len x n_y]
  std::optional<MatrixRM> states;  // [seq_len x n_x]
  Domain domain = Domain::source;
};

inline std::vector<SequenceWindow> window(const SequenceDataset& ds, Index seq_len,
                                          Index stride) {
  if (seq_len <= 0 || stride <= 0) throw TooShort("window: seq_len and stride must be positive");
  if (ds.rows() < seq_len)
    throw TooShort("window: dataset of " + std::to_string(ds.rows()) +
                   " rows is shorter than seq_len " + std::to_string(seq_len));
  const Index count = (ds.rows() - seq_len) / stride + 1;
  std::vector<SequenceWindow> out;
  out.reserve(count);
  for (Index w = 0; w < count; ++w) {
    SequenceWindow win;
    win.domain = ds.domain;
    win.measurements = ds.measurements.middleRows(w * stride, seq_len);
    if (ds.labeled()) win.states = ds.states->middleRows(w * stride, seq_len);
    out.push_back(std::move(win));
  }
  return out;
}

}  // namespace dsvb
