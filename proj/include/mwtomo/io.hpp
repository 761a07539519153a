#pragma once

#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mwtomo/boundary.hpp"
#include "mwtomo/grid.hpp"
#include "mwtomo/iteration_log.hpp"

namespace mwt {

// All text formats use full round-trip precision so identical runs produce
// bit-identical files.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

inline double parse_double(std::string_view tok, const std::string& path) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{}) throw IoError("bad number '" + std::string(tok) + "' in " + path);
  (void)ptr;
  return v;
}

inline std::vector<double> parse_csv_row(const std::string& line, const std::string& path) {
  std::vector<double> row;
  size_t start = 0;
  while (start <= line.size()) {
    size_t comma = line.find(',', start);
    if (comma == std::string::npos) comma = line.size();
    row.push_back(parse_double(std::string_view(line).substr(start, comma - start), path));
    start = comma + 1;
    if (comma == line.size()) break;
  }
  return row;
}

inline void write_csv_row(std::ofstream& out, const double* vals, int n) {
  for (int i = 0; i < n; ++i) {
    if (i) out << ',';
    out << fmt17(vals[i]);
  }
  out << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fields: CSV and binary
// ---------------------------------------------------------------------------

/// @brief CSV field file: comment header, an extent line
/// nx,ny,x0,x1,y0,y1, then ny data rows (row iy=0 first) of nx values.
inline void write_field_csv(const FieldXd& f, const GridSpec& g, const std::string& path) {
  auto out = detail::open_out(path);
  out << "# field, row-major from y0; columns run x0..x1\n";
  out << "# nx,ny,x0,x1,y0,y1\n";
  out << g.nx << ',' << g.ny << ',' << fmt17(g.x0) << ',' << fmt17(g.x1) << ',' << fmt17(g.y0)
      << ',' << fmt17(g.y1) << '\n';
  std::vector<double> row(g.nx);
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) row[ix] = f(iy, ix);
    detail::write_csv_row(out, row.data(), g.nx);
  }
}

struct FieldFile {
  FieldXd values;
  int nx = 0, ny = 0;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
};

inline FieldFile read_field_csv(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  std::vector<double> extent;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    extent = detail::parse_csv_row(line, path);
    break;
  }
  if (extent.size() != 6) throw IoError("malformed field header in " + path);
  FieldFile ff;
  ff.nx = static_cast<int>(extent[0]);
  ff.ny = static_cast<int>(extent[1]);
  ff.x0 = extent[2]; ff.x1 = extent[3]; ff.y0 = extent[4]; ff.y1 = extent[5];
  if (ff.nx < 1 || ff.ny < 1) throw IoError("bad field dimensions in " + path);
  ff.values.resize(ff.ny, ff.nx);
  for (int iy = 0; iy < ff.ny; ++iy) {
    if (!std::getline(in, line)) throw IoError("truncated field data in " + path);
    const auto row = detail::parse_csv_row(line, path);
    if (static_cast<int>(row.size()) != ff.nx) throw IoError("ragged field row in " + path);
    for (int ix = 0; ix < ff.nx; ++ix) ff.values(iy, ix) = row[ix];
  }
  return ff;
}

/// @brief Compact binary field: magic "MWTFLD01", int32 nx, ny, four extent
/// doubles, then row-major float64 values.
inline void write_field_binary(const FieldXd& f, const GridSpec& g, const std::string& path) {
  auto out = detail::open_out(path, true);
  out.write("MWTFLD01", 8);
  const int32_t dims[2] = {g.nx, g.ny};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  const double ext[4] = {g.x0, g.x1, g.y0, g.y1};
  out.write(reinterpret_cast<const char*>(ext), sizeof(ext));
  std::vector<double> row(g.nx);
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) row[ix] = f(iy, ix);
    out.write(reinterpret_cast<const char*>(row.data()), sizeof(double) * row.size());
  }
  if (!out) throw IoError("write failed: " + path);
}

inline FieldFile read_field_binary(const std::string& path) {
  auto in = detail::open_in(path, true);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "MWTFLD01") throw IoError("bad field magic in " + path);
  int32_t dims[2];
  double ext[4];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  in.read(reinterpret_cast<char*>(ext), sizeof(ext));
  if (!in || dims[0] < 1 || dims[1] < 1) throw IoError("bad field dimensions in " + path);
  FieldFile ff;
  ff.nx = dims[0]; ff.ny = dims[1];
  ff.x0 = ext[0]; ff.x1 = ext[1]; ff.y0 = ext[2]; ff.y1 = ext[3];
  ff.values.resize(ff.ny, ff.nx);
  std::vector<double> row(ff.nx);
  for (int iy = 0; iy < ff.ny; ++iy) {
    in.read(reinterpret_cast<char*>(row.data()), sizeof(double) * row.size());
    if (!in) throw IoError("truncated field data in " + path);
    for (int ix = 0; ix < ff.nx; ++ix) ff.values(iy, ix) = row[ix];
  }
  return ff;
}

// ---------------------------------------------------------------------------
// PGM images
// ---------------------------------------------------------------------------

struct PgmScale {
  double lo = 0.0;
  double hi = 1.0;
};

/// @brief 8-bit binary PGM, lo -> 0 and hi -> 255, clamped. Rows are flipped
/// so the top image row is y1; the scale is returned for the caller's
/// records since PGM itself has no metadata. With no scale given the image
/// spans the field's own min/max.
inline PgmScale write_pgm(const FieldXd& f, const std::string& path, const PgmScale* fixed = nullptr) {
  PgmScale s;
  if (fixed) {
    s = *fixed;
  } else {
    s.lo = f.minCoeff();
    s.hi = f.maxCoeff();
  }
  if (!(s.hi > s.lo)) s.hi = s.lo + 1.0;
  auto out = detail::open_out(path, true);
  const int ny = static_cast<int>(f.rows());
  const int nx = static_cast<int>(f.cols());
  out << "P5\n# scale lo=" << fmt17(s.lo) << " hi=" << fmt17(s.hi) << "\n"
      << nx << ' ' << ny << "\n255\n";
  std::vector<unsigned char> row(nx);
  for (int iy = ny - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < nx; ++ix) {
      double t = (f(iy, ix) - s.lo) / (s.hi - s.lo);
      t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
      row[ix] = static_cast<unsigned char>(std::lround(t * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw IoError("write failed: " + path);
  return s;
}

// ---------------------------------------------------------------------------
// Traces: CSV and binary
// ---------------------------------------------------------------------------

/// @brief Trace CSV: rows are time steps, columns perimeter nodes in the
/// counterclockwise bottom,right,top,left order.
inline void write_trace_csv(const TraceXd& tr, const std::string& path) {
  auto out = detail::open_out(path);
  out << "# trace, rows = time steps, cols = perimeter nodes\n";
  out << "# perimeter order: bottom,right,top,left (counterclockwise)\n";
  out << tr.rows() << ',' << tr.cols() << '\n';
  std::vector<double> row(tr.cols());
  for (Eigen::Index n = 0; n < tr.rows(); ++n) {
    for (Eigen::Index k = 0; k < tr.cols(); ++k) row[k] = tr(n, k);
    detail::write_csv_row(out, row.data(), static_cast<int>(tr.cols()));
  }
}

inline TraceXd read_trace_csv(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  std::vector<double> dims;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    dims = detail::parse_csv_row(line, path);
    break;
  }
  if (dims.size() != 2) throw IoError("malformed trace header in " + path);
  const int rows = static_cast<int>(dims[0]);
  const int cols = static_cast<int>(dims[1]);
  if (rows < 1 || cols < 1) throw IoError("bad trace dimensions in " + path);
  TraceXd tr(rows, cols);
  for (int n = 0; n < rows; ++n) {
    if (!std::getline(in, line)) throw IoError("truncated trace data in " + path);
    const auto row = detail::parse_csv_row(line, path);
    if (static_cast<int>(row.size()) != cols) throw IoError("ragged trace row in " + path);
    for (int k = 0; k < cols; ++k) tr(n, k) = row[k];
  }
  return tr;
}

/// @brief Compact binary trace: magic "MWTTRC01", int32 rows, cols, then
/// row-major float64 values.
inline void write_trace_binary(const TraceXd& tr, const std::string& path) {
  auto out = detail::open_out(path, true);
  out.write("MWTTRC01", 8);
  const int32_t dims[2] = {static_cast<int32_t>(tr.rows()), static_cast<int32_t>(tr.cols())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  std::vector<double> row(tr.cols());
  for (Eigen::Index n = 0; n < tr.rows(); ++n) {
    for (Eigen::Index k = 0; k < tr.cols(); ++k) row[k] = tr(n, k);
    out.write(reinterpret_cast<const char*>(row.data()), sizeof(double) * row.size());
  }
  if (!out) throw IoError("write failed: " + path);
}

inline TraceXd read_trace_binary(const std::string& path) {
  auto in = detail::open_in(path, true);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "MWTTRC01") throw IoError("bad trace magic in " + path);
  int32_t dims[2];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] < 1 || dims[1] < 1) throw IoError("bad trace dimensions in " + path);
  TraceXd tr(dims[0], dims[1]);
  std::vector<double> row(dims[1]);
  for (int n = 0; n < dims[0]; ++n) {
    in.read(reinterpret_cast<char*>(row.data()), sizeof(double) * row.size());
    if (!in) throw IoError("truncated trace data in " + path);
    for (int k = 0; k < dims[1]; ++k) tr(n, k) = row[k];
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Tabular CSV exports
// ---------------------------------------------------------------------------

/// @brief Iteration log CSV. The first four columns are fixed so error curves
/// from different solvers overlay directly; the gradient-seminorm error, when
/// requested, rides along as a trailing column.
inline void write_iteration_log_csv(const IterationLog& log, const std::string& path,
                                    bool include_hd = false) {
  auto out = detail::open_out(path);
  out << "step,residual,rel_error,seconds" << (include_hd ? ",rel_error_hd" : "") << '\n';
  for (const auto& e : log) {
    out << e.step << ',' << fmt17(e.residual) << ',' << fmt17(e.rel_error) << ','
        << fmt17(e.seconds);
    if (include_hd) out << ',' << fmt17(e.rel_error_hd);
    out << '\n';
  }
}

inline void write_energy_csv(const std::vector<double>& energy, const GridSpec& g,
                             const std::string& path) {
  auto out = detail::open_out(path);
  out << "step,time,energy\n";
  for (size_t i = 0; i < energy.size(); ++i) {
    const int step = static_cast<int>(i) + 1;
    out << step << ',' << fmt17(step * g.dt) << ',' << fmt17(energy[i]) << '\n';
  }
}

struct SweepRow {
  double gamma = 0.0;
  int step = 0;
  double log10_rel_error = 0.0;
};

inline void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  auto out = detail::open_out(path);
  out << "gamma,step,log10_rel_error\n";
  for (const auto& r : rows)
    out << fmt17(r.gamma) << ',' << r.step << ',' << fmt17(r.log10_rel_error) << '\n';
}

inline void write_eigenvalues_csv(const std::vector<std::complex<double>>& lambda,
                                  const std::string& path) {
  auto out = detail::open_out(path);
  out << "index,re,im\n";
  for (size_t i = 0; i < lambda.size(); ++i)
    out << i << ',' << fmt17(lambda[i].real()) << ',' << fmt17(lambda[i].imag()) << '\n';
}

inline void write_power_spectrum_csv(const std::vector<double>& lambda,
                                     const std::vector<double>& coef_sq, const std::string& path) {
  if (lambda.size() != coef_sq.size())
    throw ValidationError("write_power_spectrum_csv: mismatched column lengths");
  auto out = detail::open_out(path);
  out << "index,eigenvalue,coef_sq\n";
  for (size_t i = 0; i < lambda.size(); ++i)
    out << i << ',' << fmt17(lambda[i]) << ',' << fmt17(coef_sq[i]) << '\n';
}

}  // namespace mwt
