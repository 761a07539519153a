#include "artifacts.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mwtomo/errors.hpp"
#include "mwtomo/landweber.hpp"

namespace mwt {

namespace {

/// Shortest decimal form that reloads to the same double.
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

ImageRecord write_pgm(const std::filesystem::path& path, const FieldXd& image) {
  if (image.size() == 0) throw ValidationError("write_pgm: empty image");
  ImageRecord rec;
  rec.file = path.filename().string();
  rec.lo = image.minCoeff();
  rec.hi = image.maxCoeff();
  const double span = rec.hi - rec.lo;

  std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
  out << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(image.cols()));
  for (Eigen::Index j = image.rows() - 1; j >= 0; --j) {
    for (Eigen::Index i = 0; i < image.cols(); ++i) {
      const double v = span > 0.0 ? (image(j, i) - rec.lo) / span : 0.5;
      row[static_cast<size_t>(i)] = static_cast<unsigned char>(std::lround(255.0 * v));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  finish(out, path);
  return rec;
}

void write_iteration_csv(const std::filesystem::path& path, const IterationLog& log, RunStatus status) {
  std::ofstream out = open_out(path);
  out << "step,residual,rel_error,rel_error_hd,seconds\n";
  for (const IterationEntry& e : log)
    out << e.step << "," << fmt(e.residual) << "," << fmt(e.rel_error) << "," << fmt(e.rel_error_hd)
        << "," << fmt(e.seconds) << "\n";
  out << "# status," << run_status_name(status) << "\n";
  finish(out, path);
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out = open_out(path);
  out << "gamma,step,log10_rel_error\n";
  for (const SweepRow& r : rows) out << fmt(r.gamma) << "," << r.step << "," << fmt(r.log10_rel_error) << "\n";
  finish(out, path);
}

void write_trace_csv(const std::filesystem::path& path, const BoundaryTrace<double>& m,
                     const GridSpec& g, const PerimeterMap& p) {
  if (m.values.rows() != g.nt + 1 || m.values.cols() != p.n())
    throw ValidationError("write_trace_csv: trace shape does not match the grid");
  std::ofstream out = open_out(path);
  out << "t";
  for (int k = 0; k < p.n(); ++k)
    out << "," << side_name(static_cast<Side>(p.side(k))) << ":" << k - p.begin(p.side(k));
  out << "\n";
  for (int n = 0; n <= g.nt; ++n) {
    out << fmt(g.t(n));
    for (int k = 0; k < p.n(); ++k) out << "," << fmt(m.values(n, k));
    out << "\n";
  }
  finish(out, path);
}

void write_eigenvalue_csv(const std::filesystem::path& path, const SpectralReportXd& rep) {
  std::ofstream out = open_out(path);
  out << "index,lambda,lambda_im\n";
  for (Eigen::Index k = 0; k < rep.eigenvalues.size(); ++k)
    out << k << "," << fmt(rep.eigenvalues(k)) << "," << fmt(rep.eigenvalues_im(k)) << "\n";
  finish(out, path);
}

void write_power_csv(const std::filesystem::path& path, const SpectralReportXd& rep,
                     const Eigen::ArrayXd& power) {
  if (power.size() != rep.eigenvalues.size())
    throw ValidationError("write_power_csv: power spectrum does not match the eigenvalue count");
  std::ofstream out = open_out(path);
  out << "index,lambda,power\n";
  for (Eigen::Index k = 0; k < power.size(); ++k)
    out << k << "," << fmt(rep.eigenvalues(k)) << "," << fmt(power(k)) << "\n";
  finish(out, path);
}

void write_gn_csv(const std::filesystem::path& path, double gamma, const std::vector<int>& steps_list,
                  const std::filesystem::path* curve_path, int curve_samples) {
  if (steps_list.empty()) throw ValidationError("write_gn_csv: need at least one iteration count");
  std::ofstream out = open_out(path);
  out << "N,lambda_at_max,max_value\n";
  for (int N : steps_list) {
    const auto [lam, val] = gn_max(gamma, N);
    out << N << "," << fmt(lam) << "," << fmt(val) << "\n";
  }
  finish(out, path);

  if (curve_path && curve_samples > 0) {
    std::ofstream curve = open_out(*curve_path);
    curve << "N,lambda,value\n";
    const double hi = std::sqrt(2.0 / gamma);
    for (int N : steps_list)
      for (int s = 0; s <= curve_samples; ++s) {
        const double lam = hi * s / curve_samples;
        curve << N << "," << fmt(lam) << "," << fmt(gn_value(gamma, N, lam)) << "\n";
      }
    finish(curve, *curve_path);
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  finish(out, path);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace mwt
