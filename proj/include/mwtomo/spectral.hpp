#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include "mwtomo/errors.hpp"
#include "mwtomo/fields.hpp"
#include "mwtomo/grid.hpp"
#include "mwtomo/parallel.hpp"

namespace mwt {

// ---------------------------------------------------------------------------
// Assembled operators
// ---------------------------------------------------------------------------
// The measurement map and its normal forms, materialized as dense matrices on
// the unit basis of the interior-box nodes so they can be eigendecomposed.
// Column order is row-major over the box: node (i, j) maps to column
// (j - j0) * nxi + (i - i0).

enum class OperatorKind { Measurement, NormalTranspose, NormalWaveAdjoint };

inline const char* operator_kind_name(OperatorKind k) {
  switch (k) {
    case OperatorKind::Measurement: return "measurement";
    case OperatorKind::NormalTranspose: return "normal-transpose";
    case OperatorKind::NormalWaveAdjoint: return "normal-wave-adjoint";
  }
  return "?";
}

template <typename Scalar>
struct AssembledOperator {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> matrix;
  InteriorBox box;
  OperatorKind kind = OperatorKind::Measurement;
};

using AssembledXd = AssembledOperator<double>;

/// @brief Coefficients of a field on the box nodes, row-major.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> box_vector(const Field<Scalar>& f, const InteriorBox& b) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x(b.count());
  for (int j = 0; j < b.nyi(); ++j)
    for (int i = 0; i < b.nxi(); ++i) x(j * b.nxi() + i) = f(b.j0 + j, b.i0 + i);
  return x;
}

/// @brief Field on the full grid carrying the coefficients, zero in the frame.
template <typename Scalar>
Field<Scalar> box_field(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x, const InteriorBox& b,
                        const GridSpec& g) {
  if (x.size() != b.count()) throw ValidationError("box_field: coefficient count does not match the box");
  Field<Scalar> f = Field<Scalar>::Zero(g.ny, g.nx);
  for (int j = 0; j < b.nyi(); ++j)
    for (int i = 0; i < b.nxi(); ++i) f(b.j0 + j, b.i0 + i) = x(j * b.nxi() + i);
  return f;
}

/// @brief Coefficients reshaped as the box-sized image (for plots and DFTs).
template <typename Scalar>
Field<Scalar> box_image(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x, const InteriorBox& b) {
  if (x.size() != b.count()) throw ValidationError("box_image: coefficient count does not match the box");
  Field<Scalar> f(b.nyi(), b.nxi());
  for (int j = 0; j < b.nyi(); ++j)
    for (int i = 0; i < b.nxi(); ++i) f(j, i) = x(j * b.nxi() + i);
  return f;
}

/// @brief Dense matrix of a linear map applied to every box unit field.
///
/// Measurement kind flattens whatever array the handle returns (trace rows
/// stacked time-major); the wave-adjoint normal kind requires a full-grid
/// field and keeps its box restriction, making the matrix square. The
/// transpose-product form is derived, not assembled; see normal_from_measurement.
/// Columns are independent solves, so they parallelize over threads with a
/// thread-count-independent result.
template <typename Scalar>
AssembledOperator<Scalar> assemble(const std::function<Field<Scalar>(const Field<Scalar>&)>& op,
                                   OperatorKind kind, const InteriorBox& box, const GridSpec& g,
                                   int threads = 1) {
  if (!op) throw ValidationError("assemble: operator handle is empty");
  if (kind == OperatorKind::NormalTranspose)
    throw ValidationError("assemble: the transpose product is derived from an assembled measurement matrix");
  if (box.i1 >= g.nx || box.j1 >= g.ny) throw ValidationError("assemble: box does not fit the grid");

  AssembledOperator<Scalar> out;
  out.box = box;
  out.kind = kind;

  const Eigen::Index cols = box.count();
  Eigen::Index rows = 0;
  {
    Field<Scalar> unit = Field<Scalar>::Zero(g.ny, g.nx);
    unit(box.j0, box.i0) = Scalar(1);
    const Field<Scalar> first = op(unit);
    if (kind == OperatorKind::NormalWaveAdjoint) {
      if (first.rows() != g.ny || first.cols() != g.nx)
        throw ValidationError("assemble: a normal operator must return a full-grid field");
      rows = cols;
    } else {
      rows = first.size();
      if (rows == 0) throw ValidationError("assemble: operator returned an empty array");
    }
    out.matrix.resize(rows, cols);
  }

  parallel_for(static_cast<int>(cols), threads, [&](int k) {
    const int i = box.i0 + k % box.nxi();
    const int j = box.j0 + k / box.nxi();
    Field<Scalar> unit = Field<Scalar>::Zero(g.ny, g.nx);
    unit(j, i) = Scalar(1);
    const Field<Scalar> image = op(unit);
    if (kind == OperatorKind::NormalWaveAdjoint) {
      if (image.rows() != g.ny || image.cols() != g.nx)
        throw ValidationError("assemble: a normal operator must return a full-grid field");
      out.matrix.col(k) = box_vector<Scalar>(image, box);
    } else {
      if (image.size() != rows)
        throw ValidationError("assemble: operator output shape changed between columns");
      for (Eigen::Index r = 0; r < image.rows(); ++r)
        for (Eigen::Index s = 0; s < image.cols(); ++s)
          out.matrix(r * image.cols() + s, k) = image(r, s);
    }
  });

  if (!out.matrix.allFinite())
    throw DivergenceError(std::string("assemble: ") + operator_kind_name(kind) +
                          " operator produced non-finite entries");
  return out;
}

/// @brief The transpose-product normal form of an assembled measurement map.
template <typename Scalar>
AssembledOperator<Scalar> normal_from_measurement(const AssembledOperator<Scalar>& L) {
  if (L.kind != OperatorKind::Measurement)
    throw ValidationError("normal_from_measurement: input must be an assembled measurement matrix");
  AssembledOperator<Scalar> out;
  out.box = L.box;
  out.kind = OperatorKind::NormalTranspose;
  out.matrix.noalias() = L.matrix.transpose() * L.matrix;
  return out;
}

// ---------------------------------------------------------------------------
// Eigendecomposition
// ---------------------------------------------------------------------------

/// Eigenvalues at or below this fraction of the largest one count as
/// numerically zero; their eigenvectors span the practical kernel.
inline constexpr double near_zero_fraction = 1e-10;

/// @brief Full spectrum of a normal form, ascending by real part. The
/// transpose-product path is symmetric: real eigenvalues plus the orthonormal
/// eigenvector matrix (column k belongs to eigenvalue k). The wave-adjoint
/// path is only approximately symmetric, so it is decomposed as a general
/// matrix and reports the imaginary parts; its eigenvectors are not kept.
template <typename Scalar>
struct SpectralReport {
  OperatorKind kind = OperatorKind::NormalTranspose;
  InteriorBox box;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> eigenvalues;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> eigenvalues_im;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> eigenvectors;
  Scalar lambda_min = Scalar(0);
  Scalar lambda_max = Scalar(0);
  Eigen::Index near_zero_count = 0;
};

using SpectralReportXd = SpectralReport<double>;

template <typename Scalar>
SpectralReport<Scalar> eigendecompose(const AssembledOperator<Scalar>& A) {
  if (A.kind == OperatorKind::Measurement)
    throw ValidationError("eigendecompose: assemble a square normal form first");
  if (A.matrix.rows() != A.matrix.cols() || A.matrix.rows() == 0)
    throw ValidationError("eigendecompose: matrix must be square and nonempty");

  SpectralReport<Scalar> rep;
  rep.kind = A.kind;
  rep.box = A.box;

  if (A.kind == OperatorKind::NormalTranspose) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> es(A.matrix);
    if (es.info() != Eigen::Success)
      throw DivergenceError("eigendecompose: symmetric eigensolver failed");
    rep.eigenvalues = es.eigenvalues().array();
    rep.eigenvalues_im = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(rep.eigenvalues.size());
    rep.eigenvectors = es.eigenvectors();
  } else {
    Eigen::EigenSolver<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> es(A.matrix, false);
    if (es.info() != Eigen::Success)
      throw DivergenceError("eigendecompose: general eigensolver failed");
    const Eigen::Index n = A.matrix.rows();
    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const auto& lam = es.eigenvalues();
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (lam(a).real() != lam(b).real()) return lam(a).real() < lam(b).real();
      return lam(a).imag() < lam(b).imag();
    });
    rep.eigenvalues.resize(n);
    rep.eigenvalues_im.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      rep.eigenvalues(k) = lam(order[static_cast<size_t>(k)]).real();
      rep.eigenvalues_im(k) = lam(order[static_cast<size_t>(k)]).imag();
    }
  }

  rep.lambda_min = rep.eigenvalues(0);
  rep.lambda_max = rep.eigenvalues(rep.eigenvalues.size() - 1);
  rep.near_zero_count =
      (rep.eigenvalues <= Scalar(near_zero_fraction) * rep.lambda_max).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Power spectrum and frequency content
// ---------------------------------------------------------------------------

/// @brief Squared coefficients |<f, e_k>|^2 of the box restriction of f in the
/// orthonormal eigenbasis. The coefficient energy must reproduce the squared
/// norm of the restriction (the basis is orthonormal), enforced at 1e-6
/// relative.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> power_spectrum(const Field<Scalar>& f,
                                                       const SpectralReport<Scalar>& rep) {
  if (rep.eigenvectors.size() == 0)
    throw ValidationError("power_spectrum: report carries no eigenvectors; use the transpose-product path");
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x = box_vector<Scalar>(f, rep.box);
  if (x.size() != rep.eigenvectors.rows())
    throw ValidationError("power_spectrum: field restriction does not match the basis dimension");
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> c = rep.eigenvectors.transpose() * x;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> power = c.array().square();
  const Scalar total = power.sum();
  const Scalar norm2 = x.squaredNorm();
  if (std::abs(total - norm2) > Scalar(1e-6) * norm2)
    throw ValidationError("power_spectrum: eigenbasis is not orthonormal to the required precision");
  return power;
}

/// @brief Fraction of the discrete-Fourier energy of a field in the outer half
/// of the frequency square: both folded axis frequencies above half of
/// Nyquist. A constant field scores 0, the checkerboard scores 1.
template <typename Scalar>
Scalar high_freq_fraction(const Field<Scalar>& e) {
  const Eigen::Index ny = e.rows(), nx = e.cols();
  if (ny < 2 || nx < 2) throw ValidationError("high_freq_fraction: field must be at least 2x2");

  Eigen::MatrixXcd hat(ny, nx);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> line, spec;
  for (Eigen::Index j = 0; j < ny; ++j) {
    line.assign(static_cast<size_t>(nx), {});
    for (Eigen::Index i = 0; i < nx; ++i) line[static_cast<size_t>(i)] = static_cast<double>(e(j, i));
    fft.fwd(spec, line);
    for (Eigen::Index i = 0; i < nx; ++i) hat(j, i) = spec[static_cast<size_t>(i)];
  }
  for (Eigen::Index i = 0; i < nx; ++i) {
    line.assign(static_cast<size_t>(ny), {});
    for (Eigen::Index j = 0; j < ny; ++j) line[static_cast<size_t>(j)] = hat(j, i);
    fft.fwd(spec, line);
    for (Eigen::Index j = 0; j < ny; ++j) hat(j, i) = spec[static_cast<size_t>(j)];
  }

  auto outer = [](Eigen::Index k, Eigen::Index n) {
    const double folded = static_cast<double>(std::min(k, n - k));
    return folded > 0.25 * static_cast<double>(n);
  };
  double total = 0.0, high = 0.0;
  for (Eigen::Index j = 0; j < ny; ++j)
    for (Eigen::Index i = 0; i < nx; ++i) {
      const double energy = std::norm(hat(j, i));
      total += energy;
      if (outer(i, nx) && outer(j, ny)) high += energy;
    }
  if (total <= 0.0) return Scalar(0);
  return static_cast<Scalar>(high / total);
}

/// @brief Mean high-frequency fraction over a contiguous run of eigenvectors
/// [first, last) of the symmetric decomposition.
template <typename Scalar>
Scalar mean_high_freq_fraction(const SpectralReport<Scalar>& rep, Eigen::Index first,
                               Eigen::Index last) {
  if (rep.eigenvectors.size() == 0)
    throw ValidationError("mean_high_freq_fraction: report carries no eigenvectors");
  if (first < 0 || last > rep.eigenvectors.cols() || first >= last)
    throw ValidationError("mean_high_freq_fraction: empty or out-of-range eigenvector run");
  Scalar acc = Scalar(0);
  for (Eigen::Index k = first; k < last; ++k) {
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> col = rep.eigenvectors.col(k);
    acc += high_freq_fraction<Scalar>(box_image<Scalar>(col, rep.box));
  }
  return acc / static_cast<Scalar>(last - first);
}

}  // namespace mwt
