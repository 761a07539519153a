#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mwtomo/landweber.hpp"
#include "mwtomo/measurement.hpp"
#include "mwtomo/spectral.hpp"

using namespace mwt;

namespace {

/// Shared margin for assembly box and measurement cutoff: the box must carry
/// the cutoff's support exactly, or columns for frame nodes come out zero.
constexpr double kMargin = 0.025;

SpectralReportXd transpose_spectrum(const GridSpec& g, const FieldXd& c, const GammaMask& gamma,
                                    AssembledXd* keep_L = nullptr) {
  const PerimeterMap p = make_perimeter(g);
  const MeasurementConfig cfg = measurement_config(g, p, gamma, kMargin);
  std::function<FieldXd(const FieldXd&)> Lop = [&, cfg](const FieldXd& f) {
    return FieldXd(apply_L(f, c, g, p, cfg).values);
  };
  AssembledXd L = assemble(Lop, OperatorKind::Measurement, interior_box(g, kMargin), g, 1);
  SpectralReportXd rep = eigendecompose(normal_from_measurement(L));
  if (keep_L) *keep_L = std::move(L);
  return rep;
}

}  // namespace

TEST_CASE("assembly reproduces trivial operators") {
  const GridSpec g = make_grid(11, 1.0, 1.0);
  const InteriorBox box = interior_box(g, kMargin);

  std::function<FieldXd(const FieldXd&)> ident = [](const FieldXd& f) { return f; };
  const AssembledXd I = assemble(ident, OperatorKind::NormalWaveAdjoint, box, g);
  CHECK(I.matrix.rows() == box.count());
  CHECK((I.matrix - Eigen::MatrixXd::Identity(box.count(), box.count())).norm() == 0.0);

  std::function<FieldXd(const FieldXd&)> twice = [](const FieldXd& f) { return FieldXd(2.0 * f); };
  const AssembledXd D = assemble(twice, OperatorKind::NormalWaveAdjoint, box, g);
  CHECK((D.matrix - 2.0 * Eigen::MatrixXd::Identity(box.count(), box.count())).norm() == 0.0);

  std::function<FieldXd(const FieldXd&)> bad;
  CHECK_THROWS_AS(assemble(bad, OperatorKind::NormalWaveAdjoint, box, g), ValidationError);
  CHECK_THROWS_AS(assemble(ident, OperatorKind::NormalTranspose, box, g), ValidationError);

  std::function<FieldXd(const FieldXd&)> poison = [&](const FieldXd& f) {
    FieldXd out = f;
    out(box.j0, box.i0) = std::numeric_limits<double>::quiet_NaN();
    return out;
  };
  CHECK_THROWS_AS(assemble(poison, OperatorKind::NormalWaveAdjoint, box, g), DivergenceError);

  CHECK_THROWS_AS(normal_from_measurement(I), ValidationError);
}

TEST_CASE("measurement assembly flattens traces time-major") {
  const GridSpec g = make_grid(11, 1.0, 1.0);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_constant(g);
  const InteriorBox box = interior_box(g, kMargin);
  const MeasurementConfig cfg = measurement_config(g, p, gamma_full(p), kMargin);
  std::function<FieldXd(const FieldXd&)> Lop = [&](const FieldXd& f) {
    return FieldXd(apply_L(f, c, g, p, cfg).values);
  };
  const AssembledXd L = assemble(Lop, OperatorKind::Measurement, box, g);
  CHECK(L.matrix.rows() == (g.nt + 1) * p.n());
  CHECK(L.matrix.cols() == box.count());

  const int pick = 5;
  FieldXd unit = FieldXd::Zero(g.ny, g.nx);
  unit(box.j0 + pick / box.nxi(), box.i0 + pick % box.nxi()) = 1.0;
  const FieldXd trace = Lop(unit);
  for (int t = 0; t <= g.nt; ++t)
    for (int s = 0; s < p.n(); ++s) CHECK(L.matrix(t * p.n() + s, pick) == trace(t, s));
}

TEST_CASE("box coefficient maps round-trip") {
  const GridSpec g = make_grid(11, 1.0, 1.0);
  const InteriorBox box = interior_box(g, kMargin);
  Eigen::VectorXd x(box.count());
  for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = std::sin(0.7 * static_cast<double>(k));

  const FieldXd f = box_field(x, box, g);
  CHECK((box_vector<double>(f, box) - x).norm() == 0.0);
  CHECK(f(0, 0) == 0.0);
  FieldXd frame = f;
  frame.block(box.j0, box.i0, box.nyi(), box.nxi()).setZero();
  CHECK(frame.abs().maxCoeff() == 0.0);

  const FieldXd img = box_image(x, box);
  CHECK(img.rows() == box.nyi());
  CHECK(img.cols() == box.nxi());
  CHECK(img(0, 0) == x(0));
  CHECK(img(box.nyi() - 1, box.nxi() - 1) == x(x.size() - 1));

  Eigen::VectorXd wrong(box.count() + 1);
  wrong.setZero();
  CHECK_THROWS_AS(box_field(wrong, box, g), ValidationError);
  CHECK_THROWS_AS(box_image(wrong, box), ValidationError);
}

TEST_CASE("eigendecompose handles trivial spectra") {
  const GridSpec g = make_grid(5, 1.0, 1.0);
  const InteriorBox box = interior_box(g, kMargin);
  REQUIRE(box.count() == 9);

  AssembledXd A;
  A.box = box;
  A.kind = OperatorKind::NormalTranspose;
  A.matrix = Eigen::MatrixXd::Identity(9, 9);
  const SpectralReportXd ident = eigendecompose(A);
  CHECK((ident.eigenvalues - 1.0).abs().maxCoeff() <= 1e-14);
  CHECK(ident.near_zero_count == 0);
  CHECK(ident.lambda_min == ident.eigenvalues(0));
  CHECK(ident.lambda_max == ident.eigenvalues(8));

  A.matrix = Eigen::VectorXd::LinSpaced(9, 1.0, 9.0).asDiagonal();
  const SpectralReportXd diag = eigendecompose(A);
  for (int k = 0; k < 9; ++k) CHECK(diag.eigenvalues(k) == doctest::Approx(k + 1.0).epsilon(1e-14));
  CHECK((diag.eigenvalues_im == 0.0).all());

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(9, 9);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j <= i; ++j) S(i, j) = S(j, i) = gauss(rng);
  A.matrix = S;
  const SpectralReportXd rep = eigendecompose(A);
  const Eigen::MatrixXd recon =
      rep.eigenvectors * rep.eigenvalues.matrix().asDiagonal() * rep.eigenvectors.transpose();
  CHECK((S - recon).norm() <= 1e-12 * S.norm());
  for (int k = 1; k < 9; ++k) CHECK(rep.eigenvalues(k) >= rep.eigenvalues(k - 1));

  A.kind = OperatorKind::NormalWaveAdjoint;
  A.matrix = Eigen::MatrixXd::Zero(9, 9);
  A.matrix(0, 1) = -1.0;
  A.matrix(1, 0) = 1.0;
  const SpectralReportXd rot = eigendecompose(A);
  CHECK(rot.eigenvectors.size() == 0);
  CHECK(rot.eigenvalues_im.abs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));

  A.kind = OperatorKind::Measurement;
  CHECK_THROWS_AS(eigendecompose(A), ValidationError);
  A.kind = OperatorKind::NormalTranspose;
  A.matrix = Eigen::MatrixXd::Zero(9, 4);
  CHECK_THROWS_AS(eigendecompose(A), ValidationError);
}

TEST_CASE("power spectrum is the squared eigenbasis coefficients") {
  const GridSpec g = make_grid(11, 0.8, 1.0);
  const SpectralReportXd rep = transpose_spectrum(g, speed_constant(g), gamma_full(make_perimeter(g)));
  const Eigen::Index n = rep.eigenvalues.size();

  const Eigen::Index pick = n / 2;
  const FieldXd ef = box_field(Eigen::VectorXd(rep.eigenvectors.col(pick)), rep.box, g);
  const Eigen::ArrayXd power = power_spectrum(ef, rep);
  CHECK(power(pick) == doctest::Approx(1.0).epsilon(1e-10));
  for (Eigen::Index k = 0; k < n; ++k)
    if (k != pick) CHECK(power(k) <= 1e-10);

  const FieldXd zero = FieldXd::Zero(g.ny, g.nx);
  CHECK((power_spectrum(zero, rep) == 0.0).all());

  SpectralReportXd broken = rep;
  broken.eigenvectors.col(0) *= 1.5;
  const FieldXd bad = box_field(Eigen::VectorXd(broken.eigenvectors.col(0)), rep.box, g);
  CHECK_THROWS_AS(power_spectrum(bad, broken), ValidationError);

  SpectralReportXd hollow = rep;
  hollow.eigenvectors.resize(0, 0);
  CHECK_THROWS_AS(power_spectrum(ef, hollow), ValidationError);
}

TEST_CASE("high frequency fraction separates smooth from checkerboard") {
  FieldXd flat = FieldXd::Constant(16, 16, 3.0);
  CHECK(high_freq_fraction(flat) == 0.0);

  FieldXd chess(16, 16);
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < 16; ++i) chess(j, i) = ((i + j) % 2 == 0) ? 1.0 : -1.0;
  CHECK(high_freq_fraction(chess) >= 0.99);

  FieldXd smooth(16, 16);
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < 16; ++i) smooth(j, i) = std::cos(M_PI * i / 15.0) + 0.5 * std::sin(M_PI * j / 15.0);
  CHECK(high_freq_fraction(smooth) <= 0.05);

  CHECK_THROWS_AS(high_freq_fraction(FieldXd(FieldXd::Zero(1, 16))), ValidationError);
}

TEST_CASE("thread count does not change the assembly") {
  const GridSpec g = make_grid(11, 1.0, 1.5);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_trig(g);
  const MeasurementConfig cfg = measurement_config(g, p, gamma_full(p), kMargin);
  std::function<FieldXd(const FieldXd&)> Lop = [&](const FieldXd& f) {
    return FieldXd(apply_L(f, c, g, p, cfg).values);
  };
  const InteriorBox box = interior_box(g, kMargin);
  const AssembledXd one = assemble(Lop, OperatorKind::Measurement, box, g, 1);
  const AssembledXd three = assemble(Lop, OperatorKind::Measurement, box, g, 3);
  CHECK(one.matrix == three.matrix);
}

TEST_CASE("wave-adjoint assembly agrees with the operator and the power method") {
  const GridSpec g = make_grid(41, 4.0, 1.5);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_trig(g);
  const InteriorBox box = interior_box(g, kMargin);
  const MeasurementConfig cfg = measurement_config(g, p, gamma_full(p), kMargin);
  std::function<FieldXd(const FieldXd&)> Nop = [&](const FieldXd& f) {
    return apply_normal(f, c, g, p, cfg);
  };
  const AssembledXd Nw = assemble(Nop, OperatorKind::NormalWaveAdjoint, box, g, 1);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd x(box.count());
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = gauss(rng);
    const Eigen::VectorXd via_matrix = Nw.matrix * x;
    const Eigen::VectorXd via_wave =
        box_vector<double>(apply_normal(FieldXd(box_field(x, box, g)), c, g, p, cfg), box);
    CHECK((via_matrix - via_wave).norm() <= 1e-10 * via_matrix.norm());
  }

  const SpectralReportXd rep = eigendecompose(Nw);
  CHECK(rep.eigenvectors.size() == 0);
  CHECK(rep.lambda_max > 0.0);

  const auto est = estimate_bounds<FieldXd>(
      Nop, power_seed<FieldXd>(g.ny, g.nx, 11),
      [&](const FieldXd& a, const FieldXd& b) { return weighted_inner(a, b, c, g); }, 1e-7, 400);
  CHECK(std::abs(est.bounds.L2norm - rep.lambda_max) <= 1e-3 * rep.lambda_max);
}

TEST_CASE("wave-adjoint eigenvalues stay near the real axis at constant speed") {
  const GridSpec g = make_grid(41, 4.0, 1.0);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_constant(g);
  const MeasurementConfig cfg = measurement_config(g, p, gamma_full(p), 0.03);
  std::function<FieldXd(const FieldXd&)> Nop = [&](const FieldXd& f) {
    return apply_normal(f, c, g, p, cfg);
  };
  const AssembledXd Nw = assemble(Nop, OperatorKind::NormalWaveAdjoint, interior_box(g, 0.03), g, 1);
  const SpectralReportXd rep = eigendecompose(Nw);
  const double imre = rep.eigenvalues_im.abs().maxCoeff() / rep.eigenvalues.abs().maxCoeff();
  CHECK(imre <= 0.05);
}

TEST_CASE("wave-adjoint normal form stays near its transpose") {
  const GridSpec g = make_grid(41, 4.0, 1.5);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_trig(g);
  const MeasurementConfig cfg = measurement_config(g, p, gamma_full(p), 0.03);
  std::function<FieldXd(const FieldXd&)> Nop = [&](const FieldXd& f) {
    return apply_normal(f, c, g, p, cfg);
  };
  const AssembledXd Nw = assemble(Nop, OperatorKind::NormalWaveAdjoint, interior_box(g, 0.03), g, 1);
  const double defect = (Nw.matrix - Nw.matrix.transpose()).norm() / Nw.matrix.norm();
  INFO("relative symmetry defect on the variable-speed assembly: ", defect);
  CHECK(defect <= 5e-2);
}

TEST_CASE("desk-scale spectra separate visible from invisible content") {
  const GridSpec g_stable = make_grid(41, 4.0, 1.5);
  const SpectralReportXd stable =
      transpose_spectrum(g_stable, speed_trig(g_stable), gamma_full(make_perimeter(g_stable)));
  const Eigen::Index n = stable.eigenvalues.size();

  CHECK(stable.lambda_min >= -1e-10 * stable.lambda_max);
  CHECK(stable.near_zero_count == 0);
  CHECK(mean_high_freq_fraction(stable, 0, n / 10) >= 0.5);
  CHECK(mean_high_freq_fraction(stable, n - n / 10, n) <= 0.3);

  const Eigen::ArrayXd sl_stable =
      power_spectrum(FieldXd(render_shepp_logan(g_stable)), stable);
  const Eigen::ArrayXd blob_stable = power_spectrum(
      FieldXd(render_gaussians(g_stable, {{0.2, -0.1, 0.2, 1.0}})), stable);
  const Eigen::Index tenth = (n + 9) / 10;
  const double sl_low = sl_stable.head(tenth).sum() / sl_stable.sum();
  const double blob_low = blob_stable.head(tenth).sum() / blob_stable.sum();
  CHECK(sl_low <= 1e-2);
  CHECK(blob_low <= 1e-4);

  const GridSpec g_unstable = make_grid(41, 1.8, 1.0);
  const PerimeterMap pu = make_perimeter(g_unstable);
  const SpectralReportXd unstable = transpose_spectrum(
      g_unstable, speed_constant(g_unstable), gamma_bottom_left_adjacent(pu, g_unstable, 0.2));
  CHECK(unstable.lambda_min >= -1e-10 * unstable.lambda_max);
  CHECK(unstable.near_zero_count >= unstable.eigenvalues.size() / 100);

  const Eigen::ArrayXd sl_unstable =
      power_spectrum(FieldXd(render_shepp_logan(g_unstable)), unstable);
  const double sl_hidden = sl_unstable.head(tenth).sum() / sl_unstable.sum();
  CHECK(sl_hidden >= 5e-2);
  CHECK(sl_hidden >= 5.0 * sl_low);
}

TEST_CASE("sub-CFL stepping exposes the dispersion kernel") {
  const GridSpec g = make_grid(41, 2.6, 1.0, 3.0);
  const PerimeterMap p = make_perimeter(g);
  const SpectralReportXd rep =
      transpose_spectrum(g, speed_constant(g), gamma_bottom_left_adjacent(p, g, 0.2));
  CHECK(rep.lambda_min >= -1e-10 * rep.lambda_max);
  CHECK(rep.near_zero_count >= rep.eigenvalues.size() / 100);
  CHECK(mean_high_freq_fraction(rep, 0, rep.near_zero_count) >= 0.5);
}
