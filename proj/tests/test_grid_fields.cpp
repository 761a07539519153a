#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mwtomo/fields.hpp"
#include "mwtomo/grid.hpp"

using namespace mwt;

TEST_CASE("grid construction locks dt to the stability bound") {
  const GridSpec g = make_grid(101, 4.0, 1.5);
  CHECK(g.nx == 101);
  CHECK(g.dx == doctest::Approx(0.02).epsilon(1e-14));
  CHECK(g.dt == doctest::Approx(0.02 / (std::sqrt(2.0) * 1.5)).epsilon(1e-14));
  CHECK(g.nt == static_cast<int>(std::ceil(4.0 / g.dt - 1e-12)));
  CHECK(g.t_final() >= 4.0 - 1e-12);
  CHECK(g.t_final() - 4.0 < g.dt);

  const GridSpec gs = make_grid(101, 4.0, 1.5, 1.3);
  CHECK(gs.dt == doctest::Approx(g.dt / 1.3).epsilon(1e-14));

  CHECK_THROWS_AS(make_grid(2, 1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(make_grid(11, -1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(make_grid(11, 1.0, 0.0), ValidationError);
  CHECK_THROWS_AS(make_grid(11, 1.0, 1.0, 0.9), ValidationError);
}

TEST_CASE("quadrature weights integrate constants and coordinates exactly") {
  const GridSpec g = make_grid(21, 1.0, 1.0);
  const FieldXd w = node_weights(g);
  CHECK(w.sum() == doctest::Approx(4.0).epsilon(1e-14));
  // Trapezoid rule is exact on linears: integral of x over the square is 0.
  CHECK((coord_x(g) * w).sum() == doctest::Approx(0.0).epsilon(1e-13));
  CHECK((coord_y(g) * w).sum() == doctest::Approx(0.0).epsilon(1e-13));

  const FieldXd ones = FieldXd::Ones(g.ny, g.nx);
  const FieldXd c1 = speed_constant(g);
  CHECK(weighted_inner(ones, ones, c1, g) == doctest::Approx(4.0).epsilon(1e-14));
  const FieldXd c2 = speed_constant(g, 2.0);
  CHECK(weighted_norm(ones, c2, g) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("coordinate fields follow the row = y, column = x layout") {
  const GridSpec g = make_grid(5, 1.0, 1.0);
  const FieldXd x = coord_x(g);
  const FieldXd y = coord_y(g);
  CHECK(x(0, 0) == doctest::Approx(-1.0));
  CHECK(x(0, 4) == doctest::Approx(1.0));
  CHECK(x(3, 2) == doctest::Approx(0.0));
  CHECK(y(0, 2) == doctest::Approx(-1.0));
  CHECK(y(4, 2) == doctest::Approx(1.0));
  CHECK((x.row(0) == x.row(4)).all());
  CHECK((y.col(0) == y.col(4)).all());
}

TEST_CASE("head phantom hits its tabulated values at known points") {
  // Outside the skull, inside the skull rim only, brain background, and the
  // centre of the right ventricle where skull + background + ventricle stack.
  CHECK(shepp_logan_at(0.95, 0.0) == doctest::Approx(0.0));
  CHECK(shepp_logan_at(0.0, 0.9) == doctest::Approx(1.0));
  CHECK(shepp_logan_at(0.0, 0.0) == doctest::Approx(0.2));
  CHECK(shepp_logan_at(0.22, 0.0) == doctest::Approx(0.0));
  // Small bottom blob at (0, -0.605) adds 0.1 on the brain background.
  CHECK(shepp_logan_at(0.0, -0.605) == doctest::Approx(0.3));
}

TEST_CASE("phantom rendering averages subsamples and stays in range") {
  const GridSpec g = make_grid(41, 1.0, 1.0);
  const FieldXd sharp = render_shepp_logan(g, 1);
  for (int iy = 0; iy < g.ny; iy += 7)
    for (int ix = 0; ix < g.nx; ix += 7)
      CHECK(sharp(iy, ix) == doctest::Approx(shepp_logan_at(g.x(ix), g.y(iy))));

  const FieldXd smooth = render_shepp_logan(g, 4);
  CHECK(smooth.minCoeff() >= -1e-12);
  CHECK(smooth.maxCoeff() <= 1.0);
  // Box averaging can only smear jumps, never overshoot the sharp extremes.
  CHECK(smooth.maxCoeff() <= sharp.maxCoeff() + 1e-12);
  // At an edge node straddling the skull rim the average lies strictly
  // between the inside and outside values.
  bool found_partial = false;
  for (int iy = 0; iy < g.ny && !found_partial; ++iy)
    for (int ix = 0; ix < g.nx; ++ix)
      if (smooth(iy, ix) > 1e-6 && smooth(iy, ix) < 1.0 - 1e-6 && sharp(iy, ix) == 0.0) {
        found_partial = true;
        break;
      }
  CHECK(found_partial);
}

TEST_CASE("gaussian sources evaluate the closed form") {
  const GridSpec g = make_grid(41, 1.0, 1.0);
  const std::vector<GaussianBlob> blobs = {{0.25, -0.25, 0.2, 1.5}, {-0.5, 0.5, 0.1, 0.5}};
  const FieldXd f = render_gaussians(g, blobs);
  // Node (iy=16, ix=27) sits at (0.35, -0.2).
  const double expect = 1.5 * std::exp(-(0.1 * 0.1 + 0.05 * 0.05) / (2.0 * 0.04)) +
                        0.5 * std::exp(-(0.85 * 0.85 + 0.7 * 0.7) / (2.0 * 0.01));
  CHECK(g.x(27) == doctest::Approx(0.35));
  CHECK(g.y(16) == doctest::Approx(-0.2));
  CHECK(f(16, 27) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(f.maxCoeff() <= 1.5 + 0.5);
  CHECK(f.minCoeff() >= 0.0);
}

TEST_CASE("speed models stay positive and hit tabulated samples") {
  const GridSpec g = make_grid(41, 1.0, 1.5);
  const FieldXd ct = speed_trig(g);
  CHECK(ct.minCoeff() > 0.0);
  CHECK(ct.maxCoeff() <= 1.5 + 1e-12);
  CHECK(ct(g.ny / 2, g.nx / 2) == doctest::Approx(1.2));  // x=y=0
  // 1 + 0.3 sin(pi x) + 0.2 cos(pi y) at (0.5, 0).
  CHECK(ct(g.ny / 2, 30) == doctest::Approx(1.5));

  const FieldXd cj = speed_square_jump(g, {1.0, 1.5, 0.5, 0.0, 0.0});
  CHECK(cj(g.ny / 2, g.nx / 2) == doctest::Approx(1.0));
  CHECK(cj(0, 0) == doctest::Approx(1.5));
  CHECK(cj(g.ny / 2, 30) == doctest::Approx(1.0));   // x=0.5 on the edge counts as inside
  CHECK(cj(g.ny / 2, 31) == doctest::Approx(1.5));
}

TEST_CASE("interior box snaps the margin outward to whole cells") {
  const GridSpec g101 = make_grid(101, 1.0, 1.0);
  const InteriorBox b101 = interior_box(g101, 0.03);
  CHECK(b101.nxi() == 95);
  CHECK(b101.nyi() == 95);
  CHECK(b101.i0 == 3);
  CHECK(b101.i1 == 97);

  const GridSpec g41 = make_grid(41, 1.0, 1.0);
  const InteriorBox b41 = interior_box(g41, 0.03);
  CHECK(b41.nxi() == 37);
  CHECK(b41.count() == 37 * 37);

  const FieldXd chi = interior_cutoff(g41, 0.03);
  CHECK(chi.sum() == doctest::Approx(37.0 * 37.0));
  CHECK(chi(0, 0) == 0.0);
  CHECK(chi(b41.j0, b41.i0) == 1.0);
  CHECK(chi(b41.j0 - 1, b41.i0) == 0.0);

  CHECK_THROWS_AS(interior_box(g41, 0.5), ValidationError);
  CHECK_THROWS_AS(interior_box(g41, 0.49), ValidationError);
}

TEST_CASE("relative error and gradient pairing behave like norms") {
  const GridSpec g = make_grid(31, 1.0, 1.0);
  const FieldXd c = speed_trig(g);
  const FieldXd f = render_gaussians(g, {{0.1, -0.2, 0.3, 1.0}});
  CHECK(relative_error(f, f, c, g) == doctest::Approx(0.0));
  CHECK(relative_error((2.0 * f).eval(), f, c, g) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(relative_error(f, FieldXd::Zero(g.ny, g.nx).eval(), c, g), ValidationError);

  // Forward differences are exact on linears: grad x . grad x = 1 over the
  // covered (nx-1) x ny cell strip.
  const FieldXd x = coord_x(g);
  const double covered = (g.nx - 1) * g.ny * g.dx * g.dy;
  CHECK(hd_inner(x, x, g) == doctest::Approx(covered).epsilon(1e-13));
  CHECK(hd_inner(x, coord_y(g), g) == doctest::Approx(0.0).epsilon(1e-13));
  const FieldXd h = render_gaussians(g, {{-0.3, 0.4, 0.25, 0.7}});
  CHECK(hd_inner(f, h, g) == doctest::Approx(hd_inner(h, f, g)).epsilon(1e-13));
  CHECK(hd_seminorm(x, g) == doctest::Approx(std::sqrt(covered)).epsilon(1e-13));
}
