#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mwtomo/atr.hpp"

using namespace mwt;

namespace {

/// Two polynomial bumps, exactly zero outside the strict interior of the box.
FieldXd compact_bumps(const GridSpec& g) {
  auto add_bump = [&](double cx, double cy, double rx, double ry, double amp, FieldXd& f) {
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        const double tx = std::max(0.0, (g.x(i) - (cx - rx)) * ((cx + rx) - g.x(i))) / (rx * rx);
        const double ty = std::max(0.0, (g.y(j) - (cy - ry)) * ((cy + ry) - g.y(j))) / (ry * ry);
        f(j, i) += amp * tx * tx * tx * ty * ty * ty;
      }
  };
  FieldXd f = FieldXd::Zero(g.ny, g.nx);
  add_bump(0.25, -0.15, 0.5, 0.45, 1.0, f);
  add_bump(-0.4, 0.35, 0.4, 0.4, -0.7, f);
  return f;
}

BoundaryTrace<double> measure(const FieldXd& f, const FieldXd& c, const GridSpec& g,
                              const PerimeterMap& p, const GammaMask& gamma) {
  BoundaryTrace<double> m{forward_solve(f, c, g, p).trace, gamma};
  zero_outside(m.values, gamma);
  return m;
}

}  // namespace

TEST_CASE("averaging specs are validated") {
  const GridSpec g = make_grid(101, 2.0, 1.5);

  const AveragingSpec bump = averaging_bump(g, 32);
  CHECK(bump.steps.size() == 32);
  CHECK((bump.chi >= 0.0).all());
  CHECK(bump.chi(0) == 0.0);
  CHECK(bump.chi(31) == 0.0);
  for (int j = 1; j < 32; ++j) CHECK(bump.steps(j) > bump.steps(j - 1));
  CHECK(std::abs((averaging_quad_weights(bump, g) * bump.chi).sum() - 1.0) <= 1e-10);
  CHECK(g.t(bump.steps(0)) >= 0.1 * g.t_final() - g.dt);

  const AveragingSpec ramp = averaging_ramp(g);
  CHECK(ramp.chi(ramp.chi.size() - 1) > 0.0);
  CHECK(std::abs((averaging_quad_weights(ramp, g) * ramp.chi).sum() - 1.0) <= 1e-10);

  const AveragingSpec single = averaging_bump(g, 1);
  CHECK(single.steps(0) == g.nt);
  CHECK(single.chi(0) == 1.0);
  CHECK(averaging_quad_weights(single, g)(0) == 1.0);

  CHECK_THROWS_AS(averaging_bump(g, 0), ValidationError);
  CHECK_THROWS_AS(averaging_bump(g, 32, 1.0), ValidationError);
  CHECK_THROWS_AS(averaging_bump(make_grid(21, 1.0, 1.0), 32), ValidationError);
  CHECK_THROWS_AS(averaging_ramp(g, 1), ValidationError);
  CHECK_THROWS_AS(averaging_ramp(g, 16, 0.5, 0.0), ValidationError);
  CHECK_THROWS_AS(averaging_ramp(g, 16, 0.8, 0.3), ValidationError);
}

TEST_CASE("reversal inputs are validated") {
  const GridSpec g = make_grid(31, 1.0, 1.0);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_constant(g);
  const InteriorBox box = interior_box(g);
  const BoundaryTrace<double> m{TraceXd::Zero(g.nt + 1, p.n()), gamma_full(p)};

  CHECK_THROWS_AS(time_reversal_A(m, 0, c, g, p, TimeReversalMode::Full), ValidationError);
  CHECK_THROWS_AS(time_reversal_A(m, g.nt + 1, c, g, p, TimeReversalMode::Full), ValidationError);

  const BoundaryTrace<double> short_trace{TraceXd::Zero(g.nt, p.n()), gamma_full(p)};
  CHECK_THROWS_AS(time_reversal_A(short_trace, g.nt, c, g, p, TimeReversalMode::Full),
                  ValidationError);

  BoundaryTrace<double> partial{TraceXd::Zero(g.nt + 1, p.n()), gamma_sides(p, {Side::Bottom})};
  CHECK_THROWS_AS(time_reversal_A(partial, g.nt, c, g, p, TimeReversalMode::Full), ValidationError);
  CHECK_NOTHROW(time_reversal_A(partial, g.nt, c, g, p, TimeReversalMode::PartialZaremba));

  BoundaryTrace<double> empty = partial;
  empty.gamma.on.setConstant(false);
  CHECK_THROWS_AS(time_reversal_A(empty, g.nt, c, g, p, TimeReversalMode::PartialZaremba),
                  ValidationError);

  const AveragingSpec avg = averaging_bump(g, 4);
  CHECK_THROWS_AS(atr_iterate(m, 0, avg, box, c, g, p, TimeReversalMode::Full), ValidationError);
  const FieldXd zero_truth = FieldXd::Zero(g.ny, g.nx);
  CHECK_THROWS_AS(atr_iterate(m, 1, avg, box, c, g, p, TimeReversalMode::Full, {}, &zero_truth),
                  ValidationError);
}

TEST_CASE("zero data reverses to zero") {
  const GridSpec g = make_grid(31, 1.0, 1.0);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_constant(g);
  const InteriorBox box = interior_box(g);
  const AveragingSpec avg = averaging_bump(g, 4);

  const BoundaryTrace<double> full{TraceXd::Zero(g.nt + 1, p.n()), gamma_full(p)};
  const BoundaryTrace<double> part{TraceXd::Zero(g.nt + 1, p.n()),
                                   gamma_bottom_left_adjacent(p, g, 0.2)};
  CHECK((time_reversal_A(full, g.nt, c, g, p, TimeReversalMode::Full) == 0.0).all());
  CHECK((time_reversal_A(part, g.nt, c, g, p, TimeReversalMode::PartialZero) == 0.0).all());
  CHECK((time_reversal_A(part, g.nt, c, g, p, TimeReversalMode::PartialZaremba) == 0.0).all());
  CHECK((averaged_A0(full, avg, box, c, g, p, TimeReversalMode::Full) == 0.0).all());
  CHECK((averaged_A0(part, avg, box, c, g, p, TimeReversalMode::PartialZaremba) == 0.0).all());
}

TEST_CASE("constant data reverses to the constant") {
  const GridSpec g = make_grid(41, 1.0, 1.0);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_constant(g);
  const int tau = g.nt / 2;

  const BoundaryTrace<double> full{TraceXd::Constant(g.nt + 1, p.n(), 3.0), gamma_full(p)};
  CHECK((time_reversal_A(full, tau, c, g, p, TimeReversalMode::Full) - 3.0).abs().maxCoeff() <=
        1e-8);

  BoundaryTrace<double> part{TraceXd::Constant(g.nt + 1, p.n(), 3.0),
                             gamma_sides(p, {Side::Bottom, Side::Left})};
  zero_outside(part.values, part.gamma);
  CHECK((time_reversal_A(part, tau, c, g, p, TimeReversalMode::PartialZaremba) - 3.0)
            .abs()
            .maxCoeff() <= 1e-8);
}

TEST_CASE("single-node averaging equals the projected reversal") {
  const GridSpec g = make_grid(61, 2.0, 1.5);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_trig(g);
  const InteriorBox box = interior_box(g);
  const FieldXd f = render_gaussians(g, {{0.2, -0.1, 0.18, 1.0}, {-0.4, 0.3, 0.25, -0.6}});
  const BoundaryTrace<double> h = measure(f, c, g, p, gamma_full(p));

  const AveragingSpec single = averaging_bump(g, 1);
  const FieldXd a0 = averaged_A0(h, single, box, c, g, p, TimeReversalMode::Full);
  const FieldXd projected =
      project_pi0(time_reversal_A(h, g.nt, c, g, p, TimeReversalMode::Full), box, g, {});
  CHECK(weighted_norm((a0 - projected).eval(), c, g) <= 1e-8 * weighted_norm(projected, c, g));
}

TEST_CASE("averaged reversal is linear in the trace") {
  const GridSpec g = make_grid(61, 2.0, 1.5);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_trig(g);
  const InteriorBox box = interior_box(g);
  const AveragingSpec avg = averaging_bump(g, 8);
  EllipticSolveSpec tight;
  tight.tolerance = 1e-12;

  const BoundaryTrace<double> h1 =
      measure(render_gaussians(g, {{0.2, -0.1, 0.18, 1.0}}), c, g, p, gamma_full(p));
  const BoundaryTrace<double> h2 =
      measure(render_gaussians(g, {{-0.1, -0.3, 0.22, 0.8}}), c, g, p, gamma_full(p));
  const BoundaryTrace<double> hsum{2.0 * h1.values - 0.7 * h2.values, gamma_full(p)};

  const FieldXd a1 = averaged_A0(h1, avg, box, c, g, p, TimeReversalMode::Full, tight);
  const FieldXd a2 = averaged_A0(h2, avg, box, c, g, p, TimeReversalMode::Full, tight);
  const FieldXd asum = averaged_A0(hsum, avg, box, c, g, p, TimeReversalMode::Full, tight);
  CHECK(weighted_norm((asum - 2.0 * a1 + 0.7 * a2).eval(), c, g) <=
        1e-10 * weighted_norm(asum, c, g));
}

TEST_CASE("thread count does not change the average") {
  const GridSpec g = make_grid(41, 1.5, 1.5);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_trig(g);
  const InteriorBox box = interior_box(g);
  const BoundaryTrace<double> h =
      measure(render_gaussians(g, {{0.2, -0.1, 0.2, 1.0}}), c, g, p, gamma_full(p));
  const AveragingSpec avg = averaging_bump(g, 8);

  const FieldXd one = averaged_A0(h, avg, box, c, g, p, TimeReversalMode::Full, {}, 1);
  const FieldXd three = averaged_A0(h, avg, box, c, g, p, TimeReversalMode::Full, {}, 3);
  CHECK((one == three).all());
}

TEST_CASE("full-time reversal approximates the phantom") {
  const GridSpec g = make_grid(101, 4.0, 1.5);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_trig(g);
  const FieldXd f = render_shepp_logan(g);
  const BoundaryTrace<double> h = measure(f, c, g, p, gamma_full(p));

  const FieldXd rec = time_reversal_A(h, g.nt, c, g, p, TimeReversalMode::Full);
  CHECK(hd_seminorm((rec - f).eval(), g) <= 1.0 * hd_seminorm(f, g));
  CHECK(weighted_norm((rec - f).eval(), c, g) <= 1.0 * weighted_norm(f, c, g));
}

TEST_CASE("full-data series error decreases monotonically") {
  const GridSpec g = make_grid(61, 4.0, 1.5);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_trig(g);
  const InteriorBox box = interior_box(g);
  const FieldXd f = compact_bumps(g);
  const BoundaryTrace<double> m = measure(f, c, g, p, gamma_full(p));
  const AveragingSpec avg = averaging_bump(g, 32);

  const AtrResult r = atr_iterate(m, 20, avg, box, c, g, p, TimeReversalMode::Full, {}, &f);
  REQUIRE(r.status == RunStatus::Completed);
  REQUIRE(r.log.size() == 20);
  for (size_t i = 1; i < r.log.size(); ++i) {
    CHECK(r.log[i].rel_error < r.log[i - 1].rel_error);
    CHECK(r.log[i].rel_error_hd < r.log[i - 1].rel_error_hd);
  }
  CHECK(r.log.back().rel_error < 0.05 * r.log.front().rel_error);
}

TEST_CASE("zero measurements keep every iterate at zero") {
  const GridSpec g = make_grid(31, 1.0, 1.0);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_constant(g);
  const InteriorBox box = interior_box(g);
  const BoundaryTrace<double> m{TraceXd::Zero(g.nt + 1, p.n()), gamma_full(p)};

  const AtrResult r = atr_iterate(m, 3, averaging_bump(g, 4), box, c, g, p, TimeReversalMode::Full);
  CHECK(r.status == RunStatus::Completed);
  CHECK(r.steps_done == 3);
  CHECK((r.f == 0.0).all());
  for (const IterationEntry& e : r.log) CHECK(e.residual == 0.0);
}

TEST_CASE("series iteration is linear in the data") {
  const GridSpec g = make_grid(41, 2.0, 1.5);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_trig(g);
  const InteriorBox box = interior_box(g);
  const AveragingSpec avg = averaging_bump(g, 8);
  EllipticSolveSpec tight;
  tight.tolerance = 1e-12;

  const BoundaryTrace<double> m1 =
      measure(render_gaussians(g, {{0.15, -0.2, 0.2, 1.0}}), c, g, p, gamma_full(p));
  const BoundaryTrace<double> m2 =
      measure(render_gaussians(g, {{-0.25, 0.1, 0.25, -0.8}}), c, g, p, gamma_full(p));
  const BoundaryTrace<double> msum{1.5 * m1.values + 0.5 * m2.values, gamma_full(p)};

  const FieldXd f1 = atr_iterate(m1, 2, avg, box, c, g, p, TimeReversalMode::Full, tight).f;
  const FieldXd f2 = atr_iterate(m2, 2, avg, box, c, g, p, TimeReversalMode::Full, tight).f;
  const FieldXd fsum = atr_iterate(msum, 2, avg, box, c, g, p, TimeReversalMode::Full, tight).f;
  CHECK(weighted_norm((fsum - 1.5 * f1 - 0.5 * f2).eval(), c, g) <=
        1e-10 * weighted_norm(fsum, c, g));
}

TEST_CASE("unstable partial-data benchmark lands near the reference error") {
  const GridSpec g = make_grid(101, 1.8, 1.0);
  const PerimeterMap p = make_perimeter(g);
  const FieldXd c = speed_constant(g);
  const InteriorBox box = interior_box(g);
  const FieldXd f = render_shepp_logan(g);
  const BoundaryTrace<double> m = measure(f, c, g, p, gamma_bottom_left_adjacent(p, g, 0.2));
  const AveragingSpec avg = averaging_ramp(g);

  const AtrResult r =
      atr_iterate(m, 50, avg, box, c, g, p, TimeReversalMode::PartialZaremba, {}, &f);
  REQUIRE(r.status == RunStatus::Completed);
  CHECK(r.log.back().rel_error >= 0.24);
  CHECK(r.log.back().rel_error <= 0.44);
  CHECK(r.log.back().rel_error < r.log[9].rel_error);
}
