#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "confactor/families.hpp"
#include "confactor/invariance.hpp"
#include "confactor/numerics.hpp"

using namespace confactor;

namespace {

GroupElement random_element(const GroupAction& grp, RandomStream& rng) {
  GroupElement a(grp.dim);
  for (int i = 0; i < grp.dim; ++i) {
    const Interval& c = grp.element_space[i];
    a[i] = c.lo_finite() ? 0.1 + 4.9 * rng.next_canonical()      // positive coord
                         : -3.0 + 6.0 * rng.next_canonical();    // free coord
  }
  return a;
}

// A consistent group action (translation conjugated by x -> x^3) paired with
// a deliberately naive induced map; location-scale families are not invariant
// under it.
GroupAction cubic_pseudo_action() {
  GroupAction g;
  g.label = "cubic-conjugated-translation";
  g.dim = 1;
  g.act = [](const GroupElement& a, double x) { return std::cbrt(x * x * x + a[0]); };
  g.act_param = [](const GroupElement& a, const std::vector<double>& th) {
    auto out = th;
    out[0] += a[0];  // naive: pretends the action is a plain shift
    return out;
  };
  g.compose = [](const GroupElement& a, const GroupElement& b) {
    return GroupElement{a[0] + b[0]};
  };
  g.inverse = [](const GroupElement& a) { return GroupElement{-a[0]}; };
  g.identity = {0.0};
  g.element_space = {Interval::whole()};
  return g;
}

}  // namespace

// ----------------------------------------------------------------------------
// Group axioms
// ----------------------------------------------------------------------------

TEST_CASE("group axioms hold numerically for every registered group") {
  RandomStream rng(314159, 0);
  for (const auto& lbl : group_labels()) {
    const GroupAction& grp = group_by_label(lbl);
    for (int k = 0; k < 1000; ++k) {
      const auto a = random_element(grp, rng);
      const auto b = random_element(grp, rng);
      const double x = -8.0 + 16.0 * rng.next_canonical();
      const std::vector<double> th{-2.0 + 4.0 * rng.next_canonical(),
                                   0.2 + 3.0 * rng.next_canonical()};
      // Identity and composition on the sample space.
      CHECK(grp.act(grp.identity, x) == doctest::Approx(x).epsilon(1e-12));
      CHECK(grp.act(grp.compose(a, b), x) ==
            doctest::Approx(grp.act(a, grp.act(b, x))).epsilon(1e-10));
      CHECK(grp.act(grp.inverse(a), grp.act(a, x)) ==
            doctest::Approx(x).epsilon(1e-10));
      // Same laws for the induced action.
      const auto via_compose = grp.act_param(grp.compose(a, b), th);
      const auto via_steps = grp.act_param(a, grp.act_param(b, th));
      for (std::size_t i = 0; i < th.size(); ++i) {
        CHECK(grp.act_param(grp.identity, th)[i] ==
              doctest::Approx(th[i]).epsilon(1e-12));
        CHECK(via_compose[i] == doctest::Approx(via_steps[i]).epsilon(1e-10));
      }
    }
  }
  CHECK_THROWS_AS(group_by_label("rotation"), std::invalid_argument);
}

// ----------------------------------------------------------------------------
// check_invariance
// ----------------------------------------------------------------------------

TEST_CASE("check_invariance: location-scale family under the affine group") {
  const auto fam = family_by_label("normal");
  const auto& grp = group_by_label("affine");
  const auto grid = build_grid(Interval::whole(), 64, {});
  const double r = check_invariance(fam, grp, {{1.0, 2.0}}, grid);
  CHECK(r < 1e-10);
}

TEST_CASE("check_invariance: the identity element gives a zero residual") {
  const auto fam = family_by_label("cauchy");
  const auto& grp = group_by_label("affine");
  const auto grid = build_grid(Interval::whole(), 32, {});
  CHECK(check_invariance(fam, grp, {grp.identity}, grid) == 0.0);
}

TEST_CASE("check_invariance: rejects a pseudo-action with a naive induced map") {
  const auto fam = family_by_label("normal");
  const auto grp = cubic_pseudo_action();
  const auto grid = build_grid(Interval::whole(), 64, {});
  CHECK(check_invariance(fam, grp, {{1.0}}, grid) > 0.01);
}

// ----------------------------------------------------------------------------
// action_derivative and the trivial locus
// ----------------------------------------------------------------------------

TEST_CASE("action_derivative: translation and scaling closed forms") {
  const auto& tr = group_by_label("translation");
  for (double x : {-5.0, 0.0, 1.7, 42.0})
    CHECK(action_derivative(tr, x) == doctest::Approx(-1.0).epsilon(1e-10));
  const auto& sc = group_by_label("scaling");
  CHECK(action_derivative(sc, 0.0) == 0.0);
  CHECK(action_derivative(sc, 3.0) == doctest::Approx(-3.0).epsilon(1e-10));
  CHECK(action_derivative(sc, -2.0) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("action_derivative: guards") {
  // Two-dimensional groups are rejected outright.
  CHECK_THROWS_AS(action_derivative(group_by_label("affine"), 1.0),
                  std::invalid_argument);
  // A kink at the identity is flagged.
  GroupAction kinked;
  kinked.dim = 1;
  kinked.act = [](const GroupElement& a, double x) { return x + std::abs(a[0]); };
  kinked.inverse = [](const GroupElement& a) { return GroupElement{-a[0]}; };
  kinked.identity = {0.0};
  CHECK_THROWS_AS(action_derivative(kinked, 1.0), NonDifferentiable);
  // A supplied closed form that contradicts the finite difference is flagged.
  GroupAction lying = group_by_label("translation");
  lying.exact_action_derivative = [](double) { return +1.0; };
  CHECK_THROWS_AS(action_derivative(lying, 0.5), NonDifferentiable);
}

TEST_CASE("trivial_locus: translation has none, scaling pivots at the origin") {
  const auto grid = build_grid(Interval::whole(), 65, {});
  CHECK(trivial_locus(group_by_label("translation"), Interval::whole(), grid).empty());
  const auto locus = trivial_locus(group_by_label("scaling"), Interval::whole(), grid);
  REQUIRE(locus.size() == 1);
  CHECK(std::abs(locus[0]) < 1e-10);
  // Restricted to the positive axis the zero is outside the support.
  const auto pos_grid = build_grid(Interval::positive(), 65, {});
  CHECK(trivial_locus(group_by_label("scaling"), Interval::positive(), pos_grid).empty());
}

TEST_CASE("a vanishing action derivative means the point is a fixed point of the whole group") {
  const auto& sc = group_by_label("scaling");
  const std::vector<GroupElement> probes{{0.5}, {1.0}, {2.0}, {7.3}};
  // At x = 0 the derivative vanishes and every element fixes the point.
  CHECK(action_derivative(sc, 0.0) == 0.0);
  for (const auto& a : probes) CHECK(sc.act(a, 0.0) == 0.0);
  // Away from it the derivative is nonzero and some element moves the point.
  for (double x : {-2.0, 2.0}) {
    CHECK(std::abs(action_derivative(sc, x)) > 1.0);
    bool moved = false;
    for (const auto& a : probes) moved = moved || sc.act(a, x) != x;
    CHECK(moved);
  }
}

TEST_CASE("induced action derivative never vanishes on the parameter space of an invariant family") {
  // Scale family under the scaling group: the parameter-side derivative is
  // -sigma, bounded away from zero on any sigma-grid.
  const auto& sc = group_by_label("scaling");
  double smallest = kInf;
  for (double sigma : build_grid(Interval(0.2, 5.0), 33, {})) {
    const double d = central_diff(
        [&sc, sigma](double t) { return sc.act_param(sc.inverse({t}), {sigma})[0]; },
        sc.identity[0]);
    smallest = std::min(smallest, std::abs(d));
    CHECK(d == doctest::Approx(-sigma).epsilon(1e-8));
  }
  CHECK(smallest >= 0.2 * (1.0 - 1e-8));
}

// ----------------------------------------------------------------------------
// reduction_maps
// ----------------------------------------------------------------------------

TEST_CASE("reduction_maps: translation reduces to the identity map") {
  const auto maps = reduction_maps(group_by_label("translation"),
                                   family_by_label("normal-location"), 0.0, 0.0);
  for (double x : {-4.0, -0.3, 0.0, 2.5})
    CHECK(maps.s(x) == doctest::Approx(x).epsilon(1e-9));
  for (double mu : {-1.5, 0.8})
    CHECK(maps.s_bar(mu) == doctest::Approx(mu).epsilon(1e-9));
  CHECK(maps.ds(1.0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(maps.branch == +1);
}

TEST_CASE("reduction_maps: scaling on the positive axis reduces to the log map") {
  const auto maps = reduction_maps(group_by_label("scaling"),
                                   family_by_label("exponential-scale"), 1.0, 1.0);
  for (double x : {0.05, 0.5, 1.0, 3.0, 40.0})
    CHECK(maps.s(x) == doctest::Approx(std::log(x)).epsilon(1e-9));
  for (double sigma : {0.1, 1.0, 7.0})
    CHECK(maps.s_bar(sigma) == doctest::Approx(std::log(sigma)).epsilon(1e-9));
  CHECK(maps.ds(2.0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(maps.ds_bar(4.0) == doctest::Approx(0.25).epsilon(1e-10));
  CHECK(maps.branch == +1);
}

TEST_CASE("reduction_maps: s is strictly increasing on random pairs") {
  RandomStream rng(777, 3);
  const auto tr_maps = reduction_maps(group_by_label("translation"),
                                      family_by_label("normal-location"));
  const auto sc_maps = reduction_maps(group_by_label("scaling"),
                                      family_by_label("exponential-scale"));
  for (int k = 0; k < 1000; ++k) {
    const double u = -6.0 + 12.0 * rng.next_canonical();
    const double v = -6.0 + 12.0 * rng.next_canonical();
    const double x1 = std::min(u, v), x2 = std::max(u, v);
    if (x1 == x2) continue;
    CHECK(tr_maps.s(x1) < tr_maps.s(x2));
    CHECK(sc_maps.s(std::exp(x1)) < sc_maps.s(std::exp(x2)));
  }
}

TEST_CASE("reduction_maps: evaluation across the trivial locus is refused") {
  // Scaling acting on a location family supported on the whole line: the
  // locus {0} separates the anchor (negative by default) from positive x.
  const auto maps = reduction_maps(group_by_label("scaling"),
                                   family_by_label("normal-location"));
  CHECK_NOTHROW(maps.s(-3.0));
  CHECK_THROWS_AS(maps.s(1.0), TrivialLocusCrossed);
  // Anchoring exactly on the locus is refused at construction.
  CHECK_THROWS_AS(reduction_maps(group_by_label("scaling"),
                                 family_by_label("normal-location"), 0.0, 1.0),
                  TrivialLocusCrossed);
}

// ----------------------------------------------------------------------------
// check_H_form
// ----------------------------------------------------------------------------

TEST_CASE("check_H_form: location family depends on x - mu only") {
  const auto fam = family_by_label("normal-location");
  const auto maps = reduction_maps(group_by_label("translation"), fam, 0.0, 0.0);
  const auto grid = build_grid(Interval::whole(), 64, {});
  CHECK(check_H_form(fam, maps, grid) < 1e-9);
}

TEST_CASE("check_H_form: scale family depends on log x - log sigma only") {
  const auto fam = family_by_label("exponential-scale");
  const auto maps = reduction_maps(group_by_label("scaling"), fam, 1.0, 1.0);
  const auto grid = build_grid(Interval::positive(), 64, {});
  CHECK(check_H_form(fam, maps, grid) < 1e-8);
}

TEST_CASE("check_H_form: flags a scale family whose shape drifts with sigma") {
  // Weibull-type cdf whose shape parameter depends on sigma: no function of
  // log x - log sigma alone can reproduce it.
  DirectFamily drifting;
  drifting.label = "shape-drift";
  drifting.dim_param = 1;
  drifting.param_space = {Interval::positive()};
  drifting.support = [](const std::vector<double>&) { return Interval::positive(); };
  auto shape = [](double sigma) { return 1.0 + 0.3 * sigma; };
  drifting.cdf = [shape](double x, const std::vector<double>& th) {
    return x > 0.0 ? -std::expm1(-std::pow(x / th[0], shape(th[0]))) : 0.0;
  };
  drifting.log_pdf = [shape](double x, const std::vector<double>& th) {
    if (x <= 0.0) return -kInf;
    const double k = shape(th[0]), z = x / th[0];
    return std::log(k / th[0]) + (k - 1.0) * std::log(z) - std::pow(z, k);
  };
  const auto maps =
      reduction_maps(group_by_label("scaling"), drifting, 1.0, 1.0);
  const auto grid = build_grid(Interval::positive(), 64, {});
  CHECK(check_H_form(drifting, maps, grid) > 0.01);
}
