#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "confactor/numerics.hpp"

using namespace confactor;

namespace {
double std_normal_pdf(double t) {
  return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
}
}  // namespace

TEST_CASE("integrate: standard normal over the whole line") {
  const double v = integrate(std_normal_pdf, Interval::whole());
  CHECK(v == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("integrate: inverse-square exponential over the positive half line") {
  // f(s) = s^-2 exp(-1/s); substituting u = 1/s gives the unit exponential
  // integral, so the exact value is 1.
  auto f = [](double s) { return std::exp(-1.0 / s) / (s * s); };
  const double v = integrate(f, Interval::positive());
  CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("integrate: constant on the unit interval") {
  const double v = integrate([](double) { return 1.0; }, Interval(0.0, 1.0));
  CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("integrate: linearity on randomized smooth integrands") {
  RandomStream rs(7001, 3);
  for (int trial = 0; trial < 25; ++trial) {
    const double a = 4.0 * rs.next_canonical() - 2.0;
    const double b = 4.0 * rs.next_canonical() - 2.0;
    const double w1 = 1.0 + rs.next_canonical();
    const double w2 = 0.5 + rs.next_canonical();
    auto f = [w1](double x) { return std::exp(-w1 * x * x); };
    auto g = [w2](double x) { return std::cos(w2 * x); };
    const Interval dom(-3.0, 4.0);
    const double lhs = integrate([&](double x) { return a * f(x) + b * g(x); }, dom);
    const double rhs = a * integrate(f, dom) + b * integrate(g, dom);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-8));
  }
}

TEST_CASE("integrate: non-finite integrand raises") {
  auto f = [](double x) { return x == x ? std::numeric_limits<double>::quiet_NaN() : 0.0; };
  CHECK_THROWS_AS(integrate(f, Interval(0.0, 1.0)), NonFinite);
}

TEST_CASE("log_integrate: handles huge dynamic range") {
  // integral of exp(-(x-100)^2/2) dx = sqrt(2 pi), far from the origin and
  // scaled by e^1000 -- impossible in linear space.
  auto logf = [](double x) { return 1000.0 - 0.5 * (x - 100.0) * (x - 100.0); };
  const double lv = log_integrate(logf, Interval(80.0, 120.0));
  CHECK(lv == doctest::Approx(1000.0 + 0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-10));
}

TEST_CASE("find_root: linear") {
  const double r = find_root([](double x) { return x - 2.0; }, Interval(0.0, 5.0));
  CHECK(r == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("find_root: scale-family cdf quantiles") {
  auto g05 = [](double s) { return std::exp(-1.0 / s) - 0.05; };
  auto g95 = [](double s) { return std::exp(-1.0 / s) - 0.95; };
  CHECK(find_root(g05, Interval(0.01, 100.0)) ==
        doctest::Approx(-1.0 / std::log(0.05)).epsilon(1e-9));  // 0.33381...
  CHECK(find_root(g95, Interval(0.01, 100.0)) ==
        doctest::Approx(-1.0 / std::log(0.95)).epsilon(1e-9));  // 19.4957...
}

TEST_CASE("find_root: invalid bracket raises") {
  CHECK_THROWS_AS(find_root([](double x) { return x * x + 1.0; }, Interval(-1.0, 1.0)),
                  NoSignChange);
}

TEST_CASE("find_root: randomized monotone functions stay bracketed") {
  RandomStream rs(12345, 9);
  for (int trial = 0; trial < 100; ++trial) {
    const double slope = 0.2 + 3.0 * rs.next_canonical();
    const double root = 8.0 * rs.next_canonical() - 4.0;
    const double curve = rs.next_canonical();
    auto g = [=](double x) { return slope * (x - root) + curve * std::atan(x - root); };
    const double r = find_root(g, Interval(-6.0, 6.0));
    // Contract: the sign change is bracketed at width <= tolerance around r.
    const double w = 1e-7 * std::max(1.0, std::abs(r));
    CHECK(g(r - w) * g(r + w) <= 0.0);
    CHECK(r == doctest::Approx(root).epsilon(1e-7));
  }
}

TEST_CASE("build_grid: uniform finite grid") {
  const auto g = build_grid(Interval(0.0, 1.0), 3);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == doctest::Approx(0.0));
  CHECK(g[1] == doctest::Approx(0.5));
  CHECK(g[2] == doctest::Approx(1.0));
}

TEST_CASE("build_grid: normal hint truncates tails inside [-9, 9]") {
  const auto g = build_grid(Interval::whole(), 257, std_normal_pdf);
  REQUIRE(g.size() >= 2);
  CHECK(g.front() >= -9.0);
  CHECK(g.back() <= 9.0);
  CHECK(g.front() <= -7.0);  // but the window still covers the 1e-12 tails
  CHECK(g.back() >= 7.0);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
}

TEST_CASE("build_grid: half line without hint gives finite increasing nodes") {
  const auto g = build_grid(Interval::positive(), 2);
  REQUIRE(g.size() == 2);
  CHECK(std::isfinite(g[0]));
  CHECK(std::isfinite(g[1]));
  CHECK(g[0] > 0.0);
  CHECK(g[1] > g[0]);
}

TEST_CASE("build_grid: off-origin mass is located") {
  auto hint = [](double x) { return std_normal_pdf(x - 12.0); };
  const auto g = build_grid(Interval::whole(), 128, hint);
  CHECK(g.front() < 12.0);
  CHECK(g.back() > 12.0);
  CHECK(g.front() > 12.0 - 12.0);
  CHECK(g.back() < 12.0 + 12.0);
}

TEST_CASE("RandomStream: bitwise reproducibility over one million draws") {
  RandomStream a(42, 17), b(42, 17);
  for (int i = 0; i < 1000000; ++i) {
    if (a.next_u64() != b.next_u64()) {
      FAIL("sequences diverged at draw ", i);
    }
  }
  CHECK(true);
}

TEST_CASE("RandomStream: distinct stream ids decorrelate") {
  RandomStream a(42, 1), b(42, 2);
  int agree = 0;
  for (int i = 0; i < 1000; ++i)
    if (a.next_u64() == b.next_u64()) ++agree;
  CHECK(agree == 0);
}

TEST_CASE("RandomStream: canonical draws are strictly inside (0,1)") {
  RandomStream a(1, 1);
  for (int i = 0; i < 100000; ++i) {
    const double u = a.next_canonical();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("central_diff matches analytic derivative") {
  auto f = [](double x) { return std::sin(x); };
  CHECK(central_diff(f, 0.3) == doctest::Approx(std::cos(0.3)).epsilon(1e-9));
}

TEST_CASE("MonotoneCubic: reproduces nodes, preserves monotonicity, clamps ends") {
  // Samples of an increasing function with flat stretches.
  std::vector<double> xs{0.0, 0.5, 1.0, 1.5, 2.5, 4.0};
  std::vector<double> ys{0.0, 0.0, 0.2, 1.4, 1.5, 1.5};
  const MonotoneCubic c(xs, ys);
  for (std::size_t i = 0; i < xs.size(); ++i)
    CHECK(c(xs[i]) == doctest::Approx(ys[i]).epsilon(1e-14));
  double prev = -1.0;
  for (int k = 0; k <= 400; ++k) {
    const double v = c(0.0 + 4.0 * k / 400.0);
    CHECK(v >= prev - 1e-12);  // never decreases
    prev = v;
  }
  CHECK(c(-5.0) == 0.0);  // clamped to end values
  CHECK(c(9.0) == 1.5);
}

TEST_CASE("MonotoneCubic: exact on linear data") {
  std::vector<double> xs{-2.0, -1.0, 0.5, 3.0};
  std::vector<double> ys{-4.0, -2.0, 1.0, 6.0};  // y = 2x
  const MonotoneCubic c(xs, ys);
  for (double x : {-1.7, -0.2, 0.9, 2.4})
    CHECK(c(x) == doctest::Approx(2.0 * x).epsilon(1e-12));
}

TEST_CASE("build_grid_window: respects the window and the hint") {
  auto log_hint = [](double x) { return -0.5 * (x - 1.0) * (x - 1.0); };
  const auto grid = build_grid_window(Interval::whole(), -3.0, 5.0, 65, log_hint);
  CHECK(grid.front() >= -3.0);
  CHECK(grid.back() <= 5.0);
  // More than half of the nodes concentrate within one unit of the peak.
  int near_peak = 0;
  for (double x : grid)
    if (std::abs(x - 1.0) < 1.0) ++near_peak;
  CHECK(near_peak > 32);
  // Uniform variant when no hint is given.
  const auto uni = build_grid_window(Interval::whole(), 0.0, 1.0, 11);
  CHECK(uni.size() == 11);
  CHECK(uni[5] == doctest::Approx(0.5).epsilon(1e-12));
}
