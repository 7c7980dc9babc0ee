#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "confactor/families.hpp"
#include "confactor/numerics.hpp"
#include "confactor/posterior.hpp"
#include "confactor/rivals.hpp"

using namespace confactor;

namespace {

// Independent quadrature oracle for integral_0^inf u^k exp(-u^2/2 + b u) du:
// dense trapezoid on [0, 30] (the integrand is below 1e-14 of its peak past
// u = b + 12 for the |b| <= 7.5 exercised here).
double weighted_gauss_oracle(int k, double b) {
  const int n = 600000;
  const double h = 30.0 / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double u = i * h;
    const double v = std::pow(u, k) * std::exp(-0.5 * u * u + b * u);
    s += (i == 0 || i == n) ? 0.5 * v : v;
  }
  return s * h;
}

double max_abs_gap(const Posterior& a, const Posterior& b,
                   const std::vector<double>& grid) {
  double worst = 0.0;
  for (double l : grid) worst = std::max(worst, std::abs(a.density(l) - b.density(l)));
  return worst;
}

double grid_l1(const Posterior& a, const Posterior& b, const std::vector<double>& grid) {
  std::vector<double> da(grid.size()), db(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    da[i] = a.density(grid[i]);
    db[i] = b.density(grid[i]);
  }
  double ma = 0.0, mb = 0.0, l1 = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    ma += 0.5 * (da[i] + da[i - 1]) * (grid[i] - grid[i - 1]);
    mb += 0.5 * (db[i] + db[i - 1]) * (grid[i] - grid[i - 1]);
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double ga = std::abs(da[i] / ma - db[i] / mb);
    const double gb = std::abs(da[i - 1] / ma - db[i - 1] / mb);
    l1 += 0.5 * (ga + gb) * (grid[i] - grid[i - 1]);
  }
  return l1;
}

MonotoneMap log_map() {
  return {[](double s) { return std::log(s); },
          [](double l) { return std::exp(l); },
          [](double s) { return 1.0 / s; }};
}

}  // namespace

// ----------------------------------------------------------------------------
// Fisher information
// ----------------------------------------------------------------------------

TEST_CASE("fisher information of the normal joint matches the analytic matrix") {
  const auto fam = base_family("normal").as_direct();
  const auto unit = fisher_information(fam, {0.7, 1.0});
  CHECK(unit.dim == 2);
  CHECK(std::abs(unit(0, 0) - 1.0) < 1e-5);
  CHECK(std::abs(unit(0, 1)) < 1e-5);
  CHECK(std::abs(unit(1, 0)) < 1e-5);
  CHECK(std::abs(unit(1, 1) - 2.0) < 1e-5);
  CHECK(unit(0, 1) == unit(1, 0));

  const auto wide = fisher_information(fam, {0.7, 2.0});
  CHECK(std::abs(wide(0, 0) - 0.25) < 1e-5);
  CHECK(std::abs(wide(1, 1) - 0.5) < 1e-5);
  CHECK(std::abs(wide(0, 1)) < 1e-5);
}

TEST_CASE("fisher information of the exponential scale family is 1/sigma^2") {
  const auto fam = family_by_label("exponential-scale");
  const auto info = fisher_information(fam, {2.0});
  CHECK(info.dim == 1);
  CHECK(std::abs(info(0, 0) - 0.25) < 1e-5);
  CHECK(std::abs(info.det() - 0.25) < 1e-5);
}

TEST_CASE("fisher information matches the analytic forms at random parameters") {
  const auto normal = base_family("normal").as_direct();
  const auto expscale = family_by_label("exponential-scale");
  RandomStream rs(20240917, 5);
  for (int trial = 0; trial < 10; ++trial) {
    const double mu = -3.0 + 6.0 * rs.next_canonical();
    const double sg = 0.3 + 3.7 * rs.next_canonical();
    const auto fn = fisher_information(normal, {mu, sg});
    CHECK(std::abs(fn(0, 0) - 1.0 / (sg * sg)) < 1e-5 * (1.0 + 1.0 / (sg * sg)));
    CHECK(std::abs(fn(1, 1) - 2.0 / (sg * sg)) < 1e-5 * (1.0 + 2.0 / (sg * sg)));
    CHECK(std::abs(fn(0, 1)) < 1e-5);
    const auto fe = fisher_information(expscale, {sg});
    CHECK(std::abs(fe(0, 0) - 1.0 / (sg * sg)) < 1e-5 * (1.0 + 1.0 / (sg * sg)));
  }
}

TEST_CASE("fisher information validates its inputs") {
  const auto fam = family_by_label("exponential-scale");
  CHECK_THROWS_AS(fisher_information(fam, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(fisher_information(fam, {-1.0}), std::invalid_argument);
}

// ----------------------------------------------------------------------------
// Jeffreys factor
// ----------------------------------------------------------------------------

TEST_CASE("jeffreys factor on the normal joint is proportional to 1/sigma^2") {
  const auto zeta = jeffreys_factor(base_family("normal").as_direct());
  CHECK(zeta.kind == FactorKind::custom);
  CHECK(zeta.dim_param == 2);
  const double at_one = zeta.zeta({0.0, 1.0});
  CHECK(std::abs(at_one - std::sqrt(2.0)) < 1e-4);
  // Ratio across sigma doubling is 4, independent of mu.
  CHECK(std::abs(at_one / zeta.zeta({5.0, 2.0}) - 4.0) < 1e-4);
  CHECK(std::abs(zeta.zeta({-3.0, 1.0}) / at_one - 1.0) < 1e-6);
}

TEST_CASE("jeffreys factor on pinned families reduces to the group factors") {
  // Location family: constant.
  const auto loc = jeffreys_factor(family_by_label("normal-location"));
  CHECK(std::abs(loc.zeta({0.0}) / loc.zeta({7.0}) - 1.0) < 1e-5);
  // Scale family: proportional to 1/sigma.
  const auto sca = jeffreys_factor(family_by_label("normal-scale"));
  CHECK(std::abs(sca.zeta({1.0}) / sca.zeta({2.0}) - 2.0) < 1e-4);
  CHECK(std::abs(sca.zeta({1.0}) - std::sqrt(2.0)) < 1e-4);
}

TEST_CASE("jeffreys factor transforms covariantly under reparameterization") {
  // Direct construction in lambda = log sigma (no group label, so the factor
  // evaluates the information per call) against the push-forward of the
  // sigma-coordinate factor through the factor transformation rule.
  const auto in_sigma = jeffreys_factor(family_by_label("exponential-scale"));
  DirectFamily in_lambda;
  in_lambda.label = "exponential-scale-log";
  in_lambda.dim_param = 1;
  in_lambda.param_space = {Interval::whole()};
  in_lambda.support = [](const std::vector<double>&) { return Interval::positive(); };
  in_lambda.log_pdf = [](double x, const std::vector<double>& th) {
    return -x * std::exp(-th[0]) - th[0];
  };
  const auto direct = jeffreys_factor(in_lambda);
  const auto pushed = transform_factor(in_sigma, log_map());
  for (double l : {-1.5, -0.5, 0.0, 0.8, 2.1})
    CHECK(std::abs(direct.zeta({l}) / pushed.zeta({l}) - 1.0) < 1e-5);
}

TEST_CASE("jeffreys factor rejects singular information at construction") {
  DirectFamily flat;  // the observable never sees the parameter
  flat.label = "flat";
  flat.dim_param = 1;
  flat.param_space = {Interval::whole()};
  flat.support = [](const std::vector<double>&) { return Interval::whole(); };
  flat.log_pdf = [](double x, const std::vector<double>&) {
    return -0.5 * x * x - 0.9189385332046727;
  };
  CHECK_THROWS_AS(jeffreys_factor(flat), SingularInformation);
}

// ----------------------------------------------------------------------------
// Uniform factor
// ----------------------------------------------------------------------------

TEST_CASE("uniform factor is one everywhere and respects translations only") {
  const auto flat = uniform_factor();
  CHECK(flat.zeta({0.3}) == 1.0);
  CHECK(flat.zeta({-7.0}) == 1.0);
  CHECK(uniform_factor(2).dim_param == 2);
  CHECK_THROWS_AS(uniform_factor(0), std::invalid_argument);

  // As a location factor it satisfies the translation functional equation...
  const auto& grp = group_by_label("translation");
  CHECK(factor_functional_residual(flat, grp, {{-1.0}, {0.5}, {2.0}}) < 1e-8);

  // ...but pushing it through lambda = log sigma turns it into e^lambda: the
  // "uniform in sigma" and "uniform in log sigma" prescriptions disagree.
  const auto pushed = transform_factor(flat, log_map());
  CHECK(std::abs(pushed.zeta({0.0}) - 1.0) < 1e-12);
  double breakage = 0.0;
  for (double l : {-1.0, 0.5, 1.0})
    breakage = std::max(breakage, std::abs(pushed.zeta({l}) - 1.0));
  CHECK(breakage > 0.01);
  CHECK(std::abs(pushed.zeta({1.0}) - std::exp(1.0)) < 1e-12);
}

// ----------------------------------------------------------------------------
// Lambda = mu/sigma marginal displays
// ----------------------------------------------------------------------------

TEST_CASE("lambda displays normalize to one on the envelope window") {
  const std::vector<double> data{1.0, 1.0};
  const auto ref = reference_marginal_lambda(data);
  const auto con = consistency_marginal_lambda(data);
  CHECK(std::abs(ref.total_mass() - 1.0) < 1e-6);
  CHECK(std::abs(con.total_mass() - 1.0) < 1e-6);
  // The window covers exactly the region where the Gaussian envelope exceeds
  // the library-wide 1e-12 tail cut.
  const auto grid = lambda_comparison_grid(2);
  CHECK(grid.size() == 801);
  CHECK(std::abs(grid.back() - std::sqrt(-std::log(1e-12))) < 1e-12);
  CHECK(grid.front() == -grid.back());
  // Outside the window the display is identically zero.
  CHECK(con.density(grid.back() + 1.0) == 0.0);
  CHECK(ref.density(grid.front() - 1.0) == 0.0);
}

TEST_CASE("lambda displays depend on the data only through n and r") {
  const auto a = consistency_marginal_lambda({1.0, 1.0});
  const auto b = consistency_marginal_lambda({2.0, 2.0});
  CHECK(max_abs_gap(a, b, lambda_comparison_grid(2)) < 1e-8);
}

TEST_CASE("lambda displays are scale invariant") {
  // x -> 3x preserves r = sum(x)/sqrt(sum(x^2)), hence both displays.
  const auto grid = lambda_comparison_grid(2);
  const auto ca = consistency_marginal_lambda({0.5, 2.0});
  const auto cb = consistency_marginal_lambda({1.5, 6.0});
  CHECK(max_abs_gap(ca, cb, grid) < 1e-7);
  const auto ra = reference_marginal_lambda({0.5, 2.0});
  const auto rb = reference_marginal_lambda({1.5, 6.0});
  CHECK(max_abs_gap(ra, rb, grid) < 1e-7);
}

TEST_CASE("reference display is symmetric for data with zero sum") {
  const auto post = reference_marginal_lambda({1.0, -1.0});
  for (double l : {0.4, 1.3, 2.9, 4.4})
    CHECK(std::abs(post.density(l) - post.density(-l)) < 1e-7);
}

TEST_CASE("display integrands differ by one power of u and the sqrt factor") {
  // Reconstruct both unnormalized displays from the stored representation and
  // pin them against an independent dense-trapezoid quadrature: consistency
  // carries u^(n-2), the reference rule u^(n-1) with 1/sqrt(1 + lambda^2/2).
  const std::vector<double> data{0.3, 1.7, 2.2};
  const int n = 3;
  const double r = (0.3 + 1.7 + 2.2) / std::sqrt(0.3 * 0.3 + 1.7 * 1.7 + 2.2 * 2.2);
  const auto con = consistency_marginal_lambda(data);
  const auto ref = reference_marginal_lambda(data);
  for (double l : {-2.0, 0.7, 3.0}) {
    const double envelope = std::exp(-0.5 * n * l * l);
    const double con_unnorm = std::exp(con.log_density_at(l) + con.log_eta);
    const double con_oracle = envelope * weighted_gauss_oracle(n - 2, r * l);
    CHECK(std::abs(con_unnorm / con_oracle - 1.0) < 1e-6);
    const double ref_unnorm = std::exp(ref.log_density_at(l) + ref.log_eta);
    const double ref_oracle =
        envelope * weighted_gauss_oracle(n - 1, r * l) / std::sqrt(1.0 + 0.5 * l * l);
    CHECK(std::abs(ref_unnorm / ref_oracle - 1.0) < 1e-6);
  }
}

TEST_CASE("joint route reproduces the closed consistency display") {
  const std::vector<double> data{0.3, 1.7, 2.2};
  const auto closed = consistency_marginal_lambda(data);
  const auto via = consistency_marginal_lambda_via_joint(data);
  CHECK(grid_l1(closed, via, lambda_comparison_grid(3)) < 1e-4);
  CHECK(std::abs(via.total_mass() - 1.0) < 1e-6);
}

TEST_CASE("lambda displays validate their data") {
  CHECK_THROWS_AS(consistency_marginal_lambda({1.0}), std::invalid_argument);
  CHECK_THROWS_AS(consistency_marginal_lambda({0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(reference_marginal_lambda({}), std::invalid_argument);
  CHECK_THROWS_AS(lambda_comparison_grid(1), std::invalid_argument);
  CHECK_THROWS_AS(lambda_comparison_grid(4, 1), std::invalid_argument);
}

// ----------------------------------------------------------------------------
// Rule comparison
// ----------------------------------------------------------------------------

TEST_CASE("consistency and reference rules disagree on all-equal data") {
  const auto& fam = base_family("normal");
  const auto grid = lambda_comparison_grid(2);
  const auto cmp = compare_rules("consistency", "reference", fam, {1.0, 1.0}, grid);
  CHECK(cmp.l1_distance > 0.01);
  // No normalizable joint exists for data without two distinct values, so
  // neither side reports a product-rule residual.
  CHECK(!cmp.product_rule_residual_a.has_value());
  CHECK(!cmp.product_rule_residual_b.has_value());
  CHECK(cmp.rule_a == "consistency");
  CHECK(cmp.rule_b == "reference");
  CHECK(cmp.grid.size() == grid.size());
  CHECK(cmp.density_a.size() == grid.size());
}

TEST_CASE("a rule compared against itself is at zero distance") {
  const auto& fam = base_family("normal");
  const auto grid = lambda_comparison_grid(2);
  const auto cmp = compare_rules("consistency", "consistency", fam, {1.0, 1.0}, grid);
  CHECK(cmp.l1_distance < 1e-9);
}

TEST_CASE("jeffreys joint weight fails the product rule where 1/sigma passes") {
  const auto& fam = base_family("normal");
  const auto cmp = compare_rules("jeffreys", "consistency", fam, {0.0, 2.0},
                                 lambda_comparison_grid(2));
  REQUIRE(cmp.product_rule_residual_a.has_value());
  REQUIRE(cmp.product_rule_residual_b.has_value());
  CHECK(*cmp.product_rule_residual_a > 0.01);
  CHECK(*cmp.product_rule_residual_b < 1e-5);
}

TEST_CASE("uniform joint weight fails the product rule on three observations") {
  const auto& fam = base_family("normal");
  const auto cmp = compare_rules("uniform", "consistency", fam, {0.0, 1.0, 2.0},
                                 lambda_comparison_grid(3));
  REQUIRE(cmp.product_rule_residual_a.has_value());
  CHECK(*cmp.product_rule_residual_a > 0.01);
  CHECK(*cmp.product_rule_residual_b < 1e-5);
  CHECK(cmp.l1_distance > 0.01);
}

TEST_CASE("rule comparisons serialize to json") {
  const auto& fam = base_family("normal");
  const auto cmp = compare_rules("consistency", "reference", fam, {1.0, 1.0},
                                 lambda_comparison_grid(2));
  const auto text = cmp.to_json();
  CHECK(text.find("\"rule_a\":\"consistency\"") != std::string::npos);
  CHECK(text.find("\"rule_b\":\"reference\"") != std::string::npos);
  CHECK(text.find("\"product_rule_residual_a\":null") != std::string::npos);
  CHECK(text.find("\"l1_distance\"") != std::string::npos);
  CHECK(text.find("\"grid\"") != std::string::npos);
}

TEST_CASE("rule comparison validates its inputs") {
  const auto& fam = base_family("normal");
  const auto grid = lambda_comparison_grid(2);
  CHECK_THROWS_AS(compare_rules("mystery", "reference", fam, {1.0, 1.0}, grid),
                  std::invalid_argument);
  CHECK_THROWS_AS(compare_rules("consistency", "reference", fam, {1.0, 1.0}, {0.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      compare_rules("consistency", "reference", fam, {1.0, 1.0}, {0.5, 0.5}),
      std::invalid_argument);
  // Closed displays are normal-family-only.
  CHECK_THROWS_AS(
      compare_rules("consistency", "reference", base_family("cauchy"), {1.0, 1.0}, grid),
      std::invalid_argument);
}
