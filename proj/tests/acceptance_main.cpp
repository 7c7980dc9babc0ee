// End-to-end acceptance checks for the library: interval calibration at scale,
// the fiducial identity, closed-form posterior agreement, the product rule,
// rule incompatibility, information-based factors, trivial-locus refusal, and
// the cross-cutting invariance properties.  One PASS/FAIL line per criterion;
// exit status 1 when any fail.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "confactor/calibration.hpp"
#include "confactor/families.hpp"
#include "confactor/invariance.hpp"
#include "confactor/numerics.hpp"
#include "confactor/posterior.hpp"
#include "confactor/rivals.hpp"

using namespace confactor;

namespace {

int failures = 0;

void report(int index, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %d. %s: %s\n", ok ? "PASS" : "FAIL", index, name,
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * i / (n - 1);
  return out;
}

std::vector<double> logspace(double lo, double hi, int n) {
  std::vector<double> out = linspace(std::log(lo), std::log(hi), n);
  for (double& v : out) v = std::exp(v);
  return out;
}

// L1 distance between two densities over a shared grid, each renormalized to
// unit trapezoid mass on that grid first.
double grid_l1(const Posterior& a, const Posterior& b,
               const std::vector<double>& grid) {
  const auto mass = [&grid](const Posterior& p) {
    double m = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
      m += 0.5 * (p.density(grid[i]) + p.density(grid[i + 1])) *
           (grid[i + 1] - grid[i]);
    return m;
  };
  const double ma = mass(a), mb = mass(b);
  double l1 = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double ga = std::abs(a.density(grid[i]) / ma - b.density(grid[i]) / mb);
    const double gb = std::abs(a.density(grid[i + 1]) / ma -
                               b.density(grid[i + 1]) / mb);
    l1 += 0.5 * (ga + gb) * (grid[i + 1] - grid[i]);
  }
  return l1;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// --- 1. Location-family interval calibration at 1e5 trials -----------------

void criterion_1() {
  constexpr double kTol = 0.003;
  constexpr double kBudgetSeconds = 60.0;
  const DirectFamily fam = family_by_label("normal-location");
  const ConsistencyFactor factor = consistency_factor(FactorKind::location);
  CoverageConfig cfg;
  cfg.n_obs = 1;
  cfg.alpha = 0.05;
  cfg.delta = 0.90;
  cfg.trials = 100000;

  auto t0 = std::chrono::steady_clock::now();
  const CalibrationReport fixed = coverage_experiment(
      fam, factor, TruthGenerator::fixed(3.0), cfg, RandomStream(42, 1));
  const double fixed_s = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const CalibrationReport drift = coverage_experiment(
      fam, factor, TruthGenerator::cycle({-5.0, 0.0, 12.0}), cfg,
      RandomStream(42, 2));
  const double drift_s = seconds_since(t0);

  const bool ok = std::abs(fixed.coverage - 0.900) <= kTol &&
                  std::abs(drift.coverage - 0.900) <= kTol &&
                  fixed_s < kBudgetSeconds && drift_s < kBudgetSeconds;
  report(1, "location coverage, fixed and drifting truth", ok,
         fmt("coverage %.5f fixed / %.5f drifting (target 0.900 +- %.3f), "
             "%.1f s / %.1f s (budget %.0f s)",
             fixed.coverage, drift.coverage, kTol, fixed_s, drift_s,
             kBudgetSeconds));
}

// --- 2. Scale-family interval calibration -----------------------------------

void criterion_2() {
  constexpr double kTol = 0.005;
  const DirectFamily fam = family_by_label("exponential-scale");
  CoverageConfig cfg;
  cfg.n_obs = 1;
  cfg.alpha = 0.25;  // central interval for delta = 0.5
  cfg.delta = 0.50;
  cfg.trials = 100000;
  const CalibrationReport rep = coverage_experiment(
      fam, consistency_factor(FactorKind::scale), TruthGenerator::fixed(2.0),
      cfg, RandomStream(42, 3));
  const bool ok = std::abs(rep.coverage - 0.500) <= kTol;
  report(2, "scale coverage at delta = 0.5", ok,
         fmt("coverage %.5f (target 0.500 +- %.3f)", rep.coverage, kTol));
}

// --- 3. Fiducial identity on 512-node grids ---------------------------------

void criterion_3() {
  constexpr double kTol = 1e-6;
  const double r_loc =
      fiducial_residual(family_by_label("normal-location"),
                        consistency_factor(FactorKind::location), 0.0,
                        linspace(-6.0, 6.0, 512));
  const double r_scale =
      fiducial_residual(family_by_label("exponential-scale"),
                        consistency_factor(FactorKind::scale), 1.0,
                        logspace(0.05, 50.0, 512));
  const bool ok = r_loc < kTol && r_scale < kTol;
  report(3, "fiducial identity", ok,
         fmt("residual %.2e location / %.2e scale (tolerance %.0e)", r_loc,
             r_scale, kTol));
}

// --- 4. Closed-form posterior for the exponential scale ---------------------

void criterion_4() {
  constexpr double kTol = 1e-7;
  const Posterior post =
      build_posterior(family_by_label("exponential-scale"),
                      consistency_factor(FactorKind::scale), {1.0});
  double worst = 0.0;
  for (double s : logspace(0.05, 50.0, 512)) {
    const double oracle = std::exp(-1.0 / s) / (s * s);
    worst = std::max(worst, std::abs(post.density(s) - oracle));
  }
  const double eta_gap = std::abs(std::exp(post.log_eta) - 1.0);
  const bool ok = worst < kTol && eta_gap < kTol;
  report(4, "closed-form scale posterior", ok,
         fmt("max density gap %.2e on [0.05, 50], |eta - 1| = %.2e "
             "(tolerance %.0e)",
             worst, eta_gap, kTol));
}

// --- 5. Product rule for the joint factor -----------------------------------

void criterion_5() {
  constexpr double kPassTol = 1e-5;
  constexpr double kViolation = 0.01;
  const LocationScaleFamily fam = base_family("normal");
  const std::vector<double> data = {0.0, 2.0};
  const double good = product_rule_residual(
      fam, data, consistency_factor(FactorKind::joint_location_scale));
  ConsistencyFactor wrong;
  wrong.kind = FactorKind::custom;
  wrong.label = "inverse-sigma-squared";
  wrong.dim_param = 2;
  wrong.zeta = [](const std::vector<double>& t) { return 1.0 / (t[1] * t[1]); };
  const double bad = product_rule_residual(fam, data, wrong);
  const bool ok = good < kPassTol && bad > kViolation;
  report(5, "product rule", ok,
         fmt("residual %.2e with 1/sigma (< %.0e), %.3f with 1/sigma^2 "
             "(> %.2f)",
             good, kPassTol, bad, kViolation));
}

// --- 6. Incompatible marginal rules and route agreement ---------------------

void criterion_6() {
  constexpr double kSeparation = 0.01;
  constexpr double kRouteTol = 1e-4;
  const Posterior cons = consistency_marginal_lambda({1.0, 1.0});
  const Posterior ref = reference_marginal_lambda({1.0, 1.0});
  const double l1 = grid_l1(cons, ref, lambda_comparison_grid(2));

  // Distinct observations so the joint route is normalizable.
  const std::vector<double> data = {0.3, 1.7, 2.2};
  const double route = grid_l1(consistency_marginal_lambda(data),
                               consistency_marginal_lambda_via_joint(data),
                               lambda_comparison_grid(3));
  const bool ok = l1 > kSeparation && route <= kRouteTol;
  report(6, "rule incompatibility and route agreement", ok,
         fmt("L1(consistency, reference) = %.4f (> %.2f); "
             "closed vs joint route L1 = %.2e (<= %.0e)",
             l1, kSeparation, route, kRouteTol));
}

// --- 7. Information-based factors for the three normal cases ---------------

void criterion_7() {
  constexpr double kRelTol = 1e-4;
  const auto rel_gap = [](double value, double expected) {
    return std::abs(value - expected) / expected;
  };
  const ConsistencyFactor loc =
      jeffreys_factor(family_by_label("normal-location"));
  const ConsistencyFactor scale = jeffreys_factor(family_by_label("normal-scale"));
  const ConsistencyFactor joint = jeffreys_factor(base_family("normal").as_direct());
  // Constant in mu; proportional to 1/sigma; proportional to 1/sigma^2 (the
  // latter checked at different mu as well).
  const double g_loc = rel_gap(loc.zeta({-2.0}) / loc.zeta({5.0}), 1.0);
  const double g_scale = rel_gap(scale.zeta({1.0}) / scale.zeta({2.0}), 2.0);
  const double g_joint = rel_gap(joint.zeta({0.0, 1.0}) / joint.zeta({3.0, 2.0}), 4.0);
  const bool ok = g_loc < kRelTol && g_scale < kRelTol && g_joint < kRelTol;
  report(7, "information-based factor ratios", ok,
         fmt("relative gaps %.2e const / %.2e 1-over-sigma / %.2e "
             "1-over-sigma-sq (tolerance %.0e)",
             g_loc, g_scale, g_joint, kRelTol));
}

// --- 8. Trivial-locus refusal ------------------------------------------------

void criterion_8() {
  const DirectFamily fam = family_by_label("exponential-scale");
  const ConsistencyFactor factor = consistency_factor(FactorKind::scale);
  bool refused = false;
  try {
    build_posterior(fam, factor, {0.0});
  } catch (const TrivialLocusDatum&) {
    refused = true;
  }
  bool tiny_ok = false;
  double tiny_mass = 0.0;
  try {
    const Posterior post = build_posterior(fam, factor, {1e-6});
    tiny_mass = post.total_mass();
    tiny_ok = std::abs(tiny_mass - 1.0) < 1e-6;
  } catch (const Error&) {
  }
  report(8, "trivial-locus refusal", refused && tiny_ok,
         fmt("x = 0 %s; x = 1e-6 mass %.9f",
             refused ? "refused" : "NOT refused", tiny_mass));
}

// --- 9. Cross-cutting property roll-up --------------------------------------

void criterion_9() {
  const DirectFamily nloc = family_by_label("normal-location");
  const DirectFamily escale = family_by_label("exponential-scale");
  const ConsistencyFactor floc = consistency_factor(FactorKind::location);
  const ConsistencyFactor fscale = consistency_factor(FactorKind::scale);

  // Sequential updating equals the one-shot build.
  constexpr double kSeqTol = 1e-6;
  const Posterior one_shot = build_posterior(nloc, floc, {0.5, -0.2});
  const Posterior seq =
      sequential_update(build_posterior(nloc, floc, {0.5}), nloc, -0.2);
  double seq_gap = 0.0;
  for (double m : linspace(one_shot.quantile(1e-3), one_shot.quantile(1.0 - 1e-3), 201))
    seq_gap = std::max(seq_gap, std::abs(one_shot.density(m) - seq.density(m)));

  // Reparameterization covariance: the scale weight pushed through log
  // coordinates is the constant weight, and the pushed posterior matches the
  // closed form in the new coordinates.
  constexpr double kCovTol = 1e-6;
  MonotoneMap log_map;
  log_map.f = [](double s) { return std::log(s); };
  log_map.f_inv = [](double t) { return std::exp(t); };
  log_map.df = [](double s) { return 1.0 / s; };
  const ConsistencyFactor pushed_factor = transform_factor(fscale, log_map);
  double factor_gap = 0.0;
  for (double t : {-2.0, 0.0, 3.0})
    factor_gap = std::max(factor_gap, std::abs(pushed_factor.zeta({t}) - 1.0));
  const Posterior pushed =
      transform_posterior(build_posterior(escale, fscale, {1.0}), log_map);
  double cov_gap = factor_gap;
  for (double t : linspace(-3.0, 6.0, 301)) {
    const double oracle = std::exp(-t - std::exp(-t));
    cov_gap = std::max(cov_gap, std::abs(pushed.density(t) - oracle));
  }

  // Rescaling the factor by a constant leaves the posterior untouched and
  // multiplies the normalization integral.
  constexpr double kRescaleTol = 1e-9;
  ConsistencyFactor tripled;
  tripled.kind = FactorKind::custom;
  tripled.label = "three-over-sigma";
  tripled.dim_param = 1;
  tripled.zeta = [](const std::vector<double>& t) { return 3.0 / t[0]; };
  const Posterior base = build_posterior(escale, fscale, {1.0});
  const Posterior scaled = build_posterior(escale, tripled, {1.0});
  double rescale_gap =
      std::abs((scaled.log_eta - base.log_eta) - std::log(3.0));
  for (double s : logspace(0.1, 20.0, 201))
    rescale_gap = std::max(rescale_gap, std::abs(base.density(s) - scaled.density(s)));

  // Invariant families reduce to pure location form in the s coordinates.
  constexpr double kHTol = 1e-8;
  const double h_scale = check_H_form(
      escale, reduction_maps(group_by_label("scaling"), escale),
      logspace(0.05, 20.0, 41));
  const DirectFamily lloc = family_by_label("logistic-location");
  const double h_loc = check_H_form(
      lloc, reduction_maps(group_by_label("translation"), lloc),
      linspace(-6.0, 6.0, 41));
  const double h_gap = std::max(h_scale, h_loc);

  // Predictive probability integral transform is uniform at the 1% level.
  const std::uint64_t pit_trials = 10000;
  const double ks = predictive_pit_check(nloc, floc, 0.7, pit_trials,
                                         RandomStream(20240917, 9));
  const double ks_critical = 1.63 / std::sqrt(double(pit_trials));

  const bool ok = seq_gap < kSeqTol && cov_gap < kCovTol &&
                  rescale_gap < kRescaleTol && h_gap < kHTol && ks < ks_critical;
  report(9, "property roll-up", ok,
         fmt("sequential %.2e (< %.0e); covariance %.2e (< %.0e); rescale "
             "%.2e (< %.0e); location-form %.2e (< %.0e); PIT KS %.4f "
             "(< %.4f)",
             seq_gap, kSeqTol, cov_gap, kCovTol, rescale_gap, kRescaleTol,
             h_gap, kHTol, ks, ks_critical));
}

}  // namespace

int main() {
  struct Entry {
    int index;
    const char* name;
    void (*run)();
  };
  const Entry entries[] = {
      {1, "location coverage, fixed and drifting truth", criterion_1},
      {2, "scale coverage at delta = 0.5", criterion_2},
      {3, "fiducial identity", criterion_3},
      {4, "closed-form scale posterior", criterion_4},
      {5, "product rule", criterion_5},
      {6, "rule incompatibility and route agreement", criterion_6},
      {7, "information-based factor ratios", criterion_7},
      {8, "trivial-locus refusal", criterion_8},
      {9, "property roll-up", criterion_9},
  };
  for (const Entry& e : entries) {
    try {
      e.run();
    } catch (const std::exception& ex) {
      report(e.index, e.name, false, fmt("unexpected error: %s", ex.what()));
    }
  }
  std::printf("acceptance: %d/9 criteria passed\n",
              9 - failures);
  return failures == 0 ? 0 : 1;
}
