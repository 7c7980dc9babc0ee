#include "confactor/calibration.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace confactor {

// ----------------------------------------------------------------------------
// Confidence intervals
// ----------------------------------------------------------------------------
ConfidenceInterval confidence_interval(const Posterior& post, double alpha,
                                       double delta) {
  if (!(delta >= 0.0 && delta <= 1.0))
    throw std::invalid_argument("confidence_interval: delta must lie in [0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0 - delta))
    throw std::invalid_argument(
        "confidence_interval: alpha must lie in [0, 1 - delta]");

  ConfidenceInterval ci;
  ci.alpha = alpha;
  ci.delta = delta;
  ci.theta1 = (alpha == 0.0) ? post.nodes.front() : post.quantile(alpha);
  const double p2 = alpha + delta;
  ci.theta2 = (p2 >= 1.0) ? post.nodes.back() : post.quantile(p2);
  return ci;
}

// ----------------------------------------------------------------------------
// TruthGenerator
// ----------------------------------------------------------------------------
TruthGenerator TruthGenerator::fixed(double value) {
  TruthGenerator g;
  g.fn_ = [value](std::uint64_t, RandomStream&) { return value; };
  g.label_ = "fixed(" + nlohmann::json(value).dump() + ")";
  return g;
}

TruthGenerator TruthGenerator::cycle(std::vector<double> values) {
  if (values.empty())
    throw std::invalid_argument("TruthGenerator::cycle: need at least one value");
  TruthGenerator g;
  g.label_ = "cycle(" + nlohmann::json(values).dump() + ")";
  g.fn_ = [values = std::move(values)](std::uint64_t t, RandomStream&) {
    return values[t % values.size()];
  };
  return g;
}

TruthGenerator TruthGenerator::stream(std::function<double(RandomStream&)> draw,
                                      std::string label) {
  if (!draw)
    throw std::invalid_argument("TruthGenerator::stream: need a draw function");
  TruthGenerator g;
  g.fn_ = [draw = std::move(draw)](std::uint64_t, RandomStream& rs) {
    return draw(rs);
  };
  g.label_ = std::move(label);
  return g;
}

double TruthGenerator::operator()(std::uint64_t trial_index, RandomStream& rs) const {
  if (!fn_) throw Error("TruthGenerator: default-constructed");
  return fn_(trial_index, rs);
}

// ----------------------------------------------------------------------------
// CalibrationReport serialization
// ----------------------------------------------------------------------------
std::string CalibrationReport::to_json() const {
  nlohmann::json j;
  j["trials"] = trials;
  j["covered"] = covered;
  j["failed_trials"] = failed_trials;
  j["coverage"] = coverage;
  j["target_delta"] = target_delta;
  j["std_error"] = std_error;
  j["config"] = {{"family", family_label}, {"factor", factor_label},
                 {"truth", truth_label},   {"n_obs", n_obs},
                 {"alpha", alpha},         {"seed", seed},
                 {"stream_id", stream_id}};
  return j.dump();
}

std::string CalibrationReport::to_csv_row() const {
  char buf[192];
  std::snprintf(buf, sizeof buf, "%llu,%llu,%.17g,%.17g,%.17g,%llu",
                static_cast<unsigned long long>(trials),
                static_cast<unsigned long long>(covered), coverage, target_delta,
                std_error, static_cast<unsigned long long>(seed));
  return buf;
}

// ----------------------------------------------------------------------------
// Coverage experiments
// ----------------------------------------------------------------------------
BuildOptions lean_build_options() {
  BuildOptions o;
  o.grid_nodes = 192;
  o.coarse_scan = 192;
  o.fine_scan = 96;
  o.place_lattice = 128;
  o.eta_scan = 33;
  return o;
}

namespace {

struct TrialOutcome {
  bool covered = false;
  bool failed = false;
  std::string error;
};

TrialOutcome run_coverage_trial(const DirectFamily& fam,
                                const ConsistencyFactor& factor,
                                const TruthGenerator& truth,
                                const CoverageConfig& cfg,
                                const RandomStream& base, std::uint64_t t) {
  TrialOutcome out;
  try {
    RandomStream rs = base.derived(cfg.trials, t);
    const double theta = truth(t, rs);
    std::vector<double> data(static_cast<std::size_t>(cfg.n_obs));
    for (double& x : data) x = sample(fam, {theta}, rs);
    const Posterior post = build_posterior(fam, factor, data, cfg.build);
    const ConfidenceInterval ci = confidence_interval(post, cfg.alpha, cfg.delta);
    out.covered = (theta > ci.theta1 && theta < ci.theta2);
  } catch (const Error& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

void validate_coverage_config(const DirectFamily& fam, const CoverageConfig& cfg) {
  if (fam.dim_param != 1)
    throw std::invalid_argument("coverage_experiment: scalar-parameter family required");
  if (cfg.trials < 1)
    throw std::invalid_argument("coverage_experiment: need at least one trial");
  if (cfg.n_obs < 1)
    throw std::invalid_argument("coverage_experiment: need at least one observation");
  if (!(cfg.delta >= 0.0 && cfg.delta <= 1.0) ||
      !(cfg.alpha >= 0.0 && cfg.alpha <= 1.0 - cfg.delta))
    throw std::invalid_argument(
        "coverage_experiment: need delta in [0,1] and alpha in [0, 1 - delta]");
}

CalibrationReport assemble_report(const DirectFamily& fam,
                                  const ConsistencyFactor& factor,
                                  const TruthGenerator& truth,
                                  const CoverageConfig& cfg,
                                  const RandomStream& base, std::uint64_t covered,
                                  std::uint64_t failed) {
  CalibrationReport r;
  r.trials = cfg.trials;
  r.covered = covered;
  r.failed_trials = failed;
  r.coverage = static_cast<double>(covered) / static_cast<double>(cfg.trials);
  r.target_delta = cfg.delta;
  r.std_error = std::sqrt(cfg.delta * (1.0 - cfg.delta) /
                          static_cast<double>(cfg.trials));
  r.family_label = fam.label;
  r.factor_label = factor.label;
  r.truth_label = truth.label();
  r.n_obs = cfg.n_obs;
  r.alpha = cfg.alpha;
  r.seed = base.seed();
  r.stream_id = base.stream_id();
  return r;
}

}  // namespace

CalibrationReport coverage_experiment_serial(const DirectFamily& fam,
                                             const ConsistencyFactor& factor,
                                             const TruthGenerator& truth,
                                             const CoverageConfig& cfg,
                                             const RandomStream& base) {
  validate_coverage_config(fam, cfg);
  std::uint64_t covered = 0, failed = 0;
  for (std::uint64_t t = 0; t < cfg.trials; ++t) {
    const TrialOutcome out = run_coverage_trial(fam, factor, truth, cfg, base, t);
    if (out.failed) {
      if (!cfg.record_failures)
        throw TrialFailed("coverage trial " + std::to_string(t) + ": " + out.error);
      ++failed;
    } else if (out.covered) {
      ++covered;
    }
  }
  return assemble_report(fam, factor, truth, cfg, base, covered, failed);
}

CalibrationReport coverage_experiment(const DirectFamily& fam,
                                      const ConsistencyFactor& factor,
                                      const TruthGenerator& truth,
                                      const CoverageConfig& cfg,
                                      const RandomStream& base) {
#ifndef _OPENMP
  return coverage_experiment_serial(fam, factor, truth, cfg, base);
#else
  validate_coverage_config(fam, cfg);
  std::uint64_t covered = 0, failed = 0;
  std::atomic<bool> abort_flag{false};
  std::string first_error;
  const long long n = static_cast<long long>(cfg.trials);
  const int nt = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 16) num_threads(nt) \
    reduction(+ : covered, failed)
  for (long long t = 0; t < n; ++t) {
    if (abort_flag.load(std::memory_order_relaxed)) continue;
    const TrialOutcome out = run_coverage_trial(fam, factor, truth, cfg, base,
                                                static_cast<std::uint64_t>(t));
    if (out.failed) {
      if (!cfg.record_failures) {
#pragma omp critical(confactor_coverage_error)
        {
          if (!abort_flag.load(std::memory_order_relaxed)) {
            first_error = "coverage trial " + std::to_string(t) + ": " + out.error;
            abort_flag.store(true, std::memory_order_relaxed);
          }
        }
      } else {
        ++failed;
      }
    } else if (out.covered) {
      ++covered;
    }
  }
  if (abort_flag.load()) throw TrialFailed(first_error);
  return assemble_report(fam, factor, truth, cfg, base, covered, failed);
#endif
}

// ----------------------------------------------------------------------------
// Fiducial identity
// ----------------------------------------------------------------------------
double fiducial_residual(const Posterior& post, const DirectFamily& fam,
                         double x, const std::vector<double>& lambda_grid) {
  if (fam.dim_param != 1)
    throw std::invalid_argument("fiducial_residual: scalar-parameter family required");
  if (lambda_grid.size() < 2)
    throw std::invalid_argument("fiducial_residual: need at least two grid points");

  std::vector<double> F(lambda_grid.size());
  for (std::size_t i = 0; i < lambda_grid.size(); ++i)
    F[i] = fam.cdf(x, {lambda_grid[i]});
  const bool increasing = F[1] > F[0];
  for (std::size_t i = 1; i < F.size(); ++i)
    if (!(increasing ? F[i] > F[i - 1] : F[i] < F[i - 1]))
      throw NonMonotoneInParameter(
          "fiducial_residual: cdf is not strictly monotone in the parameter");

  double worst = 0.0;
  for (const double lam : lambda_grid) {
    const double deriv =
        central_diff([&fam, x](double th) { return fam.cdf(x, {th}); }, lam);
    worst = std::max(worst, std::abs(post.density(lam) - std::abs(deriv)));
  }
  return worst;
}

double fiducial_residual(const DirectFamily& fam, const ConsistencyFactor& factor,
                         double x, const std::vector<double>& lambda_grid) {
  const Posterior post = build_posterior(fam, factor, {x});
  return fiducial_residual(post, fam, x, lambda_grid);
}

// ----------------------------------------------------------------------------
// Predictive probability integral transform
// ----------------------------------------------------------------------------
namespace {

// Trapezoid predictive cdf over the stored grid.  The grid holds all but
// ~1e-8 of the posterior mass and the interpolated density is ~1e-6 accurate,
// both far below the KS comparison scale of 1.63/sqrt(N).
double grid_predictive_cdf(const Posterior& post, const DirectFamily& fam,
                           double x) {
  const std::vector<double>& xs = post.nodes;
  double num = 0.0, den = 0.0;
  double d_prev = std::exp(post.log_density.front());
  double f_prev = fam.cdf(x, {xs.front()});
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const double d = std::exp(post.log_density[i]);
    const double f = fam.cdf(x, {xs[i]});
    const double w = 0.5 * (xs[i] - xs[i - 1]);
    num += w * (d_prev * f_prev + d * f);
    den += w * (d_prev + d);
    d_prev = d;
    f_prev = f;
  }
  return num / den;
}

}  // namespace

std::vector<double> predictive_pit_samples(const DirectFamily& fam,
                                           const ConsistencyFactor& factor,
                                           double theta_true, std::uint64_t trials,
                                           const RandomStream& base,
                                           const PitConfig& cfg) {
  if (fam.dim_param != 1)
    throw std::invalid_argument("predictive_pit_samples: scalar-parameter family required");
  if (trials < 1)
    throw std::invalid_argument("predictive_pit_samples: need at least one trial");

  std::vector<double> u(static_cast<std::size_t>(trials), 0.0);
  std::atomic<bool> abort_flag{false};
  std::string first_error;
  const long long n = static_cast<long long>(trials);
#ifdef _OPENMP
  const int nt = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 16) num_threads(nt)
#endif
  for (long long t = 0; t < n; ++t) {
    if (abort_flag.load(std::memory_order_relaxed)) continue;
    try {
      RandomStream rs = base.derived(trials, static_cast<std::uint64_t>(t));
      const double x1 = sample(fam, {theta_true}, rs);
      const Posterior post = build_posterior(fam, factor, {x1}, cfg.build);
      const double x2 = sample(fam, {theta_true}, rs);
      u[static_cast<std::size_t>(t)] = grid_predictive_cdf(post, fam, x2);
    } catch (const Error& e) {
#ifdef _OPENMP
#pragma omp critical(confactor_pit_error)
#endif
      {
        if (!abort_flag.load(std::memory_order_relaxed)) {
          first_error = "PIT trial " + std::to_string(t) + ": " + e.what();
          abort_flag.store(true, std::memory_order_relaxed);
        }
      }
    }
  }
  if (abort_flag.load()) throw TrialFailed(first_error);
  return u;
}

double predictive_pit_check(const DirectFamily& fam, const ConsistencyFactor& factor,
                            double theta_true, std::uint64_t trials,
                            const RandomStream& base, const PitConfig& cfg) {
  return ks_uniform_statistic(
      predictive_pit_samples(fam, factor, theta_true, trials, base, cfg));
}

double ks_uniform_statistic(std::vector<double> values) {
  if (values.empty())
    throw std::invalid_argument("ks_uniform_statistic: need at least one value");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(values[i] - lo, hi - values[i]));
  }
  return d;
}

}  // namespace confactor
