#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "confactor/calibration.hpp"
#include "confactor/families.hpp"
#include "confactor/invariance.hpp"
#include "confactor/posterior.hpp"
#include "confactor/rivals.hpp"

namespace confactor::cli {

namespace {

// ----------------------------------------------------------------------------
// Shared resolution helpers
// ----------------------------------------------------------------------------

DirectFamily resolve_family(const ExperimentConfig& cfg) {
  return family_by_label(cfg.family, cfg.pin);
}

// Custom table factors: "custom:t1=z1,t2=z2,...".  log zeta is interpolated
// linearly with end-slope extrapolation, against log theta when every theta
// is positive (power laws such as 1/sigma^2 are then exact from two rows),
// against theta otherwise (constants and exponentials exact).
ConsistencyFactor table_factor(const std::string& spec) {
  std::vector<double> thetas, log_zetas;
  std::istringstream rows(spec.substr(std::string("custom:").size()));
  std::string pair;
  while (std::getline(rows, pair, ',')) {
    const auto eq = pair.find('=');
    thetas.push_back(std::strtod(pair.c_str(), nullptr));
    log_zetas.push_back(std::log(std::strtod(pair.c_str() + eq + 1, nullptr)));
  }
  const bool log_x =
      std::all_of(thetas.begin(), thetas.end(), [](double t) { return t > 0.0; });

  ConsistencyFactor out;
  out.kind = FactorKind::custom;
  out.label = "custom-table";
  out.dim_param = 1;
  out.zeta = [thetas, log_zetas, log_x](const std::vector<double>& th) {
    double u = th[0];
    if (log_x) {
      if (!(u > 0.0)) return 0.0;
      u = std::log(u);
    }
    std::vector<double> us(thetas.size());
    for (std::size_t i = 0; i < thetas.size(); ++i)
      us[i] = log_x ? std::log(thetas[i]) : thetas[i];
    double w;
    if (us.size() == 1) {
      w = log_zetas[0];
    } else {
      std::size_t k = 0;  // segment whose slope extends beyond the table ends
      while (k + 2 < us.size() && u > us[k + 1]) ++k;
      const double slope = (log_zetas[k + 1] - log_zetas[k]) / (us[k + 1] - us[k]);
      w = log_zetas[k] + slope * (u - us[k]);
    }
    return std::exp(w);
  };
  return out;
}

ConsistencyFactor resolve_factor(const ExperimentConfig& cfg, const DirectFamily& fam) {
  std::string label = cfg.factor;
  if (label.empty()) {
    // Family default: the factor of the family's own invariance group.
    if (fam.group_label == "translation")
      label = "location";
    else if (fam.group_label == "scaling")
      label = "scale";
    else if (fam.group_label == "affine")
      label = "joint-location-scale";
    else
      throw ConfigInvalid({"factor: family '" + fam.label +
                           "' has no default factor; set one explicitly"});
  }
  if (label == "location") return consistency_factor(FactorKind::location);
  if (label == "scale") return consistency_factor(FactorKind::scale);
  if (label == "joint-location-scale")
    return consistency_factor(FactorKind::joint_location_scale);
  if (label == "jeffreys") return jeffreys_factor(fam);
  if (label == "uniform") return uniform_factor(fam.dim_param);
  return table_factor(label);  // validated custom:<table>
}

TruthGenerator make_truth(const ExperimentConfig& cfg) {
  if (cfg.generator) {
    const GeneratorSpec& g = *cfg.generator;
    if (g.kind == "fixed") return TruthGenerator::fixed(g.value);
    if (g.kind == "cycle") return TruthGenerator::cycle(g.values);
    const double lo = g.lo, hi = g.hi;
    return TruthGenerator::stream(
        [lo, hi](RandomStream& rs) { return lo + (hi - lo) * rs.next_canonical(); },
        "uniform(" + csv_cell(lo) + "," + csv_cell(hi) + ")");
  }
  if (cfg.data.size() == 1) return TruthGenerator::fixed(cfg.data[0]);
  return TruthGenerator::cycle(cfg.data);
}

double fixed_truth_value(const ExperimentConfig& cfg) {
  return cfg.generator ? cfg.generator->value : cfg.data[0];
}

double interior_point(const Interval& sp, double want) {
  if (sp.contains(want)) return want;
  if (sp.finite()) return 0.5 * (sp.lo + sp.hi);
  if (sp.lo_finite()) return sp.lo + 1.0;
  if (sp.hi_finite()) return sp.hi - 1.0;
  return 0.0;
}

std::vector<double> linear_nodes(double lo, double hi, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1.0);
  return g;
}

// Display nodes over the central quantile band (all but 2e-4 of the mass);
// the far tails of the stored window can sit where the family cdf saturates
// in floating point, which would defeat per-node finite differences.
// Geometric spacing against a finite lower endpoint of the parameter space
// (scale-type spaces), linear otherwise.
std::vector<double> parameter_display_nodes(const Posterior& post, int n) {
  const double lo = post.quantile(1e-4), hi = post.quantile(1.0 - 1e-4);
  const Interval& sp = post.param_space;
  if (sp.lo_finite() && !sp.hi_finite() && lo > sp.lo) {
    std::vector<double> g(static_cast<std::size_t>(n));
    const double la = std::log(lo - sp.lo), lb = std::log(hi - sp.lo);
    for (int i = 0; i < n; ++i)
      g[static_cast<std::size_t>(i)] = sp.lo + std::exp(la + (lb - la) * i / (n - 1.0));
    return g;
  }
  return linear_nodes(lo, hi, n);
}

// ----------------------------------------------------------------------------
// Command implementations.  Each returns the result document, the CSV text,
// and an optional chart.
// ----------------------------------------------------------------------------

struct CommandOutput {
  nlohmann::json result;
  std::string csv;
  std::optional<std::string> svg;
};

CommandOutput run_posterior(const ExperimentConfig& cfg) {
  const DirectFamily fam = resolve_family(cfg);
  const ConsistencyFactor factor = resolve_factor(cfg, fam);
  const Posterior post = build_posterior(fam, factor, cfg.data);

  CommandOutput out;
  out.result = nlohmann::json::parse(post.to_json());
  nlohmann::json summary;
  summary["total_mass"] = post.total_mass();
  nlohmann::json at_data = nlohmann::json::array();
  for (double x : cfg.data) at_data.push_back(post.density(x));
  summary["density_at_data"] = at_data;
  summary["quantiles"] = {{"p05", post.quantile(0.05)},
                          {"p25", post.quantile(0.25)},
                          {"p50", post.quantile(0.50)},
                          {"p75", post.quantile(0.75)},
                          {"p95", post.quantile(0.95)}};
  out.result["summary"] = summary;

  std::vector<std::vector<double>> rows;
  rows.reserve(post.nodes.size());
  for (double t : post.nodes) rows.push_back({t, post.density(t), post.cdf(t)});
  out.csv = csv_table_numeric({"theta", "density", "cdf"}, rows);

  Series curve{"posterior", post.nodes, {}, false};
  for (double t : post.nodes) curve.ys.push_back(post.density(t));
  out.svg = svg_chart("Posterior density: " + fam.label + " / " + factor.label,
                      "theta", "density", {curve});
  return out;
}

CommandOutput run_coverage(const ExperimentConfig& cfg) {
  const DirectFamily fam = resolve_family(cfg);
  const ConsistencyFactor factor = resolve_factor(cfg, fam);
  const TruthGenerator truth = make_truth(cfg);

  CoverageConfig cc;
  cc.n_obs = cfg.n_obs;
  cc.alpha = cfg.alpha;
  cc.delta = cfg.delta;
  cc.trials = cfg.trials;
  cc.record_failures = true;  // exploratory mode: count and skip failed trials
  cc.threads = cfg.jobs;
  const CalibrationReport report =
      coverage_experiment(fam, factor, truth, cc, RandomStream(cfg.seed, cfg.stream_id));
  if (report.failed_trials > 0)
    log(LogLevel::warn,
        std::to_string(report.failed_trials) + " of " + std::to_string(report.trials) +
            " trials failed and were skipped");

  CommandOutput out;
  out.result = nlohmann::json::parse(report.to_json());
  out.csv = "trials,covered,coverage,target_delta,std_error,seed\n" +
            report.to_csv_row() + "\n";

  // Coverage against probability content: the diagonal is perfect calibration.
  Series diagonal{"calibrated", {0.0, 1.0}, {0.0, 1.0}, false};
  Series point{"observed", {report.target_delta}, {report.coverage}, true};
  out.svg = svg_chart("Coverage: " + fam.label + " / " + factor.label,
                      "probability content", "coverage", {diagonal, point});
  return out;
}

CommandOutput run_fiducial(const ExperimentConfig& cfg) {
  const DirectFamily fam = resolve_family(cfg);
  const ConsistencyFactor factor = resolve_factor(cfg, fam);
  const double x = cfg.data[0];
  const Posterior post = build_posterior(fam, factor, {x});
  const std::vector<double> grid = parameter_display_nodes(post, 512);
  const double residual = fiducial_residual(post, fam, x, grid);

  CommandOutput out;
  out.result["family"] = fam.label;
  out.result["factor"] = factor.label;
  out.result["x"] = x;
  out.result["residual"] = residual;
  out.result["grid"] = {{"nodes", grid.size()}, {"lo", grid.front()}, {"hi", grid.back()}};

  std::vector<std::vector<double>> rows;
  Series dens{"posterior density", grid, {}, false};
  Series slope{"|d cdf / d theta|", grid, {}, true};
  rows.reserve(grid.size());
  for (double l : grid) {
    const double d = post.density(l);
    const double s =
        std::abs(central_diff([&fam, x](double t) { return fam.cdf(x, {t}); }, l));
    rows.push_back({l, d, s, std::abs(d - s)});
    dens.ys.push_back(d);
    slope.ys.push_back(s);
  }
  out.csv = csv_table_numeric({"theta", "density", "cdf_slope", "abs_gap"}, rows);
  out.svg = svg_chart("Fiducial identity: " + fam.label, "theta", "density",
                      {dens, slope});
  return out;
}

CommandOutput run_compare(const ExperimentConfig& cfg) {
  const LocationScaleFamily& fam = base_family(cfg.family);
  const std::vector<double> grid = lambda_comparison_grid(cfg.data.size());
  const RuleComparison cmp = compare_rules(cfg.rule_a, cfg.rule_b, fam, cfg.data, grid);

  CommandOutput out;
  out.result = nlohmann::json::parse(cmp.to_json());

  std::vector<std::vector<double>> rows;
  rows.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    rows.push_back({grid[i], cmp.density_a[i], cmp.density_b[i]});
  out.csv = csv_table_numeric({"lambda", cfg.rule_a, cfg.rule_b}, rows);

  out.svg = svg_chart("Rule comparison on lambda = mu/sigma", "lambda", "density",
                      {{cfg.rule_a, grid, cmp.density_a, false},
                       {cfg.rule_b, grid, cmp.density_b, false}});
  return out;
}

CommandOutput run_pit(const ExperimentConfig& cfg) {
  const DirectFamily fam = resolve_family(cfg);
  const ConsistencyFactor factor = resolve_factor(cfg, fam);
  const double theta_true = fixed_truth_value(cfg);
  PitConfig pc;
  pc.threads = cfg.jobs;
  const std::vector<double> us = predictive_pit_samples(
      fam, factor, theta_true, cfg.trials, RandomStream(cfg.seed, cfg.stream_id), pc);
  const double ks = ks_uniform_statistic(us);
  const double critical = 1.63 / std::sqrt(static_cast<double>(us.size()));

  CommandOutput out;
  out.result["family"] = fam.label;
  out.result["factor"] = factor.label;
  out.result["theta_true"] = theta_true;
  out.result["trials"] = us.size();
  out.result["ks_statistic"] = ks;
  out.result["critical_value_1pct"] = critical;
  out.result["uniform_ok"] = ks < critical;

  std::vector<std::vector<double>> rows;
  rows.reserve(us.size());
  for (std::size_t i = 0; i < us.size(); ++i)
    rows.push_back({static_cast<double>(i), us[i]});
  out.csv = csv_table_numeric({"trial", "pit"}, rows);

  std::vector<double> sorted(us);
  std::sort(sorted.begin(), sorted.end());
  Series ecdf{"PIT empirical cdf", sorted, {}, false};
  for (std::size_t i = 0; i < sorted.size(); ++i)
    ecdf.ys.push_back((static_cast<double>(i) + 1.0) / static_cast<double>(sorted.size()));
  Series diagonal{"uniform", {0.0, 1.0}, {0.0, 1.0}, false};
  out.svg = svg_chart("Predictive PIT: " + fam.label + " / " + factor.label, "u",
                      "F(u)", {diagonal, ecdf});
  return out;
}

CommandOutput run_reduce(const ExperimentConfig& cfg) {
  const DirectFamily fam = resolve_family(cfg);
  const std::string group_label = cfg.group ? *cfg.group : fam.group_label;
  if (group_label.empty())
    throw ConfigInvalid({"group: family '" + fam.label +
                         "' carries no invariance group; set one explicitly"});
  const GroupAction& grp = group_by_label(group_label);
  const ReductionMaps maps = reduction_maps(grp, fam);

  const double theta_ref = interior_point(fam.param_space[0], 1.0);
  const std::vector<double> theta{theta_ref};
  const std::vector<double> x_nodes =
      linear_nodes(fam.quantile(0.02, theta), fam.quantile(0.98, theta), 65);
  const Interval& sp = fam.param_space[0];
  std::vector<double> theta_nodes;
  if (sp.lo_finite() && !sp.hi_finite()) {
    theta_nodes.resize(65);
    for (int i = 0; i < 65; ++i)
      theta_nodes[static_cast<std::size_t>(i)] = sp.lo + std::exp(-2.0 + 4.0 * i / 64.0);
  } else if (sp.finite()) {
    theta_nodes = linear_nodes(sp.lo + 0.02 * (sp.hi - sp.lo),
                               sp.hi - 0.02 * (sp.hi - sp.lo), 65);
  } else {
    theta_nodes = linear_nodes(-4.0, 4.0, 65);
  }

  const double h_residual =
      check_H_form(fam, maps, linear_nodes(x_nodes.front(), x_nodes.back(), 21));

  CommandOutput out;
  out.result["family"] = fam.label;
  out.result["group"] = group_label;
  out.result["branch"] = maps.branch;
  out.result["h_form_residual"] = h_residual;
  out.result["x_window"] = {{"lo", x_nodes.front()}, {"hi", x_nodes.back()}};
  out.result["theta_window"] = {{"lo", theta_nodes.front()}, {"hi", theta_nodes.back()}};

  std::vector<std::vector<std::string>> rows;
  Series s_curve{"s(x)", x_nodes, {}, false};
  for (double x : x_nodes) {
    rows.push_back({"s", csv_cell(x), csv_cell(maps.s(x)), csv_cell(maps.ds(x))});
    s_curve.ys.push_back(maps.s(x));
  }
  Series sbar_curve{"s_bar(theta)", theta_nodes, {}, false};
  for (double t : theta_nodes) {
    rows.push_back(
        {"s_bar", csv_cell(t), csv_cell(maps.s_bar(t)), csv_cell(maps.ds_bar(t))});
    sbar_curve.ys.push_back(maps.s_bar(t));
  }
  out.csv = csv_table({"map", "coordinate", "value", "slope"}, rows);
  out.svg = svg_chart("Reduction maps: " + fam.label + " under " + group_label,
                      "coordinate", "map value", {s_curve, sbar_curve});
  return out;
}

CommandOutput dispatch(const ExperimentConfig& cfg) {
  switch (cfg.command) {
    case Command::posterior: return run_posterior(cfg);
    case Command::coverage: return run_coverage(cfg);
    case Command::fiducial: return run_fiducial(cfg);
    case Command::compare_priors: return run_compare(cfg);
    case Command::pit: return run_pit(cfg);
    case Command::reduce: return run_reduce(cfg);
  }
  throw Error("run: unreachable command");
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  log(LogLevel::info, "running " + cfg.command_name + " -> " + cfg.output);
  log(LogLevel::debug, "effective config: " + cfg.echo.dump());

  CommandOutput result = dispatch(cfg);

  RunManifest manifest;
  manifest.config_echo = cfg.echo;
  manifest.tool_version = kToolVersion;

  const std::string json_path = cfg.output + ".json";
  const std::string csv_path = cfg.output + ".csv";
  write_file_atomic(json_path, result.result.dump(2) + "\n");
  manifest.output_files.push_back(json_path);
  write_file_atomic(csv_path, result.csv);
  manifest.output_files.push_back(csv_path);

  if (cfg.emit_plot) {
    // Chart failures degrade to a warning; the run itself still succeeds.
    try {
      if (!result.svg) throw Error("no chart defined for this command");
      const std::string svg_path = cfg.output + ".svg";
      write_file_atomic(svg_path, *result.svg);
      manifest.output_files.push_back(svg_path);
    } catch (const std::exception& e) {
      log(LogLevel::warn, std::string("plot skipped: ") + e.what());
    }
  }

  manifest.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_file_atomic(cfg.output + ".manifest.json", manifest.to_json() + "\n");
  return manifest;
}

std::string classify_error(const Error& e) {
  struct Entry {
    const char* name;
    bool (*match)(const Error&);
  };
  static const Entry table[] = {
      {"numerics: NonConvergence",
       [](const Error& x) { return dynamic_cast<const NonConvergence*>(&x) != nullptr; }},
      {"numerics: NonFinite",
       [](const Error& x) { return dynamic_cast<const NonFinite*>(&x) != nullptr; }},
      {"numerics: NoSignChange",
       [](const Error& x) { return dynamic_cast<const NoSignChange*>(&x) != nullptr; }},
      {"families: DerivativeVanishes",
       [](const Error& x) { return dynamic_cast<const DerivativeVanishes*>(&x) != nullptr; }},
      {"families: EmptySide",
       [](const Error& x) { return dynamic_cast<const EmptySide*>(&x) != nullptr; }},
      {"families: NotIdentifiable",
       [](const Error& x) { return dynamic_cast<const NotIdentifiable*>(&x) != nullptr; }},
      {"invariance: NonDifferentiable",
       [](const Error& x) { return dynamic_cast<const NonDifferentiable*>(&x) != nullptr; }},
      {"invariance: TrivialLocusCrossed",
       [](const Error& x) { return dynamic_cast<const TrivialLocusCrossed*>(&x) != nullptr; }},
      {"posterior: PosteriorNotNormalizable",
       [](const Error& x) {
         return dynamic_cast<const PosteriorNotNormalizable*>(&x) != nullptr;
       }},
      {"posterior: TrivialLocusDatum",
       [](const Error& x) { return dynamic_cast<const TrivialLocusDatum*>(&x) != nullptr; }},
      {"posterior: ZeroMarginal",
       [](const Error& x) { return dynamic_cast<const ZeroMarginal*>(&x) != nullptr; }},
      {"posterior: FactorRejected",
       [](const Error& x) { return dynamic_cast<const FactorRejected*>(&x) != nullptr; }},
      {"calibration: NonMonotoneInParameter",
       [](const Error& x) {
         return dynamic_cast<const NonMonotoneInParameter*>(&x) != nullptr;
       }},
      {"calibration: TrialFailed",
       [](const Error& x) { return dynamic_cast<const TrialFailed*>(&x) != nullptr; }},
      {"rivals: SingularInformation",
       [](const Error& x) { return dynamic_cast<const SingularInformation*>(&x) != nullptr; }},
  };
  for (const auto& entry : table)
    if (entry.match(e)) return entry.name;
  return "library: Error";
}

}  // namespace confactor::cli
