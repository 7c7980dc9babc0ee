#include "confactor/rivals.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <utility>

#include <json.hpp>

namespace confactor {

namespace {

// ----------------------------------------------------------------------------
// Fisher information helpers
// ----------------------------------------------------------------------------

double sqrt_det_information(const DirectFamily& fam, const std::vector<double>& theta) {
  const double d = fisher_information(fam, theta).det();
  if (!(d > 1e-12))
    throw SingularInformation("jeffreys_factor: information determinant " +
                              std::to_string(d) + " at a probe point");
  return std::sqrt(d);
}

// An interior point of the parameter interval, preferring `want` when it fits.
double interior_point(const Interval& sp, double want) {
  if (sp.contains(want)) return want;
  if (sp.finite()) return 0.5 * (sp.lo + sp.hi);
  if (sp.lo_finite()) return sp.lo + 1.0;
  if (sp.hi_finite()) return sp.hi - 1.0;
  return 0.0;
}

// Three interior probes per parameter interval, for the construction-time
// singularity sweep of unstructured families.
std::vector<double> probe_points(const Interval& sp) {
  if (sp.finite()) {
    const double w = sp.hi - sp.lo;
    return {sp.lo + 0.25 * w, sp.lo + 0.5 * w, sp.lo + 0.75 * w};
  }
  if (sp.lo_finite()) return {sp.lo + 0.5, sp.lo + 1.0, sp.lo + 2.5};
  if (sp.hi_finite()) return {sp.hi - 2.5, sp.hi - 1.0, sp.hi - 0.5};
  return {-1.0, 0.0, 1.5};
}

// Relative agreement used to validate the structured sigma-dependence of the
// Jeffreys factor before pinning it; quadrature + finite-difference noise sits
// well below this.
constexpr double kStructureTol = 1e-6;

// ----------------------------------------------------------------------------
// Lambda-marginal helpers.  Both closed displays depend on the data only
// through n and r = sum(x)/sqrt(sum(x^2)), with r^2 <= n by Cauchy-Schwarz.
// ----------------------------------------------------------------------------

struct LambdaSummary {
  std::size_t n = 0;
  double r = 0.0;
};

LambdaSummary summarize_for_lambda(const std::vector<double>& data) {
  if (data.size() < 2)
    throw std::invalid_argument("lambda marginal: need at least 2 observations");
  double sum = 0.0, sumsq = 0.0;
  for (double x : data) {
    if (!std::isfinite(x)) throw NonFinite("lambda marginal: non-finite datum");
    sum += x;
    sumsq += x * x;
  }
  if (!(sumsq > 0.0))
    throw std::invalid_argument("lambda marginal: need sum(x^2) > 0");
  return {data.size(), sum / std::sqrt(sumsq)};
}

// Window half-width: exp(-n L^2 / 2) equals the library-wide 1e-12 tail cut.
double lambda_window(std::size_t n) {
  return std::sqrt(-2.0 * std::log(1e-12) / static_cast<double>(n));
}

// log of integral_0^inf u^k exp(-u^2/2 + b u) du.  Within the envelope window
// |b| = |r lambda| <= sqrt(n) L, so the exponent peaks at b^2/2 <= -log(1e-12)
// and the linear-space integrand stays far from overflow.
double log_weighted_gauss(int k, double b) {
  const double v = integrate(
      [k, b](double u) { return std::pow(u, k) * std::exp(-0.5 * u * u + b * u); },
      Interval::positive());
  return safe_log(v);
}

// Assembles a lambda display from its unnormalized log density: evaluate on
// the envelope-window grid, normalize there, hand the fields to Posterior.
Posterior assemble_lambda_display(const std::function<double(double)>& log_unnorm,
                                  const std::vector<double>& grid,
                                  const std::string& family_label,
                                  const std::string& factor_label,
                                  const std::vector<double>& data) {
  const double log_eta =
      log_integrate(log_unnorm, Interval(grid.front(), grid.back()), {}, 129);
  if (!std::isfinite(log_eta))
    throw PosteriorNotNormalizable("lambda marginal: no mass on the display window");

  Posterior post;
  post.nodes = grid;
  post.log_density.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    post.log_density[i] = log_unnorm(grid[i]) - log_eta;
  post.log_eta = log_eta;
  post.param_space = Interval::whole();
  post.family_label = family_label;
  post.factor_label = factor_label;
  post.data = data;
  post.exact_log_density = [log_unnorm, log_eta, lo = grid.front(),
                            hi = grid.back()](double lam) {
    if (lam < lo || lam > hi) return -kInf;
    return log_unnorm(lam) - log_eta;
  };
  post.finalize();
  return post;
}

// Closed-form display shared by the consistency route (k = n-2) and the
// reference rule (k = n-1 with the extra 1/sqrt(1 + lambda^2/2)).
Posterior closed_lambda_display(const std::vector<double>& data, bool reference_rule) {
  const LambdaSummary s = summarize_for_lambda(data);
  const int k = static_cast<int>(s.n) - (reference_rule ? 1 : 2);
  const double half_n = 0.5 * static_cast<double>(s.n);
  const double r = s.r;
  auto log_unnorm = [k, half_n, r, reference_rule](double lam) {
    double v = -half_n * lam * lam + log_weighted_gauss(k, r * lam);
    if (reference_rule) v -= 0.5 * std::log1p(0.5 * lam * lam);
    return v;
  };
  return assemble_lambda_display(log_unnorm, lambda_comparison_grid(s.n), "normal",
                                 reference_rule ? "reference-rule" : "joint-location-scale",
                                 data);
}

void require_normal(const LocationScaleFamily& fam, const std::string& rule) {
  if (fam.label != "normal")
    throw std::invalid_argument("compare_rules: rule '" + rule +
                                "' has its closed display only for the normal family");
}

Posterior rule_marginal(const std::string& rule, const LocationScaleFamily& fam,
                        const std::vector<double>& data) {
  if (rule == "consistency") {
    require_normal(fam, rule);
    return consistency_marginal_lambda(data);
  }
  if (rule == "reference") {
    require_normal(fam, rule);
    return reference_marginal_lambda(data);
  }
  if (rule == "jeffreys")
    return lambda_marginal_via_joint(fam, data, jeffreys_factor(fam.as_direct()));
  if (rule == "uniform")
    return lambda_marginal_via_joint(fam, data, uniform_factor(2));
  throw std::invalid_argument("compare_rules: unknown rule '" + rule + "'");
}

std::optional<double> rule_residual(const std::string& rule,
                                    const LocationScaleFamily& fam,
                                    const std::vector<double>& data) {
  // The reference rule is a marginal-only formula; there is no joint weight
  // whose product-rule decomposition could be checked.
  if (rule == "reference") return std::nullopt;
  // Fewer than two distinct values: no normalizable joint exists to decompose.
  const bool distinct =
      std::any_of(data.begin(), data.end(), [&](double x) { return x != data.front(); });
  if (!distinct) return std::nullopt;
  if (rule == "consistency") return product_rule_residual(fam, data);
  if (rule == "jeffreys")
    return product_rule_residual(fam, data, jeffreys_factor(fam.as_direct()));
  return product_rule_residual(fam, data, uniform_factor(2));
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i)
    s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

}  // namespace

// ----------------------------------------------------------------------------
// FisherMatrix
// ----------------------------------------------------------------------------

double FisherMatrix::det() const {
  if (dim == 1) return entries[0];
  if (dim == 2) return entries[0] * entries[3] - entries[1] * entries[2];
  throw std::invalid_argument("FisherMatrix::det: dim must be 1 or 2");
}

FisherMatrix fisher_information(const DirectFamily& fam,
                                const std::vector<double>& theta) {
  const int m = fam.dim_param;
  if (static_cast<int>(theta.size()) != m)
    throw std::invalid_argument("fisher_information: parameter dimension mismatch");
  for (int i = 0; i < m; ++i)
    if (!fam.param_space[i].contains(theta[i]))
      throw std::invalid_argument("fisher_information: theta outside the parameter space");

  auto score = [&fam, &theta](double x, int i) {
    const double h = fd_step(theta[i]);
    std::vector<double> up = theta, dn = theta;
    up[i] += h;
    dn[i] -= h;
    return (fam.log_pdf(x, up) - fam.log_pdf(x, dn)) / (2.0 * h);
  };

  FisherMatrix out;
  out.dim = m;
  out.at = theta;
  out.entries.assign(static_cast<std::size_t>(m) * m, 0.0);
  const Interval sup = fam.support(theta);
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      const double v = integrate(
          [&](double x) {
            const double lp = fam.log_pdf(x, theta);
            // Underflowed density: the point carries no weight, and the
            // difference quotients may not be finite there.
            if (!(lp > -700.0)) return 0.0;
            const double si = score(x, i);
            const double sj = (j == i) ? si : score(x, j);
            const double w = si * sj * std::exp(lp);
            if (!std::isfinite(w))
              throw NonFinite("fisher_information: non-finite score integrand");
            return w;
          },
          sup);
      out.entries[static_cast<std::size_t>(i) * m + j] = v;
      out.entries[static_cast<std::size_t>(j) * m + i] = v;
    }
  }
  return out;
}

// ----------------------------------------------------------------------------
// Rule factors
// ----------------------------------------------------------------------------

ConsistencyFactor jeffreys_factor(const DirectFamily& fam) {
  const int m = fam.dim_param;
  ConsistencyFactor out;
  out.kind = FactorKind::custom;
  out.label = "jeffreys:" + fam.label;
  out.dim_param = m;

  if (fam.group_label == "translation" && m == 1) {
    const double a = interior_point(fam.param_space[0], 0.0);
    const double b = interior_point(fam.param_space[0], 1.0);
    const double z = sqrt_det_information(fam, {a});
    if (std::abs(sqrt_det_information(fam, {b}) / z - 1.0) <= kStructureTol) {
      out.zeta = [z](const std::vector<double>&) { return z; };
      return out;
    }
  } else if (fam.group_label == "scaling" && m == 1) {
    // det I ~ sigma^{-2}; pin c = sigma * sqrt(det I) and check it twice.
    const double s0 = interior_point(fam.param_space[0], 1.0);
    const double s1 = interior_point(fam.param_space[0], 2.0);
    const double c = s0 * sqrt_det_information(fam, {s0});
    if (std::abs(s1 * sqrt_det_information(fam, {s1}) / c - 1.0) <= kStructureTol) {
      out.zeta = [c](const std::vector<double>& th) { return c / th[0]; };
      return out;
    }
  } else if (fam.group_label == "affine" && m == 2) {
    // Every entry ~ sigma^{-2}, none depends on mu: zeta_J = c / sigma^2.
    const double mu0 = interior_point(fam.param_space[0], 0.0);
    const double mu1 = interior_point(fam.param_space[0], 0.9);
    const double s0 = interior_point(fam.param_space[1], 1.0);
    const double s1 = interior_point(fam.param_space[1], 2.0);
    const double c = s0 * s0 * sqrt_det_information(fam, {mu0, s0});
    const bool mu_free =
        std::abs(s0 * s0 * sqrt_det_information(fam, {mu1, s0}) / c - 1.0) <= kStructureTol;
    const bool sigma_law =
        std::abs(s1 * s1 * sqrt_det_information(fam, {mu0, s1}) / c - 1.0) <= kStructureTol;
    if (mu_free && sigma_law) {
      out.zeta = [c](const std::vector<double>& th) { return c / (th[1] * th[1]); };
      return out;
    }
  }

  // No usable structure: evaluate sqrt(det I) per call.  Sweep an interior
  // probe lattice first so a singular family is rejected at construction
  // rather than on first use.
  std::vector<std::vector<double>> probes{{}};
  for (int i = 0; i < m; ++i) {
    std::vector<std::vector<double>> next;
    for (const auto& partial : probes)
      for (double v : probe_points(fam.param_space[i])) {
        auto p = partial;
        p.push_back(v);
        next.push_back(std::move(p));
      }
    probes = std::move(next);
  }
  for (const auto& p : probes) sqrt_det_information(fam, p);
  out.zeta = [f = fam](const std::vector<double>& th) {
    return sqrt_det_information(f, th);
  };
  return out;
}

ConsistencyFactor uniform_factor(int dim_param) {
  if (dim_param < 1 || dim_param > 2)
    throw std::invalid_argument("uniform_factor: dim_param must be 1 or 2");
  ConsistencyFactor out;
  out.kind = FactorKind::custom;
  out.label = "uniform";
  out.dim_param = dim_param;
  out.zeta = [](const std::vector<double>&) { return 1.0; };
  return out;
}

ConsistencyFactor transform_factor(const ConsistencyFactor& factor,
                                   const MonotoneMap& sbar) {
  if (factor.dim_param != 1)
    throw std::invalid_argument("transform_factor: scalar factors only");
  ConsistencyFactor out;
  out.kind = FactorKind::custom;
  out.label = factor.label + "|reparameterized";
  out.dim_param = 1;
  out.zeta = [z = factor.zeta, inv = sbar.f_inv, df = sbar.df](
                 const std::vector<double>& y) {
    const double th = inv(y[0]);
    const double d = df(th);
    if (d == 0.0 || !std::isfinite(d))
      throw DerivativeVanishes("transform_factor: map has no usable slope at " +
                               std::to_string(th));
    return z({th}) / std::abs(d);
  };
  return out;
}

// ----------------------------------------------------------------------------
// Lambda marginals
// ----------------------------------------------------------------------------

std::vector<double> lambda_comparison_grid(std::size_t n_data, int nodes) {
  if (n_data < 2)
    throw std::invalid_argument("lambda_comparison_grid: need at least 2 observations");
  if (nodes < 2) throw std::invalid_argument("lambda_comparison_grid: need >= 2 nodes");
  const double L = lambda_window(n_data);
  std::vector<double> grid(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i)
    grid[static_cast<std::size_t>(i)] = -L + 2.0 * L * i / (nodes - 1);
  return grid;
}

Posterior reference_marginal_lambda(const std::vector<double>& data) {
  return closed_lambda_display(data, true);
}

Posterior consistency_marginal_lambda(const std::vector<double>& data) {
  return closed_lambda_display(data, false);
}

Posterior lambda_marginal_via_joint(const LocationScaleFamily& fam,
                                    const std::vector<double>& data,
                                    std::optional<ConsistencyFactor> joint_factor,
                                    int nodes) {
  const LambdaSummary s = summarize_for_lambda(data);
  const std::string factor_label =
      joint_factor ? joint_factor->label : std::string("joint-location-scale");
  BuildOptions2D opt;
  opt.strict = false;  // rival joint weights are admitted for comparison
  auto joint = std::make_shared<Posterior2D>(
      build_posterior_2d(fam, data, std::move(joint_factor), opt));

  // Push (mu, sigma) -> (lambda = mu/sigma, sigma) and integrate sigma out in
  // log coordinates over the joint's stored sigma window; the map's Jacobian
  // contributes one power of sigma, the coordinate another.
  const double ta = std::log(joint->sigma_nodes.front());
  const double tb = std::log(joint->sigma_nodes.back());
  auto log_unnorm = [joint, ta, tb](double lam) {
    return log_integrate(
        [&joint, lam](double t) {
          const double sg = std::exp(t);
          const double lj = joint->exact_log_density(lam * sg, sg);
          return lj == -kInf ? -kInf : lj + 2.0 * t;
        },
        Interval(ta, tb), {}, 65);
  };
  return assemble_lambda_display(log_unnorm, lambda_comparison_grid(s.n, nodes),
                                 fam.label, factor_label, data);
}

Posterior consistency_marginal_lambda_via_joint(const std::vector<double>& data) {
  return lambda_marginal_via_joint(base_family("normal"), data);
}

// ----------------------------------------------------------------------------
// Rule comparison
// ----------------------------------------------------------------------------

std::string RuleComparison::to_json() const {
  nlohmann::json j;
  j["rule_a"] = rule_a;
  j["rule_b"] = rule_b;
  j["l1_distance"] = l1_distance;
  j["product_rule_residual_a"] =
      product_rule_residual_a ? nlohmann::json(*product_rule_residual_a)
                              : nlohmann::json();
  j["product_rule_residual_b"] =
      product_rule_residual_b ? nlohmann::json(*product_rule_residual_b)
                              : nlohmann::json();
  if (!grid.empty())
    j["grid"] = {{"nodes", grid.size()}, {"lo", grid.front()}, {"hi", grid.back()}};
  return j.dump();
}

RuleComparison compare_rules(const std::string& rule_a, const std::string& rule_b,
                             const LocationScaleFamily& fam,
                             const std::vector<double>& data,
                             const std::vector<double>& lambda_grid) {
  if (lambda_grid.size() < 2)
    throw std::invalid_argument("compare_rules: need a grid with at least 2 nodes");
  for (std::size_t i = 1; i < lambda_grid.size(); ++i)
    if (!(lambda_grid[i] > lambda_grid[i - 1]))
      throw std::invalid_argument("compare_rules: grid must be strictly increasing");

  RuleComparison out;
  out.rule_a = rule_a;
  out.rule_b = rule_b;
  out.grid = lambda_grid;

  const Posterior pa = rule_marginal(rule_a, fam, data);
  const Posterior pb = rule_marginal(rule_b, fam, data);
  auto densities = [&lambda_grid](const Posterior& p, const std::string& rule) {
    std::vector<double> d(lambda_grid.size());
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) d[i] = p.density(lambda_grid[i]);
    const double mass = trapezoid(lambda_grid, d);
    if (!(mass > 0.0))
      throw PosteriorNotNormalizable("compare_rules: rule '" + rule +
                                     "' carries no mass on the grid");
    for (double& v : d) v /= mass;
    return d;
  };
  out.density_a = densities(pa, rule_a);
  out.density_b = densities(pb, rule_b);

  std::vector<double> gap(lambda_grid.size());
  for (std::size_t i = 0; i < gap.size(); ++i)
    gap[i] = std::abs(out.density_a[i] - out.density_b[i]);
  out.l1_distance = trapezoid(lambda_grid, gap);

  out.product_rule_residual_a = rule_residual(rule_a, fam, data);
  out.product_rule_residual_b = rule_residual(rule_b, fam, data);
  return out;
}

}  // namespace confactor
