#include "confactor/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <utility>

#include <json.hpp>

namespace confactor {
namespace {

// ----------------------------------------------------------------------------
// Small numeric helpers.
// ----------------------------------------------------------------------------

double logaddexp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

// Gauss-Legendre 7 on [a, b]: fixed-cost quadrature for the per-interval
// masses of the stored representation (the integrand is an interpolant, so
// adaptive refinement would only chase interpolation error).
const double kGlNode[4] = {0.0, 0.4058451513773972, 0.7415311855993945,
                           0.9491079123427585};
const double kGlWeight[4] = {0.4179591836734694, 0.3818300505051189,
                             0.2797053914892766, 0.1294849661688697};

double gl7(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double s = kGlWeight[0] * f(c);
  for (int i = 1; i < 4; ++i)
    s += kGlWeight[i] * (f(c - h * kGlNode[i]) + f(c + h * kGlNode[i]));
  return s * h;
}

// ----------------------------------------------------------------------------
// Domain-expansion coordinates: the same maps the scan stage uses, so that
// "double the window" means the same thing for half-lines (log distance from
// the finite endpoint) and the whole line (asinh).
// ----------------------------------------------------------------------------
struct TMap {
  double t_lo, t_hi;
  std::function<double(double)> x_of_t;
  std::function<double(double)> t_of_x;
  std::function<double(double)> log_jac;  // log |dx/dt|
};

TMap expansion_map(Interval domain) {
  if (domain.finite())
    return {domain.lo, domain.hi, [](double t) { return t; },
            [](double x) { return x; }, [](double) { return 0.0; }};
  if (domain.lo_finite())
    return {-230.0, 230.0,
            [domain](double t) { return domain.lo + std::exp(t); },
            [domain](double x) { return std::log(x - domain.lo); },
            [](double t) { return t; }};
  if (domain.hi_finite())
    return {-230.0, 230.0,
            [domain](double t) { return domain.hi - std::exp(-t); },
            [domain](double x) { return -std::log(domain.hi - x); },
            [](double t) { return -t; }};
  return {-230.0, 230.0, [](double t) { return std::sinh(t); },
          [](double x) { return std::asinh(x); }, [](double t) {
            // log cosh t, overflow-safe.
            const double a = std::abs(t);
            return a + std::log1p(std::exp(-2.0 * a)) - 0.6931471805599453;
          }};
}

constexpr double kLogStabilityCut = -23.025850929940457;  // log(1e-10)
constexpr double kLogShrinkFloor = -0.10536051565782628;  // log(0.9)

// Log integral of exp(log_f) over the window [w_lo, w_hi], run in the
// domain's expansion coordinate so windows spanning many decades stay within
// the adaptive quadrature's bisection depth.
double windowed_log_integral(const std::function<double(double)>& log_f,
                             Interval domain, double w_lo, double w_hi,
                             int scan_points) {
  const TMap map = expansion_map(domain);
  const double ta = std::clamp(map.t_of_x(w_lo), map.t_lo, map.t_hi);
  const double tb = std::clamp(map.t_of_x(w_hi), map.t_lo, map.t_hi);
  if (!(ta < tb)) return -kInf;
  auto log_f_t = [&map, &log_f](double t) {
    return log_f(map.x_of_t(t)) + map.log_jac(t);
  };
  return log_integrate(log_f_t, Interval(ta, tb), {}, scan_points);
}

// log of the normalization integral of exp(log_f) over the domain.  Starts
// from the located mass window and repeatedly doubles it in expansion
// coordinates; converged when a new shell adds less than 1e-10 of the total.
// Declares the integral non-normalizable when three successive expansions
// fail to shrink the shell contributions (power-law or growing tails), or
// when the domain is exhausted before the shells stabilize.
//
// All quadrature runs in the expansion coordinate with the Jacobian folded
// into the integrand: power-law tails become exponentials there, so the
// adaptive bisection resolves shells spanning many decades of the raw
// parameter without exhausting its depth budget.
double stabilized_log_eta(const std::function<double(double)>& log_f,
                          Interval domain, double w_lo, double w_hi,
                          int scan_points) {
  const TMap map = expansion_map(domain);
  const auto log_f_t = [&map, &log_f](double t) {
    return log_f(map.x_of_t(t)) + map.log_jac(t);
  };
  double ta = std::clamp(map.t_of_x(w_lo), map.t_lo, map.t_hi);
  double tb = std::clamp(map.t_of_x(w_hi), map.t_lo, map.t_hi);
  if (!(ta < tb)) {
    const double pad = 1e-6 * std::max(1.0, std::abs(ta));
    ta = std::max(map.t_lo, ta - pad);
    tb = std::min(map.t_hi, tb + pad);
    if (!(ta < tb)) throw PosteriorNotNormalizable("degenerate mass window");
  }
  double log_total = log_integrate(log_f_t, Interval(ta, tb), {}, scan_points);
  // Near a finite domain endpoint the expansion coordinate clamps at a
  // representable floor; a window that abuts the floor never grows shells past
  // it, so a divergence sitting right at the boundary would go unseen.  In the
  // log coordinate an integrable approach to the endpoint vanishes while a
  // non-integrable one stays level or grows, so certification requires the
  // integrand to be negligible at that edge.  (Tails toward infinity are the
  // shell-growth machinery's job and are left alone: their edge values only
  // reflect how much of a proper tail lies beyond the representable range.)
  const auto certified = [&](double total) {
    if (total == -kInf) return total;  // numerically zero: nothing to certify
    double edge = 0.0;
    if (domain.lo_finite() && !domain.hi_finite())
      edge = map.t_lo;
    else if (domain.hi_finite() && !domain.lo_finite())
      edge = map.t_hi;
    else
      return total;
    const double v = log_f_t(edge);
    if (std::isnan(v) || v >= total + kLogStabilityCut)
      throw PosteriorNotNormalizable(
          "density does not vanish integrably at the domain boundary");
    return total;
  };
  double prev_shell = kInf;  // +inf marks "no shell integrated yet"
  int growth_streak = 0;
  for (int k = 0; k < 48; ++k) {
    const double width = tb - ta;
    const double na = std::max(map.t_lo, ta - width);
    const double nb = std::min(map.t_hi, tb + width);
    double shell = -kInf;
    if (na < ta)
      shell = logaddexp(
          shell, log_integrate(log_f_t, Interval(na, ta), {}, scan_points));
    if (tb < nb)
      shell = logaddexp(
          shell, log_integrate(log_f_t, Interval(tb, nb), {}, scan_points));
    const bool exhausted = (na <= map.t_lo && nb >= map.t_hi);
    ta = na;
    tb = nb;
    log_total = logaddexp(log_total, shell);
    if (shell == -kInf || shell <= log_total + kLogStabilityCut)
      return certified(log_total);
    if (prev_shell < kInf)
      growth_streak = (shell >= prev_shell + kLogShrinkFloor) ? growth_streak + 1 : 0;
    if (growth_streak >= 2)
      throw PosteriorNotNormalizable(
          "normalization integral keeps growing under domain expansion");
    prev_shell = shell;
    if (exhausted) {
      // A finite domain is integrated exactly once fully covered; improper
      // domains that still carry shell mass at the representable edge cannot
      // be certified finite.
      if (domain.finite()) return log_total;
      throw PosteriorNotNormalizable(
          "normalization integral does not stabilize within the domain");
    }
  }
  throw PosteriorNotNormalizable(
      "normalization integral did not stabilize after repeated expansion");
}

// ----------------------------------------------------------------------------
// Core one-dimensional build from an unnormalized log density.
// ----------------------------------------------------------------------------
Posterior build_from_log_unnorm(const std::function<double(double)>& log_unnorm,
                                Interval space, const BuildOptions& opt,
                                std::string family_label, std::string factor_label,
                                std::vector<double> data) {
  HintWindow w;
  if (opt.window) {
    w.lo = opt.window->first;
    w.hi = opt.window->second;
    if (!(w.lo < w.hi))
      throw std::invalid_argument("build_posterior: window needs lo < hi");
  } else {
    w = locate_mass(space, log_unnorm, opt.coarse_scan, opt.fine_scan);
  }

  double log_eta;
  try {
    log_eta = stabilized_log_eta(log_unnorm, space, w.lo, w.hi, opt.eta_scan);
  } catch (const NonConvergence& e) {
    // Quadrature that cannot settle signals a non-integrable spike.
    throw PosteriorNotNormalizable(
        std::string("normalization quadrature diverged: ") + e.what());
  }
  if (!std::isfinite(log_eta))
    throw PosteriorNotNormalizable("normalization integral is not finite-positive");

  Posterior p;
  p.nodes = build_grid_window(
      space, w.lo, w.hi, opt.grid_nodes,
      opt.mass_weighted ? log_unnorm : std::function<double(double)>{},
      opt.place_lattice);
  p.log_density.resize(p.nodes.size());
  for (std::size_t i = 0; i < p.nodes.size(); ++i)
    p.log_density[i] = log_unnorm(p.nodes[i]) - log_eta;
  p.log_eta = log_eta;
  p.param_space = space;
  p.family_label = std::move(family_label);
  p.factor_label = std::move(factor_label);
  p.data = std::move(data);
  p.exact_log_density = [log_unnorm, log_eta](double th) {
    return log_unnorm(th) - log_eta;
  };
  p.finalize();
  return p;
}

// ----------------------------------------------------------------------------
// Gates shared by the builders.
// ----------------------------------------------------------------------------

void check_trivial_locus(const DirectFamily& fam, const std::vector<double>& data) {
  if (fam.group_label != "translation" && fam.group_label != "scaling") return;
  const GroupAction& grp = group_by_label(fam.group_label);
  for (double x : data)
    if (std::abs(action_derivative(grp, x)) <= Tolerance{}.abs)
      throw TrivialLocusDatum(
          "datum where the group action is trivial carries no parameter "
          "information");
}

std::vector<GroupElement> gate_elements(const std::string& label) {
  if (label == "translation") return {{-2.0}, {-0.5}, {0.5}, {2.0}};
  if (label == "scaling") return {{0.5}, {2.0}, {5.0}};
  return {{1.0, 2.0}, {-1.0, 0.5}, {0.3, 3.0}};  // affine
}

void gate_custom_factor(const ConsistencyFactor& factor, const std::string& group_label) {
  if (factor.kind != FactorKind::custom) return;
  if (group_label != "translation" && group_label != "scaling" &&
      group_label != "affine")
    return;  // no declared group to check against
  const GroupAction& grp = group_by_label(group_label);
  const double r = factor_functional_residual(factor, grp, gate_elements(group_label));
  if (!(r < 1e-6))
    throw FactorRejected(
        "custom factor fails its functional equation under the family's group");
}

// Unnormalized log posterior for a one-parameter family.
std::function<double(double)> make_log_unnorm(const DirectFamily& fam,
                                              const ConsistencyFactor& factor,
                                              const std::vector<double>& data) {
  const Interval space = fam.param_space[0];
  return [fam, factor, data, space](double th) {
    if (!space.contains(th)) return -kInf;
    static thread_local std::vector<double> buf(1);
    buf.assign(1, th);
    double v = safe_log(factor.zeta(buf));
    for (double x : data) {
      if (v == -kInf) break;
      v += fam.log_pdf(x, buf);
    }
    return v;
  };
}

// Image of a parameter-space endpoint under a map, probing toward the
// endpoint when the direct evaluation is indeterminate.
double endpoint_image(const std::function<double(double)>& f, double e,
                      Interval space, bool from_above) {
  double v = f(e);
  if (!std::isnan(v)) return v;
  double dist;
  if (std::isfinite(e)) {
    dist = space.finite() ? 0.25 * (space.hi - space.lo) : 1.0;
  } else {
    dist = 1.0;
  }
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int k = 0; k < 200; ++k) {
    double x;
    if (std::isfinite(e)) {
      x = from_above ? e - dist : e + dist;
      dist *= 0.25;
    } else {
      x = (e > 0 ? dist : -dist);
      if (dist > 1e90) break;
      dist *= 4.0;
    }
    if (!space.contains(x)) continue;
    v = f(x);
    if (std::isnan(v)) continue;
    if (!std::isfinite(v)) return v;
    if (std::abs(v) > 1e300) return v > 0 ? kInf : -kInf;
    if (!std::isnan(prev) &&
        std::abs(v - prev) <= 1e-10 * std::max(1.0, std::abs(v)))
      return v;
    prev = v;
  }
  return v;
}

}  // namespace

// ----------------------------------------------------------------------------
// ConsistencyFactor
// ----------------------------------------------------------------------------

ConsistencyFactor consistency_factor(FactorKind kind) {
  ConsistencyFactor f;
  f.kind = kind;
  switch (kind) {
    case FactorKind::location:
      f.label = "location";
      f.dim_param = 1;
      f.zeta = [](const std::vector<double>&) { return 1.0; };
      break;
    case FactorKind::scale:
      f.label = "scale";
      f.dim_param = 1;
      f.zeta = [](const std::vector<double>& th) { return 1.0 / th[0]; };
      break;
    case FactorKind::joint_location_scale:
      f.label = "joint-location-scale";
      f.dim_param = 2;
      f.zeta = [](const std::vector<double>& th) { return 1.0 / th[1]; };
      break;
    case FactorKind::custom:
      throw std::invalid_argument(
          "consistency_factor: custom factors must be constructed by the caller");
  }
  return f;
}

// ----------------------------------------------------------------------------
// Posterior evaluation
// ----------------------------------------------------------------------------

void Posterior::finalize() {
  const std::size_t n = nodes.size();
  if (n < 2 || log_density.size() != n)
    throw std::invalid_argument("Posterior: need >= 2 nodes with matching values");
  for (std::size_t i = 1; i < n; ++i)
    if (!(nodes[i] > nodes[i - 1]))
      throw std::invalid_argument("Posterior: nodes must be strictly increasing");

  double peak = -kInf;
  for (double v : log_density) {
    if (std::isnan(v) || v == kInf)
      throw NonFinite("Posterior: log density must be < +inf and not NaN");
    peak = std::max(peak, v);
  }
  if (!std::isfinite(peak))
    throw NonFinite("Posterior: log density vanishes everywhere");

  // Interpolate a floored copy so exp() stays in normal range; the stored
  // values are untouched (they serialize verbatim).
  std::vector<double> floored(log_density);
  const double floor_v = peak - 700.0;
  for (double& v : floored) v = std::max(v, floor_v);
  log_interp_ = MonotoneCubic(nodes, floored);

  std::vector<double> cum(n, 0.0);
  const MonotoneCubic& li = log_interp_;
  for (std::size_t i = 0; i + 1 < n; ++i)
    cum[i + 1] = cum[i] + gl7([&li](double x) { return std::exp(li(x)); },
                              nodes[i], nodes[i + 1]);
  mass_ = cum.back();
  if (!(mass_ > 0.0) || !std::isfinite(mass_))
    throw NonFinite("Posterior: representation mass is not finite-positive");
  cum_interp_ = MonotoneCubic(nodes, cum);
}

double Posterior::density(double theta) const {
  if (!param_space.contains(theta)) return 0.0;
  if (exact_log_density) return std::exp(exact_log_density(theta));
  if (log_interp_.empty()) throw Error("Posterior: finalize() has not run");
  if (theta < nodes.front() || theta > nodes.back()) return 0.0;
  return std::exp(log_interp_(theta));
}

double Posterior::log_density_at(double theta) const {
  if (!param_space.contains(theta)) return -kInf;
  if (exact_log_density) return exact_log_density(theta);
  if (log_interp_.empty()) throw Error("Posterior: finalize() has not run");
  if (theta < nodes.front() || theta > nodes.back()) return -kInf;
  return log_interp_(theta);
}

double Posterior::cdf(double theta) const {
  if (cum_interp_.empty()) throw Error("Posterior: finalize() has not run");
  if (theta <= nodes.front()) return 0.0;
  if (theta >= nodes.back()) return mass_;
  return cum_interp_(theta);
}

double Posterior::quantile(double p) const {
  if (cum_interp_.empty()) throw Error("Posterior: finalize() has not run");
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("Posterior::quantile: p must lie in (0, 1)");
  // Inverts the same cumulative the cdf reports, so the two round-trip.  A
  // probability beyond the stored mass lies past the last node; the node
  // range edge is the closest representable answer.
  if (p >= mass_) return nodes.back();
  const double target = p;
  const MonotoneCubic& ci = cum_interp_;
  return find_root([&ci, target](double th) { return ci(th) - target; },
                   Interval(nodes.front(), nodes.back()));
}

double Posterior::total_mass() const {
  if (cum_interp_.empty()) throw Error("Posterior: finalize() has not run");
  return mass_;
}

// ----------------------------------------------------------------------------
// Serialization
// ----------------------------------------------------------------------------

namespace {

nlohmann::json encode_endpoint(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  if (!std::isfinite(v)) throw Error("Posterior: NaN parameter-space endpoint");
  return v;
}

double decode_endpoint(const nlohmann::json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw Error("posterior JSON: bad endpoint token '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

std::string Posterior::to_json() const {
  nlohmann::json j;
  j["family"] = family_label;
  j["factor"] = factor_label;
  j["data"] = data;
  j["nodes"] = nodes;
  j["log_density"] = log_density;
  j["log_eta"] = log_eta;
  j["param_space"] =
      nlohmann::json::array({encode_endpoint(param_space.lo), encode_endpoint(param_space.hi)});
  return j.dump();
}

Posterior Posterior::from_json(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    Posterior p;
    p.family_label = j.at("family").get<std::string>();
    p.factor_label = j.at("factor").get<std::string>();
    p.data = j.at("data").get<std::vector<double>>();
    p.nodes = j.at("nodes").get<std::vector<double>>();
    p.log_density = j.at("log_density").get<std::vector<double>>();
    p.log_eta = j.at("log_eta").get<double>();
    const auto& ps = j.at("param_space");
    p.param_space = Interval(decode_endpoint(ps.at(0)), decode_endpoint(ps.at(1)));
    p.finalize();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("posterior JSON malformed: ") + e.what());
  }
}

// ----------------------------------------------------------------------------
// Builders
// ----------------------------------------------------------------------------

Posterior build_posterior(const DirectFamily& fam, const ConsistencyFactor& factor,
                          const std::vector<double>& data, const BuildOptions& opt) {
  if (fam.dim_param != 1)
    throw std::invalid_argument(
        "build_posterior: one-parameter family required (two-parameter joints "
        "go through build_posterior_2d)");
  if (factor.dim_param != 1)
    throw std::invalid_argument("build_posterior: factor dimension mismatch");
  if (!factor.zeta) throw std::invalid_argument("build_posterior: factor has no zeta");
  for (double x : data)
    if (!std::isfinite(x))
      throw std::invalid_argument("build_posterior: non-finite datum");

  check_trivial_locus(fam, data);
  if (opt.strict) gate_custom_factor(factor, fam.group_label);

  return build_from_log_unnorm(make_log_unnorm(fam, factor, data),
                               fam.param_space[0], opt, fam.label, factor.label,
                               data);
}

Posterior sequential_update(const Posterior& prior, const DirectFamily& fam,
                            double x_new, const BuildOptions& opt) {
  if (fam.dim_param != 1)
    throw std::invalid_argument("sequential_update: one-parameter family required");
  if (!std::isfinite(x_new))
    throw std::invalid_argument("sequential_update: non-finite datum");
  check_trivial_locus(fam, {x_new});

  const auto prior_copy = std::make_shared<Posterior>(prior);
  auto log_unnorm = [prior_copy, fam, x_new](double th) {
    const double lp = prior_copy->log_density_at(th);
    if (lp == -kInf) return -kInf;
    static thread_local std::vector<double> buf(1);
    buf.assign(1, th);
    return lp + fam.log_pdf(x_new, buf);
  };
  Posterior out = build_from_log_unnorm(log_unnorm, prior.param_space, opt,
                                        prior.family_label, prior.factor_label,
                                        prior.data);
  // The step normalizer is the predictive mass of x_new; composing it with
  // the prior's eta reports the full-data normalization.
  out.log_eta += prior.log_eta;
  out.data.push_back(x_new);
  return out;
}

Posterior transform_posterior(const Posterior& post, const MonotoneMap& sbar) {
  if (!sbar.f || !sbar.f_inv || !sbar.df)
    throw std::invalid_argument("transform_posterior: map needs f, f_inv, df");
  const std::size_t n = post.nodes.size();
  if (n < 2) throw std::invalid_argument("transform_posterior: posterior lacks nodes");

  double sign = 0.0;
  for (double x : post.nodes) {
    const double d = sbar.df(x);
    if (!std::isfinite(d) || std::abs(d) < 1e-12)
      throw DerivativeVanishes(
          "transform_posterior: map derivative vanishes on the parameter range");
    const double s = d > 0 ? 1.0 : -1.0;
    if (sign == 0.0)
      sign = s;
    else if (s != sign)
      throw DerivativeVanishes(
          "transform_posterior: map derivative changes sign on the parameter range");
  }
  const bool increasing = sign > 0;

  Posterior out;
  out.nodes.resize(n);
  out.log_density.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = increasing ? i : n - 1 - i;
    out.nodes[i] = sbar.f(post.nodes[k]);
    out.log_density[i] =
        post.log_density[k] - std::log(std::abs(sbar.df(post.nodes[k])));
  }
  for (std::size_t i = 1; i < n; ++i)
    if (!(out.nodes[i] > out.nodes[i - 1]))
      throw DerivativeVanishes(
          "transform_posterior: map is not one-to-one on the parameter range");

  double lo_img = endpoint_image(sbar.f, post.param_space.lo, post.param_space, false);
  double hi_img = endpoint_image(sbar.f, post.param_space.hi, post.param_space, true);
  if (!increasing) std::swap(lo_img, hi_img);
  if (std::isnan(lo_img) || std::isnan(hi_img) || !(lo_img < hi_img))
    throw DerivativeVanishes(
        "transform_posterior: could not map the parameter space endpoints");
  out.param_space = Interval(lo_img, hi_img);
  out.log_eta = post.log_eta;
  out.family_label = post.family_label;
  out.factor_label = post.factor_label;
  out.data = post.data;
  if (post.exact_log_density) {
    const auto base = post.exact_log_density;
    const MonotoneMap map = sbar;
    out.exact_log_density = [base, map](double lam) {
      const double th = map.f_inv(lam);
      const double v = base(th);
      if (v == -kInf) return -kInf;  // off-support before the Jacobian
      return v - std::log(std::abs(map.df(th)));
    };
  }
  out.finalize();
  return out;
}

// ----------------------------------------------------------------------------
// Two-dimensional joint
// ----------------------------------------------------------------------------

namespace {

// Stabilized log integral over sigma of the joint at fixed mu.
double sigma_profile(const std::function<double(double, double)>& log_unnorm2,
                     Interval sigma_space, double mu, int scan, int fine,
                     int eta_scan) {
  auto slice = [&log_unnorm2, mu](double s) { return log_unnorm2(mu, s); };
  const HintWindow w = locate_mass(sigma_space, slice, scan, fine);
  return stabilized_log_eta(slice, sigma_space, w.lo, w.hi, eta_scan);
}

}  // namespace

double Posterior2D::density(double mu, double sigma) const {
  if (!mu_space.contains(mu) || !sigma_space.contains(sigma)) return 0.0;
  if (!exact_log_density) throw Error("Posterior2D: no density closure");
  return std::exp(exact_log_density(mu, sigma));
}

Posterior2D build_posterior_2d(const LocationScaleFamily& fam,
                               const std::vector<double>& data,
                               std::optional<ConsistencyFactor> factor,
                               const BuildOptions2D& opt) {
  const DirectFamily direct = fam.as_direct();
  const ConsistencyFactor zeta =
      factor ? *factor : consistency_factor(FactorKind::joint_location_scale);
  if (zeta.dim_param != 2)
    throw std::invalid_argument("build_posterior_2d: need a two-parameter factor");
  if (!zeta.zeta) throw std::invalid_argument("build_posterior_2d: factor has no zeta");
  for (double x : data)
    if (!std::isfinite(x))
      throw std::invalid_argument("build_posterior_2d: non-finite datum");
  if (opt.strict) gate_custom_factor(zeta, "affine");

  auto log_unnorm2 = [zeta, direct, data](double mu, double sigma) {
    static thread_local std::vector<double> th(2);
    th.assign({mu, sigma});
    double v = safe_log(zeta.zeta(th));
    for (double x : data) {
      if (v == -kInf) break;
      v += direct.log_pdf(x, th);
    }
    return v;
  };

  const Interval mu_space = direct.param_space[0];
  const Interval sigma_space = direct.param_space[1];

  try {
    auto profile = [&](double mu) {
      return sigma_profile(log_unnorm2, sigma_space, mu, opt.inner_scan,
                           opt.inner_fine, opt.eta_scan);
    };
    const HintWindow mw = locate_mass(mu_space, profile, opt.outer_scan, opt.outer_fine);
    const double log_eta =
        stabilized_log_eta(profile, mu_space, mw.lo, mw.hi, opt.eta_scan);
    if (!std::isfinite(log_eta))
      throw PosteriorNotNormalizable(
          "joint normalization integral is not finite-positive");

    // Sigma window: hull of slice windows across the located mu range, so the
    // grid keeps covering the slices that widen away from the mu peak.
    double s_lo = kInf, s_hi = -kInf;
    double sigma_hat = 0.0, sigma_peak_log = -kInf;
    const double probes[5] = {mw.lo, 0.5 * (mw.lo + mw.peak_x), mw.peak_x,
                              0.5 * (mw.peak_x + mw.hi), mw.hi};
    for (double m : probes) {
      auto slice = [&log_unnorm2, m](double s) { return log_unnorm2(m, s); };
      try {
        const HintWindow w =
            locate_mass(sigma_space, slice, 2 * opt.inner_scan, 2 * opt.inner_fine);
        s_lo = std::min(s_lo, w.lo);
        s_hi = std::max(s_hi, w.hi);
        if (w.peak_log > sigma_peak_log) {
          sigma_peak_log = w.peak_log;
          sigma_hat = w.peak_x;
        }
      } catch (const NonFinite&) {
        // Slice vanishes identically at this probe; the hull ignores it.
      }
    }
    if (!(s_lo < s_hi))
      throw PosteriorNotNormalizable("no sigma mass located for the joint");

    Posterior2D p;
    p.mu_nodes = build_grid_window(
        mu_space, mw.lo, mw.hi, opt.mu_nodes,
        [&log_unnorm2, sigma_hat](double m) { return log_unnorm2(m, sigma_hat); },
        512);
    const double mu_hat = mw.peak_x;
    p.sigma_nodes = build_grid_window(
        sigma_space, s_lo, s_hi, opt.sigma_nodes,
        [&log_unnorm2, mu_hat](double s) { return log_unnorm2(mu_hat, s); }, 512);
    p.log_density.resize(p.mu_nodes.size() * p.sigma_nodes.size());
    for (std::size_t i = 0; i < p.mu_nodes.size(); ++i)
      for (std::size_t j = 0; j < p.sigma_nodes.size(); ++j)
        p.log_density[i * p.sigma_nodes.size() + j] =
            log_unnorm2(p.mu_nodes[i], p.sigma_nodes[j]) - log_eta;
    p.log_eta = log_eta;
    p.mu_space = mu_space;
    p.sigma_space = sigma_space;
    p.family_label = fam.label;
    p.factor_label = zeta.label;
    p.data = data;
    p.exact_log_density = [log_unnorm2, log_eta](double mu, double sigma) {
      return log_unnorm2(mu, sigma) - log_eta;
    };
    return p;
  } catch (const NonConvergence& e) {
    throw PosteriorNotNormalizable(
        std::string("joint normalization quadrature diverged: ") + e.what());
  } catch (const NonFinite& e) {
    throw PosteriorNotNormalizable(
        std::string("joint density vanishes or is singular: ") + e.what());
  }
}

double joint_mass(const Posterior2D& post) {
  if (!post.exact_log_density) throw Error("joint_mass: no density closure");
  const auto& joint = post.exact_log_density;
  auto log_inner = [&](double mu) {
    auto slice = [&joint, mu](double s) { return joint(mu, s); };
    return windowed_log_integral(slice, post.sigma_space,
                                 post.sigma_nodes.front(),
                                 post.sigma_nodes.back(), 65);
  };
  return std::exp(windowed_log_integral(log_inner, post.mu_space,
                                        post.mu_nodes.front(),
                                        post.mu_nodes.back(), 65));
}

Posterior marginalize(const Posterior2D& post, Component which,
                      const BuildOptions& opt) {
  if (!post.exact_log_density) throw Error("marginalize: no density closure");
  const auto joint = post.exact_log_density;
  const bool keep_mu = (which == Component::mu);
  const Interval other_space = keep_mu ? post.sigma_space : post.mu_space;
  const double o_lo = keep_mu ? post.sigma_nodes.front() : post.mu_nodes.front();
  const double o_hi = keep_mu ? post.sigma_nodes.back() : post.mu_nodes.back();

  auto log_m = [joint, keep_mu, other_space, o_lo, o_hi](double v) {
    auto slice = [&joint, keep_mu, v](double u) {
      return keep_mu ? joint(v, u) : joint(u, v);
    };
    return stabilized_log_eta(slice, other_space, o_lo, o_hi, 33);
  };

  BuildOptions o = opt;
  o.window = keep_mu
                 ? std::make_pair(post.mu_nodes.front(), post.mu_nodes.back())
                 : std::make_pair(post.sigma_nodes.front(), post.sigma_nodes.back());
  const Interval space = keep_mu ? post.mu_space : post.sigma_space;
  return build_from_log_unnorm(
      log_m, space, o,
      post.family_label + (keep_mu ? "|marginal-mu" : "|marginal-sigma"),
      post.factor_label, post.data);
}

Posterior conditional_from_joint(const Posterior2D& post, Component fixed,
                                 double value, const BuildOptions& opt) {
  if (!post.exact_log_density)
    throw Error("conditional_from_joint: no density closure");
  const Interval fixed_space =
      (fixed == Component::mu) ? post.mu_space : post.sigma_space;
  if (!fixed_space.contains(value))
    throw ZeroMarginal("conditioning value lies outside the parameter space");

  const auto joint = post.exact_log_density;
  const bool fix_mu = (fixed == Component::mu);
  auto slice = [joint, fix_mu, value](double u) {
    return fix_mu ? joint(value, u) : joint(u, value);
  };
  const Interval other_space = fix_mu ? post.sigma_space : post.mu_space;
  const double o_lo = fix_mu ? post.sigma_nodes.front() : post.mu_nodes.front();
  const double o_hi = fix_mu ? post.sigma_nodes.back() : post.mu_nodes.back();

  // The joint is normalized, so this integral is the marginal density at the
  // conditioning value.
  const double log_m = stabilized_log_eta(slice, other_space, o_lo, o_hi, 65);
  if (!(std::exp(log_m) > Tolerance{}.abs))
    throw ZeroMarginal("marginal density below tolerance at the conditioning value");

  return build_from_log_unnorm(
      slice, other_space, opt,
      post.family_label + (fix_mu ? "|conditional-sigma" : "|conditional-mu"),
      post.factor_label, post.data);
}

double product_rule_residual(const LocationScaleFamily& fam,
                             const std::vector<double>& data,
                             std::optional<ConsistencyFactor> joint_factor) {
  BuildOptions2D o2;
  o2.strict = false;  // rival joint weights are allowed in for comparison
  const Posterior2D joint = build_posterior_2d(fam, data, std::move(joint_factor), o2);

  BuildOptions o1;
  o1.grid_nodes = 512;
  o1.place_lattice = 256;
  const Posterior marg_mu = marginalize(joint, Component::mu, o1);
  const Posterior marg_sigma = marginalize(joint, Component::sigma, o1);

  std::vector<double> mu_probes, sigma_probes;
  for (int i = 1; i <= 9; ++i) {
    mu_probes.push_back(marg_mu.quantile(i / 10.0));
    sigma_probes.push_back(marg_sigma.quantile(i / 10.0));
  }

  const ConsistencyFactor scale_factor = consistency_factor(FactorKind::scale);
  double worst = 0.0;
  for (double m : mu_probes) {
    // The conditional given the location is a pure scale problem for the
    // centered data; centering also puts the rescaling fixed point at the
    // pinned location, where it belongs.
    std::vector<double> centered(data);
    for (double& x : centered) x -= m;
    const Posterior cond =
        build_posterior(fam.pin_location(0.0), scale_factor, centered, o1);
    const double fm = marg_mu.density(m);
    for (double s : sigma_probes)
      worst = std::max(worst,
                       std::abs(joint.density(m, s) - cond.density(s) * fm));
  }
  return worst;
}

// ----------------------------------------------------------------------------
// Predictive distribution
// ----------------------------------------------------------------------------

std::function<double(double)> predictive_density(const Posterior& post,
                                                 const DirectFamily& fam) {
  if (fam.dim_param != 1)
    throw std::invalid_argument("predictive_density: one-parameter family required");
  const auto p = std::make_shared<Posterior>(post);
  const DirectFamily f = fam;
  Tolerance tol;
  tol.rel = 1e-8;
  return [p, f, tol](double x) {
    auto lg = [&](double th) {
      const double lp = p->log_density_at(th);
      if (lp == -kInf) return -kInf;
      static thread_local std::vector<double> buf(1);
      buf.assign(1, th);
      return lp + f.log_pdf(x, buf);
    };
    const double v = log_integrate(
        lg, Interval(p->nodes.front(), p->nodes.back()), tol);
    return std::exp(v);
  };
}

double predictive_cdf(const Posterior& post, const DirectFamily& fam, double x) {
  if (fam.dim_param != 1)
    throw std::invalid_argument("predictive_cdf: one-parameter family required");
  Tolerance tol;
  tol.rel = 1e-7;
  auto g = [&](double th) {
    static thread_local std::vector<double> buf(1);
    buf.assign(1, th);
    return post.density(th) * fam.cdf(x, buf);
  };
  const double v =
      integrate(g, Interval(post.nodes.front(), post.nodes.back()), tol);
  return std::clamp(v, 0.0, 1.0);
}

// ----------------------------------------------------------------------------
// Relative invariance of factors
// ----------------------------------------------------------------------------

double factor_functional_residual(const ConsistencyFactor& factor,
                                  const GroupAction& grp,
                                  const std::vector<GroupElement>& elements) {
  if (!factor.zeta)
    throw std::invalid_argument("factor_functional_residual: factor has no zeta");
  if (!grp.act_param)
    throw std::invalid_argument("factor_functional_residual: group lacks act_param");
  const int dim = factor.dim_param;
  if (dim != 1 && dim != 2)
    throw std::invalid_argument("factor_functional_residual: dim_param must be 1 or 2");

  // Probe lattice on the canonical parameter domain of the group: positive
  // coordinates where the group scales, the real line where it shifts.
  auto axis = [&grp](int i) -> std::vector<double> {
    const bool positive =
        (grp.label == "scaling") || (grp.label == "affine" && i == 1);
    if (positive) return {0.35, 0.8, 1.4, 2.5, 4.0};
    return {-2.0, -0.7, 0.4, 1.1, 2.6};
  };
  std::vector<std::vector<double>> thetas;
  if (dim == 1) {
    for (double v : axis(0)) thetas.push_back({v});
  } else {
    for (double a : axis(0))
      for (double b : axis(1)) thetas.push_back({a, b});
  }

  auto det_jacobian = [&grp, dim](const GroupElement& ainv,
                                  const std::vector<double>& th) {
    double J[2][2] = {{0, 0}, {0, 0}};
    for (int j = 0; j < dim; ++j) {
      const double h = fd_step(th[j]);
      std::vector<double> tp = th, tm = th;
      tp[j] += h;
      tm[j] -= h;
      const auto fp = grp.act_param(ainv, tp);
      const auto fm = grp.act_param(ainv, tm);
      for (int i = 0; i < dim; ++i) J[i][j] = (fp[i] - fm[i]) / (2.0 * h);
    }
    return dim == 1 ? J[0][0] : J[0][0] * J[1][1] - J[0][1] * J[1][0];
  };

  double worst = 0.0;
  for (const auto& a : elements) {
    const GroupElement ainv = grp.inverse(a);
    // Pin the multiplier chi(a) at the first probe where everything is
    // positive and finite.
    double chi = std::numeric_limits<double>::quiet_NaN();
    for (const auto& th : thetas) {
      const double z = factor.zeta(th);
      const double zt = factor.zeta(grp.act_param(ainv, th));
      const double dj = std::abs(det_jacobian(ainv, th));
      if (z > 0 && zt > 0 && dj > 0 && std::isfinite(z) && std::isfinite(zt) &&
          std::isfinite(dj)) {
        chi = z / (zt * dj);
        break;
      }
    }
    if (!std::isfinite(chi)) return kInf;
    for (const auto& th : thetas) {
      const double lhs = factor.zeta(th);
      const double rhs = chi * factor.zeta(grp.act_param(ainv, th)) *
                         std::abs(det_jacobian(ainv, th));
      if (!std::isfinite(lhs) || !std::isfinite(rhs)) return kInf;
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

}  // namespace confactor
