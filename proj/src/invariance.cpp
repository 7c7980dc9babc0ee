#include "confactor/invariance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace confactor {

namespace {

// First node of a 33-point interior probe lattice on an interval; used as the
// reproducible default anchor for the reduction maps.
double first_interior_probe(const Interval& c) {
  if (c.finite()) return c.lo + (c.hi - c.lo) / 34.0;
  if (c.lo_finite()) return c.lo + 1.0 / 33.0;
  if (c.hi_finite()) return c.hi - 1.0 / 33.0;
  return std::atanh(-1.0 + 2.0 / 34.0);
}

std::vector<double> interior_probes(const Interval& c, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    if (c.finite()) {
      out[i] = c.lo + (c.hi - c.lo) * (i + 1) / (n + 1);
    } else if (c.lo_finite()) {
      const double u = static_cast<double>(n - i) / (n + 1);
      out[i] = c.lo + (1.0 - u) / u;
    } else if (c.hi_finite()) {
      const double u = static_cast<double>(i + 1) / (n + 1);
      out[i] = c.hi - (1.0 - u) / u;
    } else {
      out[i] = std::atanh(-1.0 + 2.0 * (i + 1) / (n + 1));
    }
  }
  return out;
}

std::vector<std::vector<double>> theta_probes(const DirectFamily& fam, int per_coord) {
  std::vector<std::vector<double>> probes;
  if (fam.dim_param == 1) {
    for (double v : interior_probes(fam.param_space[0], per_coord)) probes.push_back({v});
  } else {
    for (double a : interior_probes(fam.param_space[0], per_coord))
      for (double b : interior_probes(fam.param_space[1], per_coord))
        probes.push_back({a, b});
  }
  return probes;
}

void require_one_dimensional(const GroupAction& grp, const char* who) {
  if (grp.dim != 1)
    throw std::invalid_argument(std::string(who) + ": group must be one-dimensional");
}

// d/dt of the scalar map t -> value(t) at t0 with a one-sided-agreement check.
double checked_identity_derivative(const std::function<double(double)>& value,
                                   double t0, const char* who) {
  const double h = fd_step(t0);
  const double at = value(t0);
  const double fwd = (value(t0 + h) - at) / h;
  const double bwd = (at - value(t0 - h)) / h;
  if (!std::isfinite(fwd) || !std::isfinite(bwd))
    throw NonDifferentiable(std::string(who) + ": non-finite difference at identity");
  const double scale = std::max({1.0, std::abs(fwd), std::abs(bwd)});
  if (std::abs(fwd - bwd) > 0.01 * scale)
    throw NonDifferentiable(std::string(who) +
                            ": one-sided derivatives at the identity disagree");
  return 0.5 * (fwd + bwd);
}

// Parameter-side analogue of action_derivative for scalar lambda.
double param_action_derivative(const GroupAction& grp, double lambda) {
  return checked_identity_derivative(
      [&grp, lambda](double t) {
        return grp.act_param(grp.inverse({t}), {lambda})[0];
      },
      grp.identity[0], "reduction_maps");
}

}  // namespace

// ----------------------------------------------------------------------------
// check_invariance
// ----------------------------------------------------------------------------

double check_invariance(const DirectFamily& fam, const GroupAction& grp,
                        const std::vector<GroupElement>& elements,
                        const std::vector<double>& grid) {
  double worst = 0.0;
  const auto probes = theta_probes(fam, fam.dim_param == 1 ? 5 : 3);
  for (const auto& theta : probes) {
    for (const auto& a : elements) {
      const auto theta_g = grp.act_param(a, theta);
      for (double x : grid) {
        const double xg = grp.act(a, x);
        // Orientation of g_a at x decides the branch of the residual.
        const double slope =
            central_diff([&grp, &a](double t) { return grp.act(a, t); }, x);
        const double lhs = fam.cdf(x, theta);
        const double moved = fam.cdf(xg, theta_g);
        const double rhs = slope >= 0.0 ? moved : 1.0 - moved;
        worst = std::max(worst, std::abs(lhs - rhs));
      }
    }
  }
  return worst;
}

// ----------------------------------------------------------------------------
// action_derivative
// ----------------------------------------------------------------------------

double action_derivative(const GroupAction& grp, double x) {
  require_one_dimensional(grp, "action_derivative");
  const double fd = checked_identity_derivative(
      [&grp, x](double t) { return grp.act(grp.inverse({t}), x); }, grp.identity[0],
      "action_derivative");
  if (grp.exact_action_derivative) {
    const double exact = grp.exact_action_derivative(x);
    if (std::abs(exact - fd) > 1e-5 * std::max(1.0, std::abs(exact)))
      throw NonDifferentiable(
          "action_derivative: supplied closed form disagrees with finite differences");
    return exact;
  }
  return fd;
}

// ----------------------------------------------------------------------------
// trivial_locus
// ----------------------------------------------------------------------------

std::vector<double> trivial_locus(const GroupAction& grp, Interval support,
                                  const std::vector<double>& grid, Tolerance tol) {
  require_one_dimensional(grp, "trivial_locus");
  std::vector<double> found;
  auto deriv = [&grp](double x) { return action_derivative(grp, x); };
  double prev_x = 0.0, prev_d = 0.0;
  bool have_prev = false;
  for (double x : grid) {
    if (!support.contains(x)) continue;
    const double d = deriv(x);
    if (std::abs(d) < tol.abs) {
      found.push_back(x);
    } else if (have_prev && std::abs(prev_d) >= tol.abs && prev_d * d < 0.0) {
      // Sign change between grid neighbours: refine the isolated zero.
      found.push_back(find_root(deriv, Interval(prev_x, x), tol));
    }
    prev_x = x;
    prev_d = d;
    have_prev = true;
  }
  std::sort(found.begin(), found.end());
  std::vector<double> out;
  for (double x : found) {
    if (out.empty() || x - out.back() > 4e-12 * std::max(1.0, std::abs(x)))
      out.push_back(x);
  }
  return out;
}

// ----------------------------------------------------------------------------
// reduction_maps
// ----------------------------------------------------------------------------

namespace {

// Accumulated map t -> sgn * int_{t0}^{t} du / D(u), shared by s and s_bar.
// The path is probed for derivative zeros before integrating.
std::function<double(double)> accumulated_map(std::function<double(double)> D,
                                              double t0, double sgn,
                                              const char* who) {
  const std::string name = who;
  return [D, t0, sgn, name](double t) {
    if (t == t0) return 0.0;
    const double lo = std::min(t, t0), hi = std::max(t, t0);
    const double ref = D(t0);
    for (int k = 0; k <= 32; ++k) {
      const double u = lo + (hi - lo) * k / 32.0;
      const double d = D(u);
      if (d == 0.0 || d * ref < 0.0)
        throw TrivialLocusCrossed(name +
                                  ": integration path meets a trivial-action point");
    }
    const double integral =
        integrate([&D](double u) { return 1.0 / D(u); }, Interval(lo, hi));
    return sgn * (t >= t0 ? integral : -integral);
  };
}

}  // namespace

ReductionMaps reduction_maps(const GroupAction& grp, const DirectFamily& fam,
                             std::optional<double> x0, std::optional<double> theta0) {
  require_one_dimensional(grp, "reduction_maps");
  if (fam.dim_param != 1)
    throw std::invalid_argument("reduction_maps: family must have a scalar parameter");

  std::vector<double> probe_theta{theta0.value_or(first_interior_probe(fam.param_space[0]))};
  const double anchor_x = x0.value_or(first_interior_probe(fam.support(probe_theta)));
  const double anchor_l = probe_theta[0];

  auto D = [grp](double x) { return action_derivative(grp, x); };
  auto Dbar = [grp](double l) { return param_action_derivative(grp, l); };

  const double d0 = D(anchor_x);
  if (!(std::abs(d0) > 0.0))
    throw TrivialLocusCrossed("reduction_maps: x0 lies on the trivial-action locus");
  const double sgn = d0 > 0.0 ? 1.0 : -1.0;

  const double dbar0 = Dbar(anchor_l);
  if (!(std::abs(dbar0) > 0.0))
    throw TrivialLocusCrossed("reduction_maps: theta0 has trivial induced action");
  const double sgn_bar = dbar0 > 0.0 ? 1.0 : -1.0;

  ReductionMaps maps;
  maps.s = accumulated_map(D, anchor_x, sgn, "reduction_maps");
  maps.ds = [D, sgn](double x) { return sgn / D(x); };
  maps.s_bar = accumulated_map(Dbar, anchor_l, sgn_bar, "reduction_maps");
  maps.ds_bar = [Dbar, sgn_bar](double l) { return sgn_bar / Dbar(l); };
  maps.branch = d0 < 0.0 ? +1 : -1;
  return maps;
}

// ----------------------------------------------------------------------------
// check_H_form
// ----------------------------------------------------------------------------

namespace {

// Solve s(x) = target inside the support by expanding a bracket around start.
std::optional<double> invert_monotone(const std::function<double(double)>& s,
                                      double target, double start, Interval sup) {
  auto g = [&s, target](double x) { return s(x) - target; };
  double lo = start, hi = start;
  double step = std::max(1.0, 0.5 * std::abs(start));
  for (int k = 0; k < 200 && g(hi) < 0.0; ++k) {
    if (sup.hi_finite()) {
      hi = sup.hi - (sup.hi - hi) / 2.0;
    } else {
      hi += step;
      step *= 2.0;
    }
    if (k == 199) return std::nullopt;
  }
  step = std::max(1.0, 0.5 * std::abs(start));
  for (int k = 0; k < 200 && g(lo) > 0.0; ++k) {
    if (sup.lo_finite()) {
      lo = sup.lo + (lo - sup.lo) / 2.0;
    } else {
      lo -= step;
      step *= 2.0;
    }
    if (k == 199) return std::nullopt;
  }
  if (g(lo) > 0.0 || g(hi) < 0.0) return std::nullopt;
  if (lo == hi) return lo;
  return find_root(g, Interval(lo, hi), {});
}

}  // namespace

double check_H_form(const DirectFamily& fam, const ReductionMaps& maps,
                    const std::vector<double>& grid) {
  if (fam.dim_param != 1)
    throw std::invalid_argument("check_H_form: family must have a scalar parameter");
  const auto lambdas = interior_probes(fam.param_space[0], 5);
  double worst = 0.0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double l = lambdas[i];
    const double lp = lambdas[(i + 1) % lambdas.size()];
    const double sb_l = maps.s_bar(l), sb_lp = maps.s_bar(lp);
    const Interval sup = fam.support({lp});
    for (double x : grid) {
      if (!fam.support({l}).contains(x)) continue;
      // Matched partner: s(x') - s_bar(l') = s(x) - s_bar(l).
      const double target = maps.s(x) - sb_l + sb_lp;
      const auto xp = invert_monotone(maps.s, target, x, sup);
      if (!xp) continue;
      worst = std::max(worst, std::abs(fam.cdf(x, {l}) - fam.cdf(*xp, {lp})));
    }
  }
  return worst;
}

// ----------------------------------------------------------------------------
// Registry
// ----------------------------------------------------------------------------

const GroupAction& group_by_label(const std::string& label) {
  static const std::map<std::string, GroupAction> groups = [] {
    std::map<std::string, GroupAction> m;

    GroupAction tr;
    tr.label = "translation";
    tr.dim = 1;
    tr.act = [](const GroupElement& a, double x) { return x + a[0]; };
    tr.act_param = [](const GroupElement& a, const std::vector<double>& th) {
      auto out = th;
      out[0] += a[0];
      return out;
    };
    tr.compose = [](const GroupElement& a, const GroupElement& b) {
      return GroupElement{a[0] + b[0]};
    };
    tr.inverse = [](const GroupElement& a) { return GroupElement{-a[0]}; };
    tr.identity = {0.0};
    tr.element_space = {Interval::whole()};
    tr.exact_action_derivative = [](double) { return -1.0; };
    m["translation"] = tr;

    GroupAction sc;
    sc.label = "scaling";
    sc.dim = 1;
    sc.act = [](const GroupElement& a, double x) { return a[0] * x; };
    sc.act_param = [](const GroupElement& a, const std::vector<double>& th) {
      auto out = th;
      for (auto& v : out) v *= a[0];
      return out;
    };
    sc.compose = [](const GroupElement& a, const GroupElement& b) {
      return GroupElement{a[0] * b[0]};
    };
    sc.inverse = [](const GroupElement& a) { return GroupElement{1.0 / a[0]}; };
    sc.identity = {1.0};
    sc.element_space = {Interval::positive()};
    sc.exact_action_derivative = [](double x) { return -x; };
    m["scaling"] = sc;

    GroupAction af;
    af.label = "affine";
    af.dim = 2;
    af.act = [](const GroupElement& a, double x) { return a[1] * x + a[0]; };
    af.act_param = [](const GroupElement& a, const std::vector<double>& th) {
      std::vector<double> out = th;
      out[0] = a[1] * th[0] + a[0];
      if (th.size() > 1) out[1] = a[1] * th[1];
      return out;
    };
    af.compose = [](const GroupElement& a, const GroupElement& b) {
      return GroupElement{a[1] * b[0] + a[0], a[1] * b[1]};
    };
    af.inverse = [](const GroupElement& a) {
      return GroupElement{-a[0] / a[1], 1.0 / a[1]};
    };
    af.identity = {0.0, 1.0};
    af.element_space = {Interval::whole(), Interval::positive()};
    m["affine"] = af;

    return m;
  }();
  const auto it = groups.find(label);
  if (it == groups.end())
    throw std::invalid_argument("group_by_label: unknown group '" + label + "'");
  return it->second;
}

std::vector<std::string> group_labels() { return {"translation", "scaling", "affine"}; }

}  // namespace confactor
