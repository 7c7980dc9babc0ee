#include "confactor/families.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <stdexcept>

namespace confactor {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2 pi)/2

double normal_log_pdf(double u) { return -0.5 * u * u - kHalfLog2Pi; }
double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

double cauchy_log_pdf(double u) { return -std::log(std::numbers::pi) - std::log1p(u * u); }
double cauchy_cdf(double u) { return 0.5 + std::atan(u) / std::numbers::pi; }

double logistic_log_pdf(double u) {
  // Symmetric in u; the |u| form avoids overflow of exp(u).
  const double a = std::abs(u);
  return -a - 2.0 * std::log1p(std::exp(-a));
}
double logistic_cdf(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double exponential_log_pdf(double u) { return u > 0.0 ? -u : -kInf; }
double exponential_cdf(double u) { return u > 0.0 ? -std::expm1(-u) : 0.0; }

// Expand a finite bracket around the target quantile.  Starts from an
// interior anchor and doubles the distance toward any infinite support
// endpoint until the cdf brackets p.
Interval quantile_bracket(const DirectFamily& fam, double p,
                          const std::vector<double>& theta) {
  const Interval sup = fam.support(theta);
  double lo, hi;
  if (sup.lo_finite() && sup.hi_finite()) return sup;
  const double anchor = sup.finite()      ? 0.5 * (sup.lo + sup.hi)
                        : sup.lo_finite() ? sup.lo + 1.0
                        : sup.hi_finite() ? sup.hi - 1.0
                                          : 0.0;
  lo = hi = anchor;
  double step = 1.0;
  for (int k = 0; k < 1200 && fam.cdf(lo, theta) >= p; ++k) {
    if (sup.lo_finite()) {
      lo = sup.lo + (lo - sup.lo) / 2.0;  // halve the distance to the endpoint
    } else {
      lo -= step;
      step *= 2.0;
    }
  }
  step = 1.0;
  for (int k = 0; k < 1200 && fam.cdf(hi, theta) <= p; ++k) {
    if (sup.hi_finite()) {
      hi = sup.hi - (sup.hi - hi) / 2.0;
    } else {
      hi += step;
      step *= 2.0;
    }
  }
  return Interval(lo, hi);
}

}  // namespace

double DirectFamily::pdf(double x, const std::vector<double>& theta) const {
  return std::exp(log_pdf(x, theta));
}

double DirectFamily::quantile(double p, const std::vector<double>& theta,
                              Tolerance tol) const {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("quantile: p must lie strictly inside (0,1)");
  const Interval bracket = quantile_bracket(*this, p, theta);
  return find_root([this, p, &theta](double x) { return cdf(x, theta) - p; }, bracket,
                   tol);
}

// ----------------------------------------------------------------------------
// Location-scale construction
// ----------------------------------------------------------------------------

namespace {

Interval shifted_support(const Interval& base, double mu, double sigma) {
  const double lo = base.lo_finite() ? mu + sigma * base.lo : -kInf;
  const double hi = base.hi_finite() ? mu + sigma * base.hi : kInf;
  return Interval(lo, hi);
}

}  // namespace

DirectFamily LocationScaleFamily::as_direct() const {
  DirectFamily d;
  d.label = label;
  d.dim_param = 2;
  d.param_space = {Interval::whole(), Interval::positive()};
  d.group_label = "affine";
  const auto logphi = base_log_pdf;
  const auto Phi = base_cdf;
  const Interval base = base_support;
  d.log_pdf = [logphi](double x, const std::vector<double>& th) {
    const double sigma = th[1];
    if (!(sigma > 0.0)) return -kInf;
    return logphi((x - th[0]) / sigma) - std::log(sigma);
  };
  d.cdf = [Phi](double x, const std::vector<double>& th) {
    return Phi((x - th[0]) / th[1]);
  };
  d.support = [base](const std::vector<double>& th) {
    return shifted_support(base, th[0], th[1]);
  };
  return d;
}

DirectFamily LocationScaleFamily::pin_location(double mu) const {
  DirectFamily d;
  d.label = label + "-scale";
  d.dim_param = 1;
  d.param_space = {Interval::positive()};
  d.group_label = "scaling";
  const auto logphi = base_log_pdf;
  const auto Phi = base_cdf;
  const Interval base = base_support;
  d.log_pdf = [logphi, mu](double x, const std::vector<double>& th) {
    const double sigma = th[0];
    if (!(sigma > 0.0)) return -kInf;
    return logphi((x - mu) / sigma) - std::log(sigma);
  };
  d.cdf = [Phi, mu](double x, const std::vector<double>& th) {
    return Phi((x - mu) / th[0]);
  };
  d.support = [base, mu](const std::vector<double>& th) {
    return shifted_support(base, mu, th[0]);
  };
  return d;
}

DirectFamily LocationScaleFamily::pin_scale(double sigma) const {
  if (!(sigma > 0.0)) throw std::invalid_argument("pin_scale: sigma must be positive");
  DirectFamily d;
  d.label = label + "-location";
  d.dim_param = 1;
  d.param_space = {Interval::whole()};
  d.group_label = "translation";
  const auto logphi = base_log_pdf;
  const auto Phi = base_cdf;
  const Interval base = base_support;
  d.log_pdf = [logphi, sigma](double x, const std::vector<double>& th) {
    return logphi((x - th[0]) / sigma) - std::log(sigma);
  };
  d.cdf = [Phi, sigma](double x, const std::vector<double>& th) {
    return Phi((x - th[0]) / sigma);
  };
  d.support = [base, sigma](const std::vector<double>& th) {
    return shifted_support(base, th[0], sigma);
  };
  return d;
}

// ----------------------------------------------------------------------------
// transform_variable
// ----------------------------------------------------------------------------

namespace {

// Numeric image of a support endpoint under a monotone map.  Direct
// evaluation is used where defined; otherwise the endpoint is approached
// along a geometric sequence, returning the limit when the values settle
// and the signed infinity when they keep running.
double mapped_endpoint(const MonotoneMap& s, const Interval& sup, bool lower) {
  if (lower ? sup.lo_finite() : sup.hi_finite()) {
    const double end = lower ? sup.lo : sup.hi;
    const double direct = s.f(end);
    if (!std::isnan(direct)) return direct;  // finite, or the infinity itself
    const double inward = lower ? 1.0 : -1.0;
    double dist = sup.finite() ? 0.5 * (sup.hi - sup.lo) : 1.0;
    double prev = s.f(end + inward * dist);
    for (int k = 0; k < 120; ++k) {
      dist *= 0.25;
      const double v = s.f(end + inward * dist);
      if (std::isnan(v)) break;
      if (std::isinf(v)) return v;
      if (std::abs(v - prev) <= 1e-10 * std::max(1.0, std::abs(v))) return v;
      prev = v;
    }
    return prev > 0 ? kInf : -kInf;
  }
  // Infinite endpoint: march outward until the values settle or diverge.
  double x = lower ? -1.0 : 1.0;
  double prev = s.f(x);
  for (int k = 0; k < 60; ++k) {
    x *= 4.0;
    const double v = s.f(x);
    if (std::isnan(v)) break;
    if (std::isinf(v)) return v;
    if (std::abs(v - prev) <= 1e-10 * std::max(1.0, std::abs(v))) return v;
    prev = v;
  }
  return prev > 0 ? kInf : -kInf;
}

}  // namespace

DirectFamily transform_variable(const DirectFamily& fam, const MonotoneMap& s) {
  // Probe the derivative across a representative support before accepting.
  std::vector<double> theta0;
  for (const Interval& c : fam.param_space)
    theta0.push_back(c.contains(1.0) ? 1.0 : (c.contains(0.0) ? 0.0 : 0.5 * (c.lo + c.hi)));
  const Interval sup = fam.support(theta0);
  std::vector<double> probes;
  if (sup.finite()) {
    for (int i = 1; i <= 33; ++i)
      probes.push_back(sup.lo + (sup.hi - sup.lo) * i / 34.0);  // interior only
  } else {
    probes = build_grid_log(sup, 33, {});
  }
  double orientation = 0.0;
  for (double x : probes) {
    const double d = s.df(x);
    if (!std::isfinite(d) || std::abs(d) < 1e-12)
      throw DerivativeVanishes("transform_variable: map derivative vanishes on support");
    if (orientation == 0.0) orientation = d > 0 ? 1.0 : -1.0;
    if ((d > 0 ? 1.0 : -1.0) != orientation)
      throw DerivativeVanishes("transform_variable: map is not monotone on support");
  }
  const bool increasing = orientation > 0;

  DirectFamily out;
  out.label = fam.label + "|transformed";
  out.dim_param = fam.dim_param;
  out.param_space = fam.param_space;
  out.group_label.clear();  // the natural group does not survive a generic map
  const auto base_log_pdf = fam.log_pdf;
  const auto base_cdf = fam.cdf;
  const auto base_support = fam.support;
  out.log_pdf = [base_log_pdf, s](double y, const std::vector<double>& th) {
    const double x = s.f_inv(y);
    const double slope = s.df(x);
    if (!std::isfinite(x) || slope == 0.0) return -kInf;
    return base_log_pdf(x, th) - std::log(std::abs(slope));
  };
  out.cdf = [base_cdf, s, increasing](double y, const std::vector<double>& th) {
    const double x = s.f_inv(y);
    return increasing ? base_cdf(x, th) : 1.0 - base_cdf(x, th);
  };
  out.support = [base_support, s, increasing](const std::vector<double>& th) {
    const Interval b = base_support(th);
    const double lo_img = mapped_endpoint(s, b, true);
    const double hi_img = mapped_endpoint(s, b, false);
    return increasing ? Interval(lo_img, hi_img) : Interval(hi_img, lo_img);
  };
  return out;
}

double sample(const DirectFamily& fam, const std::vector<double>& theta,
              RandomStream& stream) {
  return fam.quantile(stream.next_canonical(), theta);
}

// ----------------------------------------------------------------------------
// Signed split and the scale-to-location reduction
// ----------------------------------------------------------------------------

SignedSplit signed_split(const LocationScaleFamily& fam) {
  SignedSplit out;
  const auto logphi = fam.base_log_pdf;
  auto phi = [logphi](double u) { return std::exp(logphi(u)); };
  const Interval sup = fam.base_support;
  const double pos_lo = std::max(0.0, sup.lo);
  const double neg_hi = std::min(0.0, sup.hi);
  out.c_plus = (sup.hi > 0.0) ? integrate(phi, Interval(pos_lo, sup.hi)) : 0.0;
  out.c_minus = (sup.lo < 0.0) ? integrate(phi, Interval(sup.lo, neg_hi)) : 0.0;

  const double c_at_zero = fam.base_cdf(0.0);
  if (out.c_plus > 0.0) {
    LocationScaleFamily plus;
    plus.label = fam.label + "+";
    const double c = out.c_plus;
    plus.base_log_pdf = [logphi, c](double u) {
      return u > 0.0 ? logphi(u) - std::log(c) : -kInf;
    };
    const auto Phi = fam.base_cdf;
    plus.base_cdf = [Phi, c, c_at_zero](double u) {
      return u > 0.0 ? std::clamp((Phi(u) - c_at_zero) / c, 0.0, 1.0) : 0.0;
    };
    plus.base_support = Interval(std::max(0.0, sup.lo), sup.hi);
    out.family_plus = plus;
  }
  if (out.c_minus > 0.0) {
    LocationScaleFamily minus;
    minus.label = fam.label + "-";
    const double c = out.c_minus;
    minus.base_log_pdf = [logphi, c](double u) {
      return u < 0.0 ? logphi(u) - std::log(c) : -kInf;
    };
    const auto Phi = fam.base_cdf;
    minus.base_cdf = [Phi, c](double u) {
      return u < 0.0 ? std::clamp(Phi(u) / c, 0.0, 1.0) : 1.0;
    };
    minus.base_support = Interval(sup.lo, std::min(0.0, sup.hi));
    out.family_minus = minus;
  }
  return out;
}

DirectFamily reduce_scale_to_location(const SignedSplit& split, int sign) {
  if (sign != 1 && sign != -1)
    throw std::invalid_argument("reduce_scale_to_location: sign must be +1 or -1");
  const auto& side = (sign > 0) ? split.family_plus : split.family_minus;
  const double c = (sign > 0) ? split.c_plus : split.c_minus;
  if (!side || !(c > 0.0))
    throw EmptySide("reduce_scale_to_location: requested side carries no mass");

  const auto logphi = side->base_log_pdf;
  const auto Phi = side->base_cdf;

  DirectFamily d;
  d.label = side->label + "|log";
  d.dim_param = 1;
  d.param_space = {Interval::whole()};  // lambda_1 = log sigma ranges over R
  d.group_label = "translation";
  d.log_pdf = [logphi, sign](double y, const std::vector<double>& lam) {
    const double t = y - lam[0];
    if (t > 700.0) return -kInf;  // e^t overflows; the density is long gone
    return t + logphi(sign * std::exp(t));
  };
  if (sign > 0) {
    d.cdf = [Phi](double y, const std::vector<double>& lam) {
      const double t = y - lam[0];
      return t > 700.0 ? 1.0 : Phi(std::exp(t));
    };
  } else {
    // y = log(-(x - mu)) reverses orientation: large y means small x.
    d.cdf = [Phi](double y, const std::vector<double>& lam) {
      const double t = y - lam[0];
      return t > 700.0 ? 1.0 : 1.0 - Phi(-std::exp(t));
    };
  }
  d.support = [](const std::vector<double>&) { return Interval::whole(); };
  return d;
}

// ----------------------------------------------------------------------------
// Validation
// ----------------------------------------------------------------------------

namespace {

std::vector<std::vector<double>> probe_thetas(const DirectFamily& fam) {
  std::vector<std::vector<double>> probes;
  auto component_probes = [](const Interval& c) -> std::vector<double> {
    if (c.finite()) {
      const double w = c.hi - c.lo;
      return {c.lo + 0.25 * w, c.lo + 0.5 * w, c.lo + 0.75 * w};
    }
    if (c.lo_finite()) return {c.lo + 0.5, c.lo + 1.0, c.lo + 2.5};
    if (c.hi_finite()) return {c.hi - 2.5, c.hi - 1.0, c.hi - 0.5};
    return {-1.0, 0.0, 1.5};
  };
  if (fam.dim_param == 1) {
    for (double v : component_probes(fam.param_space[0])) probes.push_back({v});
  } else {
    for (double a : component_probes(fam.param_space[0]))
      for (double b : component_probes(fam.param_space[1])) probes.push_back({a, b});
  }
  return probes;
}

}  // namespace

void validate_family(const DirectFamily& fam) {
  if (fam.dim_param != 1 && fam.dim_param != 2)
    throw std::invalid_argument("validate_family: dim_param must be 1 or 2");
  if (static_cast<int>(fam.param_space.size()) != fam.dim_param)
    throw std::invalid_argument("validate_family: param_space size mismatch");

  const auto probes = probe_thetas(fam);
  for (const auto& th : probes) {
    const Interval sup = fam.support(th);
    // Unit mass.
    const double mass =
        integrate([&](double x) { return fam.pdf(x, th); }, sup);
    if (std::abs(mass - 1.0) > 1e-8)
      throw Error("validate_family: pdf of '" + fam.label +
                  "' does not integrate to 1 (got " + std::to_string(mass) + ")");
    // Monotone cdf with the right limits, probed on a mass-aware grid.
    const auto grid = build_grid_log(
        sup, 512, [&](double x) { return fam.log_pdf(x, th); });
    double prev = -1.0;
    for (double x : grid) {
      const double c = fam.cdf(x, th);
      if (c < prev - 1e-12)
        throw Error("validate_family: cdf of '" + fam.label + "' is not monotone");
      prev = std::max(prev, c);
    }
    if (fam.cdf(grid.front(), th) > 1e-6 || fam.cdf(grid.back(), th) < 1.0 - 1e-6)
      throw Error("validate_family: cdf limits of '" + fam.label + "' are off");
    // d/dx cdf == pdf at interior probes carrying mass.
    for (std::size_t i = grid.size() / 4; i < grid.size(); i += grid.size() / 4) {
      const double x = grid[i];
      const double p = fam.pdf(x, th);
      if (p < 1e-8) continue;
      const double d = central_diff([&](double t) { return fam.cdf(t, th); }, x);
      if (std::abs(d - p) > 1e-6 * std::max(1.0, p))
        throw Error("validate_family: cdf derivative of '" + fam.label +
                    "' disagrees with pdf");
    }
  }
  // Identifiability: distinct parameters must move the cdf somewhere.
  for (std::size_t i = 0; i < probes.size(); ++i) {
    for (std::size_t j = i + 1; j < probes.size(); ++j) {
      const auto grid = build_grid_log(fam.support(probes[i]), 64, {});
      double diff = 0.0;
      for (double x : grid)
        diff = std::max(diff, std::abs(fam.cdf(x, probes[i]) - fam.cdf(x, probes[j])));
      if (!(diff > 1e-12))
        throw NotIdentifiable("validate_family: '" + fam.label +
                              "' has indistinguishable parameter points");
    }
  }
}

// ----------------------------------------------------------------------------
// Registry
// ----------------------------------------------------------------------------

const LocationScaleFamily& base_family(const std::string& label) {
  static const std::map<std::string, LocationScaleFamily> bases = [] {
    std::map<std::string, LocationScaleFamily> m;
    m["normal"] = {"normal", normal_log_pdf, normal_cdf, Interval::whole()};
    m["cauchy"] = {"cauchy", cauchy_log_pdf, cauchy_cdf, Interval::whole()};
    m["logistic"] = {"logistic", logistic_log_pdf, logistic_cdf, Interval::whole()};
    m["exponential"] = {"exponential", exponential_log_pdf, exponential_cdf,
                        Interval::positive()};
    return m;
  }();
  const auto it = bases.find(label);
  if (it == bases.end())
    throw std::invalid_argument("base_family: unknown base '" + label + "'");
  return it->second;
}

std::vector<std::string> family_labels() {
  return {"normal",   "normal-location",   "normal-scale",
          "cauchy",   "cauchy-location",   "cauchy-scale",
          "logistic", "logistic-location", "logistic-scale",
          "exponential-scale"};
}

DirectFamily family_by_label(const std::string& label, std::optional<double> pin) {
  const auto ends_with = [&label](const char* suffix) {
    const std::string s = suffix;
    return label.size() > s.size() &&
           label.compare(label.size() - s.size(), s.size(), s) == 0;
  };
  DirectFamily fam;
  if (ends_with("-location")) {
    fam = base_family(label.substr(0, label.size() - 9)).pin_scale(pin.value_or(1.0));
  } else if (ends_with("-scale")) {
    fam = base_family(label.substr(0, label.size() - 6)).pin_location(pin.value_or(0.0));
  } else {
    fam = base_family(label).as_direct();
  }
  // Smoke-check each label the first time it is served.
  static std::mutex mu;
  static std::set<std::string> validated;
  std::lock_guard<std::mutex> lock(mu);
  if (!validated.count(label)) {
    validate_family(fam);
    validated.insert(label);
  }
  return fam;
}

}  // namespace confactor
