#include "confactor/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace confactor {

namespace {

// --------------------------------------------------------------------------
// Gauss-Kronrod 7/15 rule on [-1, 1].  The 7-point Gauss nodes are the
// odd-indexed Kronrod nodes; the difference between the two estimates drives
// the adaptive subdivision.
// --------------------------------------------------------------------------
constexpr double kGkNode[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};
constexpr double kWk[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};
constexpr double kWg[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct GkEstimate {
  double value = 0;
  double error = 0;
};

GkEstimate gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double fv[15];
  for (int i = 0; i < 7; ++i) {
    fv[i] = f(c - h * kGkNode[i]);
    fv[14 - i] = f(c + h * kGkNode[i]);
  }
  fv[7] = f(c);
  double kron = 0, gauss = 0;
  for (int i = 0; i < 7; ++i) kron += kWk[i] * (fv[i] + fv[14 - i]);
  kron += kWk[7] * fv[7];
  for (int i = 0; i < 3; ++i) gauss += kWg[i] * (fv[2 * i + 1] + fv[13 - 2 * i]);
  gauss += kWg[3] * fv[7];
  GkEstimate e;
  e.value = kron * h;
  e.error = std::abs((kron - gauss) * h);
  if (!std::isfinite(e.value)) throw NonFinite("integrate: non-finite integrand value");
  return e;
}

struct Segment {
  double a, b;
  GkEstimate est;
  int depth;
  bool operator<(const Segment& o) const { return est.error < o.est.error; }
};

// Adaptive integration of f over the finite interval (a, b).
double adaptive_finite(const std::function<double(double)>& f, double a, double b,
                       const Tolerance& tol, int initial_segments = 8) {
  if (a == b) return 0.0;
  std::priority_queue<Segment> queue;
  double value = 0, error = 0;
  const double step = (b - a) / initial_segments;
  for (int i = 0; i < initial_segments; ++i) {
    const double sa = a + i * step;
    const double sb = (i + 1 == initial_segments) ? b : a + (i + 1) * step;
    Segment s{sa, sb, gk15(f, sa, sb), 0};
    value += s.est.value;
    error += s.est.error;
    queue.push(s);
  }
  long evaluations = initial_segments;
  while (error > std::max(tol.abs, tol.rel * std::abs(value))) {
    if (queue.empty()) break;
    Segment worst = queue.top();
    queue.pop();
    if (worst.depth >= tol.max_subdivisions)
      throw NonConvergence("integrate: subdivision budget exhausted");
    if (++evaluations > 200000)
      throw NonConvergence("integrate: segment budget exhausted");
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {
      // Interval at machine resolution: accept the current estimate as final.
      continue;
    }
    Segment left{worst.a, mid, gk15(f, worst.a, mid), worst.depth + 1};
    Segment right{mid, worst.b, gk15(f, mid, worst.b), worst.depth + 1};
    value += left.est.value + right.est.value - worst.est.value;
    error += left.est.error + right.est.error - worst.est.error;
    queue.push(left);
    queue.push(right);
  }
  return value;
}

// f mapped onto (0,1] for a half-line (base, +/-inf): t = (1-u)/u is the
// distance from the finite endpoint, dx = dt = du / u^2.
std::function<double(double)> half_line_integrand(
    const std::function<double(double)>& f, double base, double direction) {
  return [f, base, direction](double u) {
    const double t = (1.0 - u) / u;
    const double x = base + direction * t;
    const double fx = f(x);
    if (fx == 0.0) return 0.0;  // avoid 0 * inf at the far end
    return fx / (u * u);
  };
}

}  // namespace

double integrate(const std::function<double(double)>& f, Interval domain, Tolerance tol) {
  if (domain.finite()) return adaptive_finite(f, domain.lo, domain.hi, tol);
  // Split tolerance between the two pieces of compound domains.
  Tolerance half = tol;
  half.abs = 0.5 * tol.abs;
  if (domain.lo_finite()) {  // (lo, +inf)
    return adaptive_finite(half_line_integrand(f, domain.lo, +1.0), 0.0, 1.0, tol);
  }
  if (domain.hi_finite()) {  // (-inf, hi)
    return adaptive_finite(half_line_integrand(f, domain.hi, -1.0), 0.0, 1.0, tol);
  }
  // Whole line: two half-lines joined at 0.
  const double left = adaptive_finite(half_line_integrand(f, 0.0, -1.0), 0.0, 1.0, half);
  const double right = adaptive_finite(half_line_integrand(f, 0.0, +1.0), 0.0, 1.0, half);
  return left + right;
}

double log_integrate(const std::function<double(double)>& log_f, Interval domain,
                     Tolerance tol, int scan_points) {
  if (!domain.finite())
    throw std::invalid_argument("log_integrate: domain must be finite");
  // Locate the scale of the integrand so the exponentials stay in range.  The
  // lattice includes both endpoints: steep integrands peak there, and a
  // midpoint-only scan can sit hundreds of log units below the supremum.
  double shift = -kInf;
  auto probe = [&log_f, &shift](double x) {
    const double v = log_f(x);
    if (std::isnan(v)) throw NonFinite("log_integrate: NaN log-integrand");
    if (v == kInf) throw NonFinite("log_integrate: +inf log-integrand");
    shift = std::max(shift, v);
  };
  probe(domain.lo);
  probe(domain.hi);
  for (int i = 0; i < scan_points; ++i)
    probe(domain.lo + (domain.hi - domain.lo) * (i + 0.5) / scan_points);
  if (shift == -kInf) return -kInf;

  // The lattice can still miss a narrow interior spike, so exp(v - shift)
  // is clamped and the observed maximum tracked; whenever the clamp could
  // have engaged, the integral is redone with the corrected shift.  Each redo
  // pins the location of the offending maximum onto a segment boundary:
  // otherwise the retry could place all its quadrature nodes away from the
  // spike, see a flat underflowed integrand, and accept a value that misses
  // the very feature that forced the rescale.
  std::vector<double> cuts;
  for (int attempt = 0; attempt < 12; ++attempt) {
    double observed = shift;
    double observed_at = domain.lo;
    auto g = [&log_f, &observed, &observed_at, shift](double x) {
      const double v = log_f(x);
      if (std::isnan(v)) throw NonFinite("log_integrate: NaN log-integrand");
      if (v > observed) {
        observed = v;
        observed_at = x;
      }
      const double arg = v - shift;
      return std::exp(arg > 600.0 ? 600.0 : arg);
    };
    double value = 0.0;
    double prev = domain.lo;
    for (double c : cuts) {
      value += adaptive_finite(g, prev, c, tol);
      prev = c;
    }
    value += adaptive_finite(g, prev, domain.hi, tol);
    if (observed <= shift + 600.0) {
      if (!(value > 0.0)) return -kInf;
      return shift + std::log(value);
    }
    shift = observed;
    if (observed_at > domain.lo && observed_at < domain.hi) {
      const auto pos = std::lower_bound(cuts.begin(), cuts.end(), observed_at);
      if (pos == cuts.end() || *pos != observed_at) cuts.insert(pos, observed_at);
    }
  }
  throw NonConvergence("log_integrate: integrand scale did not stabilize");
}

double find_root(const std::function<double(double)>& g, Interval bracket, Tolerance tol) {
  if (!bracket.finite())
    throw NoSignChange("find_root: bracket endpoints must be finite");
  double a = bracket.lo, b = bracket.hi;
  double fa = g(a), fb = g(b);
  if (!std::isfinite(fa) || !std::isfinite(fb))
    throw NonFinite("find_root: non-finite value at bracket endpoint");
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0) == (fb > 0))
    throw NoSignChange("find_root: no sign change over bracket");

  double x = a, fx = fa;
  int side = 0;  // which endpoint the previous iteration replaced
  for (int iter = 0; iter < 200; ++iter) {
    // False-position proposal with the Illinois anti-stall correction: two
    // consecutive updates of the same endpoint halve the opposite weight, so
    // a long flat stretch cannot pin the bracket.  Proposals landing within
    // 1% of an endpoint are demoted to bisection.
    double cand = b - fb * (b - a) / (fb - fa);
    const double width = b - a;
    if (!(cand > a + 0.01 * width && cand < b - 0.01 * width))
      cand = a + 0.5 * width;
    x = cand;
    fx = g(x);
    if (!std::isfinite(fx)) throw NonFinite("find_root: non-finite value inside bracket");
    if (std::abs(fx) <= tol.abs) return x;
    if ((fx > 0) == (fa > 0)) {
      a = x;
      fa = fx;
      if (side == -1) fb *= 0.5;
      side = -1;
    } else {
      b = x;
      fb = fx;
      if (side == +1) fa *= 0.5;
      side = +1;
    }
    const double scale = std::max(std::abs(a), std::abs(b));
    if (b - a <= tol.rel * scale + 4.0 * std::numeric_limits<double>::epsilon() * scale)
      return 0.5 * (a + b);
  }
  throw NonConvergence("find_root: iteration budget exhausted");
}

double fd_step(double x) {
  static const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
  double h = h0 * std::max(1.0, std::abs(x));
  // Make the step exactly representable around x.
  volatile double xh = x + h;
  return xh - x;
}

double central_diff(const std::function<double(double)>& f, double x) {
  const double h = fd_step(x);
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double safe_log(double v) {
  if (v == 0.0) return -kInf;
  if (!(v > 0.0) || !std::isfinite(v))
    throw NonFinite("safe_log: value not a finite nonnegative number");
  return std::log(v);
}

// ----------------------------------------------------------------------------
// RandomStream: PCG XSL-RR 128/64.
// ----------------------------------------------------------------------------
namespace {
constexpr unsigned __int128 pcg_mult() {
  return ((static_cast<unsigned __int128>(0x2360ed051fc65da4ULL)) << 64) |
         0x4385df649fccf645ULL;
}
}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : state_(0), inc_((static_cast<unsigned __int128>(stream_id) << 1) | 1u),
      seed_(seed), stream_id_(stream_id) {
  state_ = state_ * pcg_mult() + inc_;
  state_ += seed;
  state_ = state_ * pcg_mult() + inc_;
}

std::uint64_t RandomStream::next_u64() {
  const unsigned __int128 old = state_;
  state_ = old * pcg_mult() + inc_;
  const std::uint64_t xored =
      static_cast<std::uint64_t>(old >> 64) ^ static_cast<std::uint64_t>(old);
  const unsigned rot = static_cast<unsigned>(old >> 122) & 63u;
  return (xored >> rot) | (xored << ((64u - rot) & 63u));
}

double RandomStream::next_canonical() {
  // 53 random bits centered in their cell: strictly inside (0,1).
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

// ----------------------------------------------------------------------------
// Grid construction.
// ----------------------------------------------------------------------------
namespace {

// Window edge where the density falls to 1e-16 of the peak.  Posteriors with
// quadratic power-law tails hold ~sqrt(cut) of their mass beyond the cut, so
// a deeper cut keeps the stored representation within ~1e-8 of full mass.
constexpr double kLogTailCut = -36.841361487904734;  // log(1e-16)

// Scan parametrizations: x(t) covers the domain as t sweeps a finite range.
struct ScanMap {
  std::function<double(double)> x_of_t;
  double t_lo, t_hi;
  bool log_scale;  // true when t is logarithmic distance from a finite endpoint
};

ScanMap scan_map(Interval domain) {
  if (domain.finite()) {
    return {[domain](double t) { return t; }, domain.lo, domain.hi, false};
  }
  if (domain.lo_finite()) {
    return {[domain](double t) { return domain.lo + std::exp(t); }, -230.0, 230.0, true};
  }
  if (domain.hi_finite()) {
    return {[domain](double t) { return domain.hi - std::exp(-t); }, -230.0, 230.0, true};
  }
  // Whole line: sinh covers +/-1e99 with resolution ~|x| away from the origin.
  return {[](double t) { return std::sinh(t); }, -230.0, 230.0, false};
}

struct ScanResult {
  std::vector<double> t, x, logv;
  int peak = -1;
};

ScanResult scan(const ScanMap& map, const std::function<double(double)>& log_hint,
                double t_lo, double t_hi, int points) {
  ScanResult r;
  r.t.resize(points);
  r.x.resize(points);
  r.logv.resize(points);
  double best = -kInf;
  for (int i = 0; i < points; ++i) {
    const double t = t_lo + (t_hi - t_lo) * (i + 0.5) / points;
    const double x = map.x_of_t(t);
    double v = log_hint(x);
    if (std::isnan(v)) throw NonFinite("build_grid: NaN density hint");
    r.t[i] = t;
    r.x[i] = x;
    r.logv[i] = v;
    if (v > best) {
      best = v;
      r.peak = i;
    }
  }
  return r;
}

}  // namespace

HintWindow locate_mass(Interval domain, const std::function<double(double)>& log_hint,
                       int coarse_points, int fine_points) {
  const ScanMap map = scan_map(domain);
  ScanResult coarse = scan(map, log_hint, map.t_lo, map.t_hi, coarse_points);
  if (coarse.peak < 0 || coarse.logv[coarse.peak] == -kInf)
    throw NonFinite("build_grid: density hint vanishes on the whole scan lattice");

  // Refine the peak region so the window threshold is taken against an
  // accurate maximum (the coarse lattice can straddle a narrow mode).
  const double dt = (map.t_hi - map.t_lo) / coarse_points;
  const double fine_lo = std::max(map.t_lo, coarse.t[coarse.peak] - 2.0 * dt);
  const double fine_hi = std::min(map.t_hi, coarse.t[coarse.peak] + 2.0 * dt);
  ScanResult fine = scan(map, log_hint, fine_lo, fine_hi, fine_points);

  double peak_log = coarse.logv[coarse.peak];
  double peak_x = coarse.x[coarse.peak];
  if (fine.peak >= 0 && fine.logv[fine.peak] > peak_log) {
    peak_log = fine.logv[fine.peak];
    peak_x = fine.x[fine.peak];
  }

  // The window is the hull of every lattice point above the truncation
  // threshold (hull, not walk-from-peak, so multimodal hints stay covered).
  const double threshold = peak_log + kLogTailCut;
  int first = -1, last = -1;
  for (int i = 0; i < coarse_points; ++i) {
    if (coarse.logv[i] >= threshold) {
      if (first < 0) first = i;
      last = i;
    }
  }
  // Bisect the threshold crossing so the window edge sits at the 1e-12 tail
  // cut itself rather than a full lattice step beyond it.
  auto refine_edge = [&](double t_in, double t_out) {
    for (int k = 0; k < 40; ++k) {
      const double mid = 0.5 * (t_in + t_out);
      if (log_hint(map.x_of_t(mid)) >= threshold)
        t_in = mid;
      else
        t_out = mid;
    }
    return t_out;
  };
  double t_a, t_b;
  if (first < 0) {
    // Mass thinner than the coarse lattice: fall back to the fine window.
    t_a = fine_lo;
    t_b = fine_hi;
  } else {
    t_a = (first > 0) ? refine_edge(coarse.t[first], coarse.t[first - 1]) : coarse.t[0];
    t_b = (last + 1 < coarse_points) ? refine_edge(coarse.t[last], coarse.t[last + 1])
                                     : coarse.t[coarse_points - 1];
    // Merge in the refined peak surroundings.
    for (int i = 0; i < static_cast<int>(fine.t.size()); ++i) {
      if (fine.logv[i] >= threshold) {
        t_a = std::min(t_a, fine.t[i]);
        t_b = std::max(t_b, fine.t[i]);
      }
    }
  }

  HintWindow w;
  double xa = map.x_of_t(t_a), xb = map.x_of_t(t_b);
  if (xa > xb) std::swap(xa, xb);
  w.lo = xa;
  w.hi = xb;
  w.peak_x = peak_x;
  w.peak_log = peak_log;
  if (!(w.lo < w.hi)) {
    const double pad = std::max(1e-12, 1e-9 * std::abs(w.lo));
    w.lo -= pad;
    w.hi += pad;
  }
  return w;
}

namespace {

// Node placement inside [a,b]: the nodes sit at equal quantiles of a blend of
// 3/4 hint mass and 1/4 uniform measure, so the bulk is resolved by mass while
// the tails keep resolution.  Blending one measure (rather than interleaving
// two separate lattices) keeps the spacing smoothly varying, which the
// monotone-cubic interpolant needs for its accuracy.  Without a hint the
// nodes are uniform.
std::vector<double> place_nodes(Interval domain, double a, double b, int n,
                                const std::function<double(double)>& log_hint,
                                int lattice) {
  // Coordinates in which spacing is measured: log distance from a single
  // finite endpoint, asinh over the whole line (log-spaced tails, linear
  // center), identity on finite domains.  Wide power-law windows then cost
  // only a few units of placement coordinate instead of decades of raw span.
  enum class Coord { identity, lo_log, hi_log, asinh };
  Coord coord = Coord::identity;
  if (domain.lo_finite() != domain.hi_finite())
    coord = domain.lo_finite() ? Coord::lo_log : Coord::hi_log;
  else if (!domain.lo_finite())
    coord = Coord::asinh;
  auto fwd = [&](double x) {
    switch (coord) {
      case Coord::lo_log: return std::log(x - domain.lo);
      case Coord::hi_log: return std::log(domain.hi - x);
      case Coord::asinh: return std::asinh(x);
      default: return x;
    }
  };
  auto bwd = [&](double u) {
    switch (coord) {
      case Coord::lo_log: return domain.lo + std::exp(u);
      case Coord::hi_log: return domain.hi - std::exp(u);
      case Coord::asinh: return std::sinh(u);
      default: return u;
    }
  };
  // log |dx/du|, folded into the hint so lattice mass stays true mass.
  auto log_jac = [&](double u) {
    switch (coord) {
      case Coord::lo_log:
      case Coord::hi_log: return u;
      case Coord::asinh: {
        const double t = std::abs(u);
        return t + std::log1p(std::exp(-2.0 * t)) - 0.6931471805599453;
      }
      default: return 0.0;
    }
  };
  double ua = fwd(a), ub = fwd(b);
  if (ua > ub) std::swap(ua, ub);

  std::vector<double> nodes;
  nodes.reserve(n);
  if (!log_hint) {
    // Plain grids stay uniform in the raw parameter except against a single
    // finite endpoint, where log spacing preserves the short-range detail.
    const bool log_side = coord == Coord::lo_log || coord == Coord::hi_log;
    for (int i = 0; i < n; ++i) {
      if (i == 0) { nodes.push_back(a); continue; }
      if (i == n - 1) { nodes.push_back(b); continue; }
      nodes.push_back(log_side ? bwd(ua + (ub - ua) * i / (n - 1))
                               : a + (b - a) * i / (n - 1));
    }
  } else {
    // Lattice cdf of the hint in u-coordinates, with the coordinate Jacobian
    // folded in so the lattice carries true mass, not mass per unit u.
    const int m = lattice;
    std::vector<double> u(m);
    double peak = -kInf;
    std::vector<double> lv(m);
    for (int i = 0; i < m; ++i) {
      u[i] = ua + (ub - ua) * i / (m - 1);
      lv[i] = log_hint(bwd(u[i])) + log_jac(u[i]);
      peak = std::max(peak, lv[i]);
    }
    double cum = 0;
    std::vector<double> cdf(m, 0.0);
    for (int i = 1; i < m; ++i) {
      const double d = 0.5 * (std::exp(lv[i] - peak) + std::exp(lv[i - 1] - peak));
      cum += d * (u[i] - u[i - 1]);
      cdf[i] = cum;
    }
    if (!(cum > 0) || !std::isfinite(cum)) {
      for (int i = 0; i < n; ++i) nodes.push_back(bwd(ua + (ub - ua) * i / (n - 1)));
    } else {
      // Blended cumulative measure, strictly increasing in u by construction.
      std::vector<double> blend(m);
      for (int i = 0; i < m; ++i)
        blend[i] = 0.75 * cdf[i] / cum + 0.25 * (u[i] - ua) / (ub - ua);
      int j = 0;
      for (int i = 0; i < n; ++i) {
        const double target = static_cast<double>(i) / (n - 1);
        while (j + 1 < m - 1 && blend[j + 1] < target) ++j;
        const double span = blend[j + 1] - blend[j];
        const double frac =
            span > 0 ? std::clamp((target - blend[j]) / span, 0.0, 1.0) : 0.5;
        nodes.push_back(bwd(u[j] + frac * (u[j + 1] - u[j])));
      }
    }
  }
  for (auto& v : nodes) v = std::clamp(v, a, b);
  std::sort(nodes.begin(), nodes.end());
  // Enforce strict monotonicity (duplicates can appear after rounding).
  std::vector<double> out;
  out.reserve(nodes.size());
  for (double v : nodes) {
    if (out.empty() || v > out.back()) out.push_back(v);
  }
  while (static_cast<int>(out.size()) < 2) out.push_back(out.back() + 1.0);
  return out;
}

}  // namespace

std::vector<double> build_grid_log(Interval domain, int n,
                                   const std::function<double(double)>& log_hint) {
  if (n < 2) throw std::invalid_argument("build_grid: need n >= 2");
  if (!log_hint) {
    // Uniform under the improper-domain map.
    std::vector<double> nodes(n);
    if (domain.finite()) {
      for (int i = 0; i < n; ++i)
        nodes[i] = domain.lo + (domain.hi - domain.lo) * i / (n - 1);
    } else if (domain.lo_finite()) {
      for (int i = 0; i < n; ++i) {
        const double u = static_cast<double>(n - i) / (n + 1);  // descending => x ascending
        nodes[i] = domain.lo + (1.0 - u) / u;
      }
    } else if (domain.hi_finite()) {
      for (int i = 0; i < n; ++i) {
        const double u = static_cast<double>(i + 1) / (n + 1);
        nodes[i] = domain.hi - (1.0 - u) / u;
      }
    } else {
      for (int i = 0; i < n; ++i) {
        const double u = -1.0 + 2.0 * (i + 1) / (n + 1);
        nodes[i] = std::atanh(u);
      }
    }
    return nodes;
  }
  const HintWindow w = locate_mass(domain, log_hint);
  return place_nodes(domain, w.lo, w.hi, n, log_hint, 512);
}

std::vector<double> build_grid_window(Interval domain, double lo, double hi, int n,
                                      const std::function<double(double)>& log_hint,
                                      int lattice) {
  if (n < 2) throw std::invalid_argument("build_grid_window: need n >= 2");
  if (!(lo < hi)) throw std::invalid_argument("build_grid_window: need lo < hi");
  return place_nodes(domain, lo, hi, n, log_hint, std::max(lattice, 2 * n));
}

// ----------------------------------------------------------------------------
// MonotoneCubic (Fritsch-Carlson shape-preserving interpolation)
// ----------------------------------------------------------------------------

MonotoneCubic::MonotoneCubic(std::vector<double> xs, std::vector<double> ys)
    : x_(std::move(xs)), y_(std::move(ys)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n)
    throw std::invalid_argument("MonotoneCubic: need >= 2 matching nodes");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1]))
      throw std::invalid_argument("MonotoneCubic: nodes must be strictly increasing");

  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    delta[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  d_.assign(n, 0.0);
  if (n == 2) {
    d_[0] = d_[1] = delta[0];
    return;
  }
  // Interior slopes: weighted harmonic mean of the neighbouring secants,
  // zero at local extrema.  This is what prevents overshoot.
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) {
      d_[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  // One-sided endpoint slopes, clamped to preserve the nearest secant's shape.
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0.0) return 0.0;
    if (d0 * d1 < 0.0 && std::abs(d) > 3.0 * std::abs(d0)) return 3.0 * d0;
    return d;
  };
  d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

double MonotoneCubic::operator()(double x) const {
  if (x_.empty()) throw Error("MonotoneCubic: empty interpolant");
  if (x <= x_.front()) return y_.front();
  if (x >= x_.back()) return y_.back();
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  const double h = x_[i + 1] - x_[i];
  const double t = (x - x_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  return y_[i] * (2.0 * t3 - 3.0 * t2 + 1.0) + h * d_[i] * (t3 - 2.0 * t2 + t) +
         y_[i + 1] * (-2.0 * t3 + 3.0 * t2) + h * d_[i + 1] * (t3 - t2);
}

std::vector<double> build_grid(Interval domain, int n,
                               const std::function<double(double)>& density_hint) {
  if (!density_hint) return build_grid_log(domain, n, {});
  auto log_hint = [&density_hint](double x) {
    const double v = density_hint(x);
    if (std::isnan(v)) throw NonFinite("build_grid: NaN density hint");
    return v > 0 ? std::log(v) : -kInf;
  };
  return build_grid_log(domain, n, log_hint);
}

}  // namespace confactor
