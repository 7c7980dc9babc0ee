#pragma once

// Shared numerical kernel: adaptive quadrature on finite and improper domains,
// bracketed root-finding, density-aware grid construction, and a seedable
// counter-based random stream.  Everything downstream builds on these.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace confactor {

// ----------------------------------------------------------------------------
// Error taxonomy.  All library failures derive from Error so callers can map
// them to exit codes in one place.
// ----------------------------------------------------------------------------
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonConvergence : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };
struct NoSignChange : Error { using Error::Error; };

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ----------------------------------------------------------------------------
// Interval: a nonempty open interval of the extended real line.  Used both for
// sample-space supports and for parameter spaces.
// ----------------------------------------------------------------------------
struct Interval {
  double lo = -kInf;
  double hi = kInf;

  Interval() = default;
  Interval(double l, double h) : lo(l), hi(h) {
    if (!(lo < hi)) throw std::invalid_argument("Interval: need lo < hi");
  }

  bool lo_finite() const { return std::isfinite(lo); }
  bool hi_finite() const { return std::isfinite(hi); }
  bool finite() const { return lo_finite() && hi_finite(); }
  bool contains(double x) const { return x > lo && x < hi; }

  static Interval whole() { return Interval(-kInf, kInf); }
  static Interval positive() { return Interval(0.0, kInf); }
};

// ----------------------------------------------------------------------------
// Tolerance: shared accuracy contract.  rel is a relative target, abs an
// absolute floor, max_subdivisions bounds adaptive bisection depth.
// ----------------------------------------------------------------------------
struct Tolerance {
  double rel = 1e-9;
  double abs = 1e-12;
  int max_subdivisions = 60;
};

// ----------------------------------------------------------------------------
// RandomStream: a 128-bit permuted-congruential generator keyed by
// (seed, stream_id).  Identical keys give bitwise-identical sequences;
// distinct stream_ids select distinct increments and give independent-grade
// streams.  Parallel consumers must each own their own stream_id; derived()
// implements the per-task convention stream_id*total + index.
// ----------------------------------------------------------------------------
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  // Uniform draw strictly inside (0,1): safe to feed through quantile maps.
  double next_canonical();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Stream for sub-task `index` out of `total` independent sub-tasks.
  RandomStream derived(std::uint64_t total, std::uint64_t index) const {
    return RandomStream(seed_, stream_id_ * total + index);
  }

 private:
  unsigned __int128 state_;
  unsigned __int128 inc_;
  std::uint64_t seed_;
  std::uint64_t stream_id_;
};

// ----------------------------------------------------------------------------
// Quadrature.  Adaptive Gauss-Kronrod (7/15) with interval bisection.
// Improper endpoints are removed by explicit substitution, never by
// truncation: half-lines via u = 1/(1+t), the whole line by splitting at a
// finite point into two half-lines (equivalent coverage, no saturation).
// ----------------------------------------------------------------------------
double integrate(const std::function<double(double)>& f, Interval domain,
                 Tolerance tol = {});

// log( integral of exp(log_f) over domain ), computed with an internal shift
// so that integrands spanning hundreds of orders of magnitude stay finite.
// Returns -inf for an identically-zero integrand.  Domain must be finite.
double log_integrate(const std::function<double(double)>& log_f,
                     Interval domain, Tolerance tol = {}, int scan_points = 65);

// ----------------------------------------------------------------------------
// Root finding: bisection with secant acceleration inside a sign-changing
// bracket.  Robust for monotone cdfs; never leaves the bracket.
// ----------------------------------------------------------------------------
double find_root(const std::function<double(double)>& g, Interval bracket,
                 Tolerance tol = {});

// ----------------------------------------------------------------------------
// Grid construction.  Without a hint: uniform nodes (finite domain) or uniform
// under the improper-domain map.  With a density hint: the grid covers the
// region where hint >= 1e-12 * peak (tail truncation) and concentrates nodes
// where the hint carries mass, keeping a uniform share for tail resolution.
// ----------------------------------------------------------------------------
std::vector<double> build_grid(Interval domain, int n,
                               const std::function<double(double)>& density_hint = {});

// Log-space variant used by the inference pipeline (hints are log-densities,
// which stay finite where the density itself would over/underflow).
std::vector<double> build_grid_log(Interval domain, int n,
                                   const std::function<double(double)>& log_hint);

// Effective window [lo, hi] where log_hint >= max(log_hint) + log(1e-12),
// located by a two-stage scan.  Exposed for the normalization machinery.
struct HintWindow {
  double lo = 0, hi = 0;       // window in sample coordinates
  double peak_x = 0;           // argmax of the hint on the scan lattice
  double peak_log = -kInf;     // max of log_hint on the scan lattice
};
HintWindow locate_mass(Interval domain, const std::function<double(double)>& log_hint,
                       int coarse_points = 512, int fine_points = 256);

// Nodes inside a caller-supplied window [lo, hi] of `domain`.  With a hint,
// 3/4 of the nodes follow its mass (lattice cdf of `lattice` points) and 1/4
// stay uniform; without one, nodes are uniform in the domain's natural
// coordinates (log spacing against a finite endpoint).
std::vector<double> build_grid_window(Interval domain, double lo, double hi, int n,
                                      const std::function<double(double)>& log_hint = {},
                                      int lattice = 512);

// ----------------------------------------------------------------------------
// MonotoneCubic: shape-preserving piecewise-cubic interpolation (Fritsch-
// Carlson slopes).  Monotone data yield a monotone interpolant and no
// overshoot, which makes it safe for log-densities and cumulative masses.
// Evaluation clamps to the end values outside the node range.
// ----------------------------------------------------------------------------
class MonotoneCubic {
 public:
  MonotoneCubic() = default;
  MonotoneCubic(std::vector<double> xs, std::vector<double> ys);

  double operator()(double x) const;
  bool empty() const { return x_.empty(); }
  double front_x() const { return x_.front(); }
  double back_x() const { return x_.back(); }

 private:
  std::vector<double> x_, y_, d_;  // nodes, values, endpoint-safe slopes
};

// ----------------------------------------------------------------------------
// Finite differences (the library's only derivative mechanism).
// ----------------------------------------------------------------------------
double fd_step(double x);  // cbrt(machine epsilon) * max(1, |x|)
double central_diff(const std::function<double(double)>& f, double x);

// Convenience: logarithm that maps 0 to -inf without raising errors and
// rejects negative or non-finite inputs.
double safe_log(double v);

}  // namespace confactor
