#pragma once

// The inference core: consistency factors, construction and normalization of
// inverse probability distributions over one- and two-dimensional parameter
// spaces, sequential updating, reparameterization, marginal/conditional
// decomposition, product category checks, and predictive densities.

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "confactor/families.hpp"
#include "confactor/invariance.hpp"
#include "confactor/numerics.hpp"

namespace confactor {

struct PosteriorNotNormalizable : Error { using Error::Error; };
struct TrivialLocusDatum : Error { using Error::Error; };
struct ZeroMarginal : Error { using Error::Error; };
struct FactorRejected : Error { using Error::Error; };

// ----------------------------------------------------------------------------
// ConsistencyFactor: the parameter-space weight zeta attached to an invariant
// family.  Built-in kinds: location (1), scale (1/sigma), and the joint
// location-scale weight (1/sigma on (mu, sigma)); zeta is positive on the
// admissible parameter set by convention.  Custom factors carry caller code
// and are gated by their functional equation before strict-mode builds.
// ----------------------------------------------------------------------------
enum class FactorKind { location, scale, joint_location_scale, custom };

struct ConsistencyFactor {
  FactorKind kind = FactorKind::custom;
  std::string label = "custom";
  int dim_param = 1;
  std::function<double(const std::vector<double>&)> zeta;
};

// The built-in factor for a kind; FactorKind::custom is rejected (construct
// custom factors directly).
ConsistencyFactor consistency_factor(FactorKind kind);

// ----------------------------------------------------------------------------
// BuildOptions: cost/accuracy knobs for one-dimensional builds.  Defaults
// favor accuracy; the calibration loop passes a lean variant tuned for
// per-trial cost.
// ----------------------------------------------------------------------------
struct BuildOptions {
  int grid_nodes = 1024;      // stored representation nodes
  int coarse_scan = 512;      // window-location lattice
  int fine_scan = 256;        // peak-refinement lattice
  int place_lattice = 512;    // mass lattice for node placement
  int eta_scan = 65;          // scan points per normalization quadrature
  bool mass_weighted = true;  // concentrate nodes where the density is
  bool strict = true;         // gate custom factors by their functional equation
  // Known mass window [lo, hi]: skips the location scan.  The normalization
  // integral still expands outward from it until the tails stabilize.
  std::optional<std::pair<double, double>> window;
};

// ----------------------------------------------------------------------------
// Posterior: a normalized inverse distribution over a scalar parameter.
//
// Stored representation: strictly increasing nodes spanning the effective
// mass window, the normalized log density at each node, and the log of the
// normalization integral eta of (factor x likelihood).  Posteriors built in
// process additionally carry an exact log-density closure; deserialized ones
// evaluate through shape-preserving interpolation of the stored values.
// cdf/quantile always work off the stored representation, so they are
// identical before and after a serialization round trip.
// ----------------------------------------------------------------------------
struct Posterior {
  std::vector<double> nodes;
  std::vector<double> log_density;
  // Log normalization of the full build; composes across sequential updates
  // so it always reports the full-data normalization integral.
  double log_eta = 0.0;
  Interval param_space;
  // Provenance.
  std::string family_label;
  std::string factor_label;
  std::vector<double> data;
  // Exact normalized log density; empty after deserialization.
  std::function<double(double)> exact_log_density;

  double density(double theta) const;       // 0 outside param_space
  double log_density_at(double theta) const;
  double cdf(double theta) const;           // representation mass below theta
  double quantile(double p) const;          // inverse cdf, p in (0,1)
  double total_mass() const;                // quadrature mass of the representation

  // JSON record {family, factor, data, nodes, log_density, log_eta,
  // param_space}; doubles round-trip bit-exactly.
  std::string to_json() const;
  static Posterior from_json(const std::string& text);

  // Rebuilds the interpolants and cumulative-mass table from the stored
  // fields; required after populating them by hand.
  void finalize();

 private:
  MonotoneCubic log_interp_;  // log density between nodes
  MonotoneCubic cum_interp_;  // cumulative mass between nodes
  double mass_ = 0.0;
};

// ----------------------------------------------------------------------------
// Posterior2D: a normalized joint over (mu, sigma) on a tensor grid with the
// sigma axis placed in log spacing.  Always carries the exact closure (no
// serialization at this dimensionality).
// ----------------------------------------------------------------------------
struct Posterior2D {
  std::vector<double> mu_nodes;
  std::vector<double> sigma_nodes;
  std::vector<double> log_density;  // row-major mu x sigma, normalized
  double log_eta = 0.0;
  Interval mu_space;
  Interval sigma_space;
  std::string family_label;
  std::string factor_label;
  std::vector<double> data;
  std::function<double(double, double)> exact_log_density;

  double density(double mu, double sigma) const;  // 0 outside the spaces
};

struct BuildOptions2D {
  int mu_nodes = 256;
  int sigma_nodes = 256;
  int outer_scan = 192;  // mu window lattice (each probe integrates sigma out)
  int outer_fine = 96;
  int inner_scan = 96;   // sigma window lattice at fixed mu
  int inner_fine = 48;
  int eta_scan = 33;     // scan points per normalization quadrature
  bool strict = true;
};

enum class Component { mu, sigma };

// ----------------------------------------------------------------------------
// Operations
// ----------------------------------------------------------------------------

// density(theta) = zeta(theta) prod_i f(x_i | theta) / eta over the family's
// parameter space.  Throws TrivialLocusDatum when a datum sits where the
// family's group acts trivially (no information reaches the parameter),
// PosteriorNotNormalizable when eta fails to stabilize or is not positive,
// and FactorRejected when a custom factor fails its functional-equation gate
// in strict mode.
Posterior build_posterior(const DirectFamily& fam, const ConsistencyFactor& factor,
                          const std::vector<double>& data, const BuildOptions& opt = {});

// One more observation folded in: density proportional to prior * f(x_new|.),
// renormalized.  Equals the joint build on the extended data set.
Posterior sequential_update(const Posterior& prior, const DirectFamily& fam,
                            double x_new, const BuildOptions& opt = {});

// Push-forward along a strictly monotone reparameterization of the parameter:
// density_new(s(theta)) = density(theta)/|s'(theta)|.  The normalization
// integral is invariant under the change of coordinates and carries over.
Posterior transform_posterior(const Posterior& post, const MonotoneMap& sbar);

// Joint over (mu, sigma); the factor defaults to the built-in joint weight
// 1/sigma.  Throws PosteriorNotNormalizable when the double integral fails to
// stabilize (one datum, or all data equal, for light-tailed bases).
Posterior2D build_posterior_2d(const LocationScaleFamily& fam,
                               const std::vector<double>& data,
                               std::optional<ConsistencyFactor> factor = std::nullopt,
                               const BuildOptions2D& opt = {});

// Independent nested quadrature of the joint over its stored windows.
double joint_mass(const Posterior2D& post);

// Integrates the other component out of the joint.
Posterior marginalize(const Posterior2D& post, Component which,
                      const BuildOptions& opt = {});

// Normalized slice of the joint at a fixed component value.  Throws
// ZeroMarginal when the marginal density at the value is below tolerance.
Posterior conditional_from_joint(const Posterior2D& post, Component fixed,
                                 double value, const BuildOptions& opt = {});

// Max over a probe lattice of |f(mu,sigma|x) - f(sigma|mu,x) f(mu|x)| where
// the conditional is built independently with the scale weight 1/sigma on the
// mu-pinned family and f(mu|x) is the joint's marginal.  Near zero exactly
// when the joint factor composes with the conditional chain.
double product_rule_residual(const LocationScaleFamily& fam,
                             const std::vector<double>& data,
                             std::optional<ConsistencyFactor> joint_factor = std::nullopt);

// x -> integral of post.density(theta) f(x|theta) dtheta.
std::function<double(double)> predictive_density(const Posterior& post,
                                                 const DirectFamily& fam);

// P(X <= x) under the predictive: integral of post.density(theta) F(x|theta).
double predictive_cdf(const Posterior& post, const DirectFamily& fam, double x);

// Relative-invariance defect of a factor under a group: the multiplier chi(a)
// is pinned at a reference parameter, then the functional equation
// zeta(theta) = chi(a) zeta(gbar_a^{-1} theta) |det d gbar_a^{-1}| is checked
// over a parameter lattice; returns the worst absolute defect.
double factor_functional_residual(const ConsistencyFactor& factor,
                                  const GroupAction& grp,
                                  const std::vector<GroupElement>& elements);

}  // namespace confactor
