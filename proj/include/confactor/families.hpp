#pragma once

// Parametric families of direct probability distributions: generic families
// with pdf/cdf/quantile/sampling, location-scale structure, the signed
// half-support split, and the scale-to-location reduction.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "confactor/numerics.hpp"

namespace confactor {

struct DerivativeVanishes : Error { using Error::Error; };
struct EmptySide : Error { using Error::Error; };
struct NotIdentifiable : Error { using Error::Error; };

// A strictly monotone differentiable coordinate change with explicit inverse.
struct MonotoneMap {
  std::function<double(double)> f;      // y = f(x)
  std::function<double(double)> f_inv;  // x = f_inv(y)
  std::function<double(double)> df;     // f'(x)
};

// ----------------------------------------------------------------------------
// DirectFamily: distribution of an observable x given a parameter vector.
// Densities are carried in log form so that extreme parameter values stay
// finite; pdf() is derived.  dim_param is 1 or 2 and fixes the meaning of the
// parameter vector: (mu) or (sigma) for pinned families, (mu, sigma) for the
// full location-scale case.
// ----------------------------------------------------------------------------
struct DirectFamily {
  std::string label;
  int dim_param = 1;
  std::function<double(double, const std::vector<double>&)> log_pdf;
  std::function<double(double, const std::vector<double>&)> cdf;
  std::function<Interval(const std::vector<double>&)> support;
  std::vector<Interval> param_space;
  // Invariance group naturally attached to the parameter ("translation",
  // "scaling", "affine"), used by the inference layer to gate data against
  // the group's trivial-action locus.  Empty when no group applies.
  std::string group_label;

  double pdf(double x, const std::vector<double>& theta) const;
  // Inverse cdf by bracketed root finding (no stored quantile tables).
  double quantile(double p, const std::vector<double>& theta, Tolerance tol = {}) const;
};

// ----------------------------------------------------------------------------
// LocationScaleFamily: cdf(x | mu, sigma) = Phi((x - mu)/sigma) by
// construction, pdf = phi((x - mu)/sigma)/sigma.  Defined by the base pair
// (log phi, Phi) on a base support.
// ----------------------------------------------------------------------------
struct LocationScaleFamily {
  std::string label;
  std::function<double(double)> base_log_pdf;  // log phi
  std::function<double(double)> base_cdf;      // Phi
  Interval base_support = Interval::whole();

  DirectFamily as_direct() const;              // theta = (mu, sigma)
  DirectFamily pin_location(double mu) const;  // scale family in sigma
  DirectFamily pin_scale(double sigma) const;  // location family in mu
};

// The decomposition of a base density into its positive-axis and
// negative-axis parts: phi = c_plus phi_plus + c_minus phi_minus with each
// one-sided part normalized on its half support.
struct SignedSplit {
  double c_plus = 0.0;
  double c_minus = 0.0;
  std::optional<LocationScaleFamily> family_plus;
  std::optional<LocationScaleFamily> family_minus;
};

// ----------------------------------------------------------------------------
// Operations
// ----------------------------------------------------------------------------

// Change of observable y = s(x): pdf_Y(y) = pdf_X(s^{-1}(y)) |(s^{-1})'(y)|,
// cdf branching on the orientation of s.
DirectFamily transform_variable(const DirectFamily& fam, const MonotoneMap& s);

// One draw via the inverse cdf applied to a canonical uniform.
double sample(const DirectFamily& fam, const std::vector<double>& theta,
              RandomStream& stream);

SignedSplit signed_split(const LocationScaleFamily& fam);

// Carry one side of a split scale family to pure location form: in
// y = log(sign (x - mu)) the parameter lambda = log sigma enters as a pure
// shift, with base density t -> e^t phi_side(sign e^t).
DirectFamily reduce_scale_to_location(const SignedSplit& split, int sign);

// ----------------------------------------------------------------------------
// Construction-time validation for user-supplied families: normalization,
// cdf monotonicity and consistency with the pdf, and identifiability on a
// probe grid.  Built-in families pass by construction; the registry applies
// this check once per process.
// ----------------------------------------------------------------------------
void validate_family(const DirectFamily& fam);

// ----------------------------------------------------------------------------
// Registry.  Base families: normal, cauchy, logistic (two-sided),
// exponential (one-sided).  Direct labels: "<base>" (joint location-scale),
// "<base>-location" (sigma pinned), "<base>-scale" (mu pinned), plus
// "exponential-scale".
// ----------------------------------------------------------------------------
const LocationScaleFamily& base_family(const std::string& label);
DirectFamily family_by_label(const std::string& label,
                             std::optional<double> pin = std::nullopt);
std::vector<std::string> family_labels();

}  // namespace confactor
