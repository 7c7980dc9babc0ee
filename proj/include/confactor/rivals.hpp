#pragma once

// Rival prior-selection rules and the machinery that compares them against
// consistency factors: Fisher information and the Jeffreys general rule, the
// uniform weight of Bayes' postulate, and the reference-rule marginal for the
// signal-to-noise ratio lambda = mu/sigma of the normal family, together with
// the L1 / product-rule comparison report.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "confactor/families.hpp"
#include "confactor/numerics.hpp"
#include "confactor/posterior.hpp"

namespace confactor {

struct SingularInformation : Error { using Error::Error; };

// ----------------------------------------------------------------------------
// Fisher information: entries [i][j] = integral of (d_i log f)(d_j log f) f
// over the support, scores by central finite differences in the parameter.
// ----------------------------------------------------------------------------
struct FisherMatrix {
  int dim = 0;
  std::vector<double> entries;  // row-major dim x dim, symmetric
  std::vector<double> at;       // evaluation point

  double operator()(int i, int j) const { return entries[i * dim + j]; }
  double det() const;
};

FisherMatrix fisher_information(const DirectFamily& fam,
                                const std::vector<double>& theta);

// ----------------------------------------------------------------------------
// Rule factors
// ----------------------------------------------------------------------------

// Jeffreys' general rule: zeta_J(theta) = sqrt(det I(theta)).  For families
// carrying translation / scaling / affine structure the sigma dependence is
// exact (constant, 1/sigma, 1/sigma^2) and pinned by reference evaluations,
// validated against a second probe; unstructured families evaluate the
// determinant per call.  Throws SingularInformation when the information is
// singular at a probe point.
ConsistencyFactor jeffreys_factor(const DirectFamily& fam);

// Bayes' postulate: zeta = 1 identically.
ConsistencyFactor uniform_factor(int dim_param = 1);

// Push-forward of a scalar factor through a monotone reparameterization
// y = sbar(theta): zeta'(y) = zeta(sbar^{-1}(y)) |d sbar^{-1} / dy|.  The
// same transformation rule posteriors follow; factors that violate it (the
// uniform weight) change shape under reparameterization.
ConsistencyFactor transform_factor(const ConsistencyFactor& factor,
                                   const MonotoneMap& sbar);

// ----------------------------------------------------------------------------
// Lambda = mu/sigma marginals for the normal family.  Both displays depend on
// the data only through n and r = sum(x) / sqrt(sum(x^2)); both are
// normalized over the envelope window |lambda| <= L with exp(-n L^2 / 2) =
// 1e-12, which also keeps the inner integrand inside double range.  The
// returned posterior stores the window grid; its density vanishes beyond it.
// ----------------------------------------------------------------------------

// Uniform grid over the envelope window for n observations.
std::vector<double> lambda_comparison_grid(std::size_t n_data, int nodes = 801);

// Reference-rule display: exp(-n l^2/2) / sqrt(1 + l^2/2) *
// integral_0^inf u^(n-1) exp(-u^2/2 + r l u) du.
Posterior reference_marginal_lambda(const std::vector<double>& data);

// Consistency-factor route, closed display: exp(-n l^2/2) *
// integral_0^inf u^(n-2) exp(-u^2/2 + r l u) du.
Posterior consistency_marginal_lambda(const std::vector<double>& data);

// Independent route for any joint weight: build the (mu, sigma) posterior,
// push (mu, sigma) -> (lambda, sigma), integrate sigma out on the joint's
// stored window.  Default factor is the built-in joint weight 1/sigma.
Posterior lambda_marginal_via_joint(const LocationScaleFamily& fam,
                                    const std::vector<double>& data,
                                    std::optional<ConsistencyFactor> joint_factor =
                                        std::nullopt,
                                    int nodes = 801);

// The consistency display cross-checked by the joint route on the normal.
Posterior consistency_marginal_lambda_via_joint(const std::vector<double>& data);

// ----------------------------------------------------------------------------
// Rule comparison
// ----------------------------------------------------------------------------
struct RuleComparison {
  std::string rule_a;
  std::string rule_b;
  double l1_distance = 0.0;
  // Joint-factor product-rule residuals; absent for the reference rule (a
  // marginal-only formula) and for data with fewer than two distinct values
  // (no normalizable joint exists to decompose).
  std::optional<double> product_rule_residual_a;
  std::optional<double> product_rule_residual_b;
  std::vector<double> grid;
  std::vector<double> density_a;  // renormalized on the grid
  std::vector<double> density_b;

  std::string to_json() const;
};

// Rules: "consistency", "reference", "jeffreys", "uniform".  The lambda
// marginals of the two rules are evaluated on the grid, renormalized there,
// and compared in L1; closed-form displays require the normal family.
RuleComparison compare_rules(const std::string& rule_a, const std::string& rule_b,
                             const LocationScaleFamily& fam,
                             const std::vector<double>& data,
                             const std::vector<double>& lambda_grid);

}  // namespace confactor
