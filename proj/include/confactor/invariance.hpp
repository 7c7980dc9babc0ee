#pragma once

// Lie-group actions on sample and parameter spaces: invariance verification,
// the trivial-action locus, and numerical construction of the reduction maps
// (s, s_bar) that carry a group-invariant family to location form.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "confactor/families.hpp"
#include "confactor/numerics.hpp"

namespace confactor {

struct NonDifferentiable : Error { using Error::Error; };
struct TrivialLocusCrossed : Error { using Error::Error; };

// Group elements are 1- or 2-vectors of real coordinates; one-dimensional
// groups are identified with their coordinate group.
using GroupElement = std::vector<double>;

// ----------------------------------------------------------------------------
// GroupAction: a group G acting on the sample space (act) together with the
// induced action on the parameter space (act_param).  compose/inverse/identity
// express the group law in coordinates.
// ----------------------------------------------------------------------------
struct GroupAction {
  std::string label;
  int dim = 1;
  std::function<double(const GroupElement&, double)> act;
  std::function<std::vector<double>(const GroupElement&, const std::vector<double>&)>
      act_param;
  std::function<GroupElement(const GroupElement&, const GroupElement&)> compose;
  std::function<GroupElement(const GroupElement&)> inverse;
  GroupElement identity;
  std::vector<Interval> element_space;  // one Interval per coordinate
  // Optional closed form for d/da act(inverse(a), x) at the identity; when
  // present, action_derivative cross-checks it against finite differences.
  std::function<double(double)> exact_action_derivative;
};

// ----------------------------------------------------------------------------
// ReductionMaps: strictly increasing maps with s(x0) = 0 and s_bar(theta0) = 0
// such that an invariant family's cdf depends on (x, lambda) only through
// s(x) - s_bar(lambda).  branch indicates which side of the trivial-action
// locus the maps were built on (+1 / -1).
// ----------------------------------------------------------------------------
struct ReductionMaps {
  std::function<double(double)> s;
  std::function<double(double)> ds;
  std::function<double(double)> s_bar;
  std::function<double(double)> ds_bar;
  int branch = +1;
};

// ----------------------------------------------------------------------------
// Operations
// ----------------------------------------------------------------------------

// Max over grid points, group elements, and interior parameter probes of the
// invariance defect |F(g_a(x) | induced(a, theta)) - F(x | theta)|, with the
// orientation branch (1 - F) applied where g_a reverses order.
double check_invariance(const DirectFamily& fam, const GroupAction& grp,
                        const std::vector<GroupElement>& elements,
                        const std::vector<double>& grid);

// d/da act(inverse(a), x) at the identity of a one-dimensional group, by
// central finite differences.  Throws NonDifferentiable when the one-sided
// differences disagree, and cross-checks exact_action_derivative if present.
double action_derivative(const GroupAction& grp, double x);

// Points of the support where the group action is trivial (the derivative
// above vanishes): direct grid hits below tol.abs plus sign-change roots
// refined by bisection.  Data on this locus cannot enter inference.
std::vector<double> trivial_locus(const GroupAction& grp, Interval support,
                                  const std::vector<double>& grid,
                                  Tolerance tol = {});

// Builds the reduction maps by accumulating s(x) = sgn * int_{x0}^{x} dt/D(t)
// with D the action derivative, sign fixed so s' > 0, and analogously for
// s_bar from the parameter-side derivative.  Defaults for x0 / theta0 are the
// first node of a 33-point interior probe lattice on the respective space.
// Throws TrivialLocusCrossed when an evaluation path meets a derivative zero.
ReductionMaps reduction_maps(const GroupAction& grp, const DirectFamily& fam,
                             std::optional<double> x0 = std::nullopt,
                             std::optional<double> theta0 = std::nullopt);

// Max over matched pairs s(x) - s_bar(l) = s(x') - s_bar(l') of
// |F(x|l) - F(x'|l')|; zero exactly when the cdf is a function of the single
// variable s(x) - s_bar(lambda).  Requires a one-parameter family.
double check_H_form(const DirectFamily& fam, const ReductionMaps& maps,
                    const std::vector<double>& grid);

// ----------------------------------------------------------------------------
// Registry: "translation" (x -> x + a), "scaling" (x -> a x, a > 0), and
// "affine" (x -> a2 x + a1).  Induced actions follow the location-scale
// conventions: translation shifts the first parameter coordinate, scaling
// multiplies every coordinate, affine sends (mu, sigma) to (a2 mu + a1, a2 sigma).
// ----------------------------------------------------------------------------
const GroupAction& group_by_label(const std::string& label);
std::vector<std::string> group_labels();

}  // namespace confactor
