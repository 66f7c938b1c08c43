#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dnnmg/fem.hpp"

namespace dnnmg {

struct OscStats {
  double minv = 0, maxv = 0, mean = 0, ampl = 0, freq = 0;
  bool has_freq = false;  // freq is NaN when false
  double t0 = 0, t1 = 0;
};

// L2 norm of div v over the mesh; elements touching an obstacle corner node
// are skipped by default (corner singularities pollute the quadrature)
double divergence_norm(const LevelFem& fem, const la::Vec& x, bool exclude_corners = true);

// obstacle force from the unconstrained weak-form residual tested against a
// unit lifting at the obstacle velocity dofs (superconvergent); b_raw is the
// rhs the step producing x was solved with
std::pair<double, double> drag_lift_residual(const LevelFem& fem, const la::Vec& x,
                                             const la::Vec& b_raw);

// direct quadrature of ((1/Re) grad v - p I) . n over the obstacle boundary,
// n pointing out of the obstacle into the fluid
std::pair<double, double> drag_lift_boundary(const LevelFem& fem, const la::Vec& x);

// min/max/mean/amplitude over [t0, t1]; frequency from upward mean-crossing
// intervals of the de-meaned signal (NaN with has_freq=false if fewer than
// two crossings)
OscStats oscillation_stats(const std::vector<double>& t, const std::vector<double>& v, double t0,
                           double t1);

// nodal |v - ref| magnitudes; both states on the same level
std::vector<double> velocity_error_field(const MeshLevel& m, const la::Vec& v, const la::Vec& ref);

// small csv helper, 6 significant digits, RFC-4180 line endings not required
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns);

}  // namespace dnnmg
