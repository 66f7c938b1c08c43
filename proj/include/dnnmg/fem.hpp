#pragma once

#include <array>
#include <functional>
#include <vector>

#include "dnnmg/la.hpp"
#include "dnnmg/mesh.hpp"
#include "dnnmg/sparse.hpp"

namespace dnnmg {

// Flow / discretization parameters.  re_eq is the coefficient Reynolds number:
// the momentum equation carries 1/re_eq on the Laplacian.  With the default
// inflow peak 2.0 (bulk velocity 4/3) and obstacle side 0.1 this corresponds to
// the benchmark Reynolds number  U*D/nu = (4/3)*0.1*re_eq/1 = 133.
struct FlowParams {
  double k = 0.01;
  double re_eq = 1000.0;
  double alpha0 = 0.01;  // LPS: alpha_T = alpha0 * re_eq * h_T^2
  double vmax = 2.0;
  double ramp_time = 1.0;  // inflow factor (1-cos(pi t/ramp_time))/2 for t in [0,ramp_time]
};

double inflow_ramp(double t, double ramp_time);

using ForceFunc = std::function<Vec2(double x, double y, double t)>;

// One time step of the Crank-Nicolson scheme solves  A(x_n) = b_n  where the
// stationary operator A keeps pressure, divergence and the LPS stabilization
// fully implicit and averages convection/diffusion, and b_n collects the
// explicit half plus the mass term of the previous state.
//
// Mixed vectors are laid out as vx | vy | p node blocks.  Velocity Dirichlet
// rows of residual and Jacobian are replaced by x_i - g_i(t) / identity rows.
class LevelFem {
 public:
  LevelFem(const MeshLevel& m, const FlowParams& prm);

  const MeshLevel& mesh() const { return *mesh_; }
  const FlowParams& params() const { return prm_; }
  int n_dofs() const { return mesh_->n_dofs(); }

  // shared sparsity of Jacobian and constant operator parts
  const Csr& pattern() const { return a0_; }

  // raw operator application A(x), no boundary-row replacement
  la::Vec apply_operator(const la::Vec& x) const;

  // r = A(x) - b, Dirichlet velocity rows replaced by x_i - g_i(t)
  la::Vec assemble_residual(const la::Vec& x, const la::Vec& b, double t) const;
  la::Vec assemble_residual_raw(const la::Vec& x, const la::Vec& b) const;

  // Newton matrix at state x: constant blocks plus convection linearization,
  // Dirichlet rows as identity.  J must have been initialized with pattern().
  void assemble_jacobian(const la::Vec& x, Csr& J) const;

  // b for the next step, built from the previous state at time told; the force
  // enters averaged between told and tnew.
  la::Vec assemble_rhs(const la::Vec& xprev, double told, double tnew,
                       const ForceFunc& f = {}) const;

  void apply_dirichlet(la::Vec& x, double t) const;
  const std::vector<int>& dirichlet_dofs() const { return dir_dofs_; }
  double dirichlet_value(int dof, double t) const;

  // Element-local L2 projection of a scalar Q2 field onto the bilinears,
  // re-expressed in the element's Q2 basis; one 9-vector per element.  The
  // result is discontinuous across elements, which keeps it idempotent.
  std::vector<std::array<double, 9>> lps_project(const la::Vec& p) const;

  // quadrature tables, exposed for metrics and tests
  struct Quad {
    std::vector<double> x, y, w;           // points on the reference square, physical weights
    std::vector<std::array<double, 9>> phi, dphx, dphy;  // basis values/physical gradients
  };
  const Quad& quad3() const { return q3_; }
  const Quad& quad4() const { return q4_; }

 private:
  const MeshLevel* mesh_;
  FlowParams prm_;
  Quad q3_, q4_;

  Csr a0_;                     // constant part of A (mass/k + diffusion/2Re, pressure blocks, LPS)
  std::vector<double> a0rhs_;  // same pattern: mass/k - diffusion/2Re on the velocity blocks
  std::vector<std::array<int, 324>> conv_slots_;  // per element: 4 9x9 blocks (vx,vy)x(vx,vy)
  std::array<std::array<double, 81>, 16> phixphi4_;  // phi_i*phi_j per 4x4 quad point
  std::vector<int> dir_dofs_;  // ascending
  std::array<double, 81> lps_fluct_;  // C = I - E*Pi, row-major 9x9

  void convection_residual(const la::Vec& x, double factor, la::Vec& r) const;
  void add_force(const ForceFunc& f, double t, double weight, la::Vec& r) const;
};

}  // namespace dnnmg
