#pragma once

#include <array>
#include <vector>

#include "dnnmg/la.hpp"
#include "dnnmg/mesh.hpp"

namespace dnnmg {

// curl-perp of the monomial x^a y^b: (-d/dy, d/dx), indexed i = 2..9 with
// i-1 = 3b+a; the constant monomial (i=1) has no curl and is excluded
Vec2 curl_perp_basis(int i, double x, double y);

// nodal samples of the 8 derived velocities at the 9 Lagrange points of the
// reference element [0,1]^2, node = 3*ly + lx
struct EtaTable {
  std::array<std::array<Vec2, 9>, 8> eta;
  static EtaTable build();
};

// Stream-function corrections on one mesh level: per-element reconstruction
// from 8 coefficients, Dirichlet zeroing, and shared-node averaging into a
// global (vx | vy) velocity vector.  The reference monomials live on [0,1]^2,
// so the x component scales by 1/hy and the y component by 1/hx; that keeps
// the physical field pointwise divergence free.
class StreamReconstructor {
 public:
  explicit StreamReconstructor(const MeshLevel& fine);

  // nodal correction of one element, Dirichlet nodes zeroed
  std::array<Vec2, 9> local_correction(int elem, const std::array<double, 8>& s) const;

  // coefficients for every element (element id order) -> averaged global field
  la::Vec assemble(const std::vector<std::array<double, 8>>& s_all) const;

  // adjoint of assemble: global cotangent -> per-element coefficient gradients
  void assemble_adjoint(const la::Vec& gbar, std::vector<std::array<double, 8>>& sbar) const;

  // reference reconstruction matrix, row 2*node+comp, column = coefficient;
  // physical scaling included, Dirichlet zeroing not (it is per node)
  const std::array<double, 144>& elem_matrix() const { return bmat_; }
  double node_weight(int node) const { return wnode_[node]; }
  const MeshLevel& mesh() const { return *mesh_; }
  const EtaTable& table() const { return tab_; }

 private:
  const MeshLevel* mesh_;
  EtaTable tab_;
  double sx_, sy_;
  std::array<double, 144> bmat_;
  std::vector<double> wnode_;
};

}  // namespace dnnmg
