#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <memory>
#include <vector>

#include "dnnmg/la.hpp"
#include "dnnmg/mesh.hpp"
#include "dnnmg/sparse.hpp"

namespace dnnmg {

// Grid transfer between consecutive levels.
//
// Prolongation is nodal interpolation (exact on nested Q2 spaces).  Functional
// restriction is its transpose and moves right-hand sides / residuals down.
// Function restriction is the L2 projection  M_c x = P^T M_f v,  which inverts
// prolongation exactly; injection (coarse nodes are fine nodes) is used where a
// cheap representative state is enough, e.g. re-discretizing Jacobians.
class Transfer {
 public:
  explicit Transfer(const MeshHierarchy& hier);

  // scalar fields, level l <-> l+1
  la::Vec prolong_scalar(int l, const la::Vec& vc) const;
  la::Vec restrict_functional_scalar(int l, const la::Vec& bf) const;
  la::Vec restrict_l2_scalar(int l, const la::Vec& vf) const;
  la::Vec inject_scalar(int l, const la::Vec& vf) const;

  // block vectors: nblocks consecutive scalar blocks (2 = velocity, 3 = mixed)
  la::Vec prolong(int l, const la::Vec& vc, int nblocks = 3) const;
  la::Vec restrict_functional(int l, const la::Vec& bf, int nblocks = 3) const;
  la::Vec restrict_l2(int l, const la::Vec& vf, int nblocks = 3) const;
  la::Vec inject(int l, const la::Vec& vf, int nblocks = 3) const;

  const Csr& prolongation(int l) const { return pairs_[l].P; }
  const Csr& scalar_mass(int l) const { return mass_[l]; }

 private:
  const MeshHierarchy* hier_;
  struct Pair {
    Csr P, PT;
    std::vector<int> inject;  // coarse node -> fine node
  };
  std::vector<Pair> pairs_;
  std::vector<Csr> mass_;
  mutable std::vector<std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>> mass_fac_;

  const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& mass_solver(int l) const;
};

}  // namespace dnnmg
