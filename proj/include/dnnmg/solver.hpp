#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <memory>
#include <vector>

#include "dnnmg/fem.hpp"
#include "dnnmg/transfer.hpp"

namespace dnnmg {

struct SolverConfig {
  double newton_tol = 1e-8;
  int newton_max = 12;
  double gmres_tol = 1e-4;  // relative
  int gmres_restart = 50;
  int gmres_max = 200;
  int pre_smooth = 4;
  int post_smooth = 4;
  double vanka_omega = 0.8;
  int line_search_max = 5;
};

// Discretizations for every level of a hierarchy plus the grid transfer.
struct Discretization {
  const MeshHierarchy* hier;
  FlowParams prm;
  Transfer transfer;
  std::vector<std::unique_ptr<LevelFem>> fems;

  Discretization(const MeshHierarchy& h, const FlowParams& p);
  LevelFem& fem(int l) { return *fems[l]; }
  const LevelFem& fem(int l) const { return *fems[l]; }
  int n_levels() const { return (int)fems.size(); }
};

// Sparse LU on the coarsest grid; dense LU with an explicit rank check below
// dimension 2000.  The symbolic analysis is reused across refactorizations.
class DirectSolver {
 public:
  void analyze(const Csr& pattern);
  void factor(const Csr& A);  // throws std::runtime_error on a singular matrix
  void solve(const la::Vec& b, la::Vec& x) const;

 private:
  int n_ = 0;
  bool dense_ = false;
  Eigen::MatrixXd dmat_;
  Eigen::FullPivLU<Eigen::MatrixXd> dlu_;
  Eigen::SparseMatrix<double> smat_;
  std::vector<int> perm_;  // csr slot -> csc slot
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> slu_;
  bool analyzed_ = false;
};

// Element-patch Vanka: per element all 27 local velocity+pressure dofs, exact
// dense solve, damped update.  Patches are visited color by color (3x3 cell
// coloring), ascending element id within a color, so sweeps are deterministic
// and races stay impossible if the color loops ever run in parallel.
class VankaSmoother {
 public:
  explicit VankaSmoother(const MeshLevel& m, const Csr& pattern);
  void factor(const Csr& A);
  void sweep(const Csr& A, const la::Vec& b, la::Vec& x, double omega) const;

 private:
  int ne_ = 0;
  std::vector<std::array<int, 27>> dofs_;
  std::vector<std::array<int, 729>> slots_;  // gather positions in the level matrix
  std::vector<int> order_;
  std::vector<double> lu_;   // ne x 729
  std::vector<int> piv_;     // ne x 27
};

// Geometric multigrid on the Jacobian: Vanka smoothing, functional restriction
// of the defect, direct solve on level 0.  One V-cycle serves as the (linear)
// GMRES preconditioner.
class MgPreconditioner {
 public:
  MgPreconditioner(Discretization& d, int top_level, const SolverConfig& cfg);

  // re-discretize the Jacobian on every level from the top state (injected
  // downwards) and refresh all factorizations
  void update(const la::Vec& x_top);

  void vcycle(int l, const la::Vec& b, la::Vec& x) const;
  void apply(const la::Vec& r, la::Vec& z) const;  // z = one V-cycle from zero
  const Csr& matrix(int l) const { return jac_[l]; }
  int top_level() const { return top_; }

 private:
  Discretization* disc_;
  int top_;
  SolverConfig cfg_;
  std::vector<Csr> jac_;
  std::vector<std::unique_ptr<VankaSmoother>> vanka_;
  DirectSolver coarse_;
};

struct GmresResult {
  bool converged = false;
  int iters = 0;
  double rel_res = 0.0;
};

// Restarted GMRES with right preconditioning; x holds the initial guess.
GmresResult gmres(const Csr& A, const la::Vec& b, la::Vec& x, const MgPreconditioner* M,
                  double tol, int restart, int maxiter);

struct NewtonReport {
  bool converged = false;
  int iters = 0;
  std::vector<double> res_norms;
  std::vector<int> gmres_iters;
  std::string what;  // failure description if not converged
};

class NewtonSolver {
 public:
  NewtonSolver(Discretization& d, int level, const SolverConfig& cfg);

  // solve A(x) = b at time t, x is the initial guess and the solution
  NewtonReport solve(la::Vec& x, const la::Vec& b, double t);

  MgPreconditioner& precond() { return mg_; }
  const SolverConfig& config() const { return cfg_; }

 private:
  Discretization* disc_;
  int level_;
  SolverConfig cfg_;
  MgPreconditioner mg_;
};

}  // namespace dnnmg
