#include "dnnmg/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace dnnmg {

Discretization::Discretization(const MeshHierarchy& h, const FlowParams& p)
    : hier(&h), prm(p), transfer(h) {
  fems.reserve(h.levels.size());
  for (const auto& m : h.levels) fems.push_back(std::make_unique<LevelFem>(m, p));
}

// ---- direct solver ----------------------------------------------------------

void DirectSolver::analyze(const Csr& pattern) {
  n_ = pattern.nrows;
  dense_ = n_ < 2000;
  if (dense_) {
    dmat_.setZero(n_, n_);
    analyzed_ = true;
    return;
  }
  // CSC pattern of the same matrix plus the csr slot -> csc slot map, so a
  // refactorization is a value copy without symbolic work
  int nnz = (int)pattern.col_idx.size();
  std::vector<int> colptr(n_ + 1, 0);
  for (int c : pattern.col_idx) colptr[c + 1]++;
  for (int c = 0; c < n_; ++c) colptr[c + 1] += colptr[c];
  std::vector<int> rowidx(nnz);
  std::vector<double> vals(nnz, 0.0);
  perm_.resize(nnz);
  std::vector<int> fill(colptr.begin(), colptr.end() - 1);
  for (int r = 0; r < n_; ++r)
    for (int k = pattern.row_ptr[r]; k < pattern.row_ptr[r + 1]; ++k) {
      int s = fill[pattern.col_idx[k]]++;
      rowidx[s] = r;
      perm_[k] = s;
    }
  smat_ = Eigen::Map<const Eigen::SparseMatrix<double>>(n_, n_, nnz, colptr.data(),
                                                        rowidx.data(), vals.data());
  slu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
  slu_->analyzePattern(smat_);
  analyzed_ = true;
}

void DirectSolver::factor(const Csr& A) {
  if (!analyzed_) analyze(A);
  if (dense_) {
    dmat_.setZero();
    for (int r = 0; r < n_; ++r)
      for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k)
        dmat_(r, A.col_idx[k]) = A.vals[k];
    dlu_.compute(dmat_);
    if (!dlu_.isInvertible()) throw std::runtime_error("direct solver: singular matrix");
    return;
  }
  double* v = smat_.valuePtr();
  for (size_t k = 0; k < A.vals.size(); ++k) v[perm_[k]] = A.vals[k];
  slu_->factorize(smat_);
  if (slu_->info() != Eigen::Success)
    throw std::runtime_error("direct solver: sparse LU factorization failed");
}

void DirectSolver::solve(const la::Vec& b, la::Vec& x) const {
  Eigen::Map<const Eigen::VectorXd> bm(b.data(), n_);
  Eigen::VectorXd xe = dense_ ? dlu_.solve(bm).eval() : slu_->solve(bm).eval();
  x.resize(n_);
  std::memcpy(x.data(), xe.data(), n_ * sizeof(double));
}

// ---- Vanka smoother ---------------------------------------------------------

namespace {

void lup_factor(double* a, int* piv, int n) {
  for (int k = 0; k < n; ++k) {
    int p = k;
    double amax = std::abs(a[k * n + k]);
    for (int i = k + 1; i < n; ++i) {
      double m = std::abs(a[i * n + k]);
      if (m > amax) {
        amax = m;
        p = i;
      }
    }
    if (amax < 1e-300) throw std::runtime_error("vanka: singular patch matrix");
    piv[k] = p;
    if (p != k)
      for (int j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
    double d = 1.0 / a[k * n + k];
    for (int i = k + 1; i < n; ++i) {
      double f = (a[i * n + k] *= d);
      const double* rk = a + k * n;
      double* ri = a + i * n;
      for (int j = k + 1; j < n; ++j) ri[j] -= f * rk[j];
    }
  }
}

void lup_solve(const double* a, const int* piv, double* b, int n) {
  for (int k = 0; k < n; ++k)
    if (piv[k] != k) std::swap(b[k], b[piv[k]]);
  for (int k = 1; k < n; ++k) {
    double s = b[k];
    const double* r = a + k * n;
    for (int j = 0; j < k; ++j) s -= r[j] * b[j];
    b[k] = s;
  }
  for (int k = n - 1; k >= 0; --k) {
    double s = b[k];
    const double* r = a + k * n;
    for (int j = k + 1; j < n; ++j) s -= r[j] * b[j];
    b[k] = s / r[k];
  }
}

}  // namespace

VankaSmoother::VankaSmoother(const MeshLevel& m, const Csr& pattern) {
  ne_ = m.n_elems();
  int nn = m.n_nodes();
  dofs_.resize(ne_);
  slots_.resize(ne_);
  for (int e = 0; e < ne_; ++e) {
    for (int i = 0; i < 9; ++i) {
      int nd = m.elems[e].n[i];
      dofs_[e][i] = nd;
      dofs_[e][9 + i] = nn + nd;
      dofs_[e][18 + i] = 2 * nn + nd;
    }
    for (int a = 0; a < 27; ++a)
      for (int b = 0; b < 27; ++b)
        slots_[e][a * 27 + b] = pattern.slot_checked(dofs_[e][a], dofs_[e][b]);
  }
  // 2x2 cell coloring; same-color elements share no node
  order_.resize(ne_);
  int pos = 0;
  for (int color = 0; color < 4; ++color)
    for (int e = 0; e < ne_; ++e)
      if ((m.elems[e].ix % 2) + 2 * (m.elems[e].iy % 2) == color) order_[pos++] = e;
  lu_.resize((size_t)ne_ * 729);
  piv_.resize((size_t)ne_ * 27);
}

void VankaSmoother::factor(const Csr& A) {
  for (int e = 0; e < ne_; ++e) {
    double* a = lu_.data() + (size_t)e * 729;
    const auto& sl = slots_[e];
    for (int k = 0; k < 729; ++k) a[k] = A.vals[sl[k]];
    lup_factor(a, piv_.data() + (size_t)e * 27, 27);
  }
}

void VankaSmoother::sweep(const Csr& A, const la::Vec& b, la::Vec& x, double omega) const {
  double loc[27];
  for (int e : order_) {
    const auto& d = dofs_[e];
    for (int a = 0; a < 27; ++a) {
      int row = d[a];
      double s = b[row];
      for (int k = A.row_ptr[row]; k < A.row_ptr[row + 1]; ++k)
        s -= A.vals[k] * x[A.col_idx[k]];
      loc[a] = s;
    }
    lup_solve(lu_.data() + (size_t)e * 729, piv_.data() + (size_t)e * 27, loc, 27);
    for (int a = 0; a < 27; ++a) x[d[a]] += omega * loc[a];
  }
}

// ---- multigrid --------------------------------------------------------------

MgPreconditioner::MgPreconditioner(Discretization& d, int top_level, const SolverConfig& cfg)
    : disc_(&d), top_(top_level), cfg_(cfg) {
  jac_.reserve(top_ + 1);
  vanka_.resize(top_ + 1);
  for (int l = 0; l <= top_; ++l) {
    jac_.push_back(d.fem(l).pattern());
    if (l > 0) vanka_[l] = std::make_unique<VankaSmoother>((*d.hier)[l], jac_[l]);
  }
  coarse_.analyze(jac_[0]);
}

void MgPreconditioner::update(const la::Vec& x_top) {
  std::vector<la::Vec> state(top_ + 1);
  state[top_] = x_top;
  for (int l = top_ - 1; l >= 0; --l) state[l] = disc_->transfer.inject(l, state[l + 1]);
  for (int l = 0; l <= top_; ++l) {
    disc_->fem(l).assemble_jacobian(state[l], jac_[l]);
    if (l > 0) vanka_[l]->factor(jac_[l]);
  }
  coarse_.factor(jac_[0]);
}

void MgPreconditioner::vcycle(int l, const la::Vec& b, la::Vec& x) const {
  if (l == 0) {
    coarse_.solve(b, x);
    return;
  }
  const Csr& J = jac_[l];
  for (int s = 0; s < cfg_.pre_smooth; ++s) vanka_[l]->sweep(J, b, x, cfg_.vanka_omega);
  la::Vec r(J.nrows);
  J.mult(x.data(), r.data());
  for (int i = 0; i < J.nrows; ++i) r[i] = b[i] - r[i];
  la::Vec bc = disc_->transfer.restrict_functional(l - 1, r);
  for (int d : disc_->fem(l - 1).dirichlet_dofs()) bc[d] = 0.0;
  la::Vec xc(bc.size(), 0.0);
  vcycle(l - 1, bc, xc);
  la::Vec corr = disc_->transfer.prolong(l - 1, xc);
  for (size_t i = 0; i < x.size(); ++i) x[i] += corr[i];
  for (int s = 0; s < cfg_.post_smooth; ++s) vanka_[l]->sweep(J, b, x, cfg_.vanka_omega);
}

void MgPreconditioner::apply(const la::Vec& r, la::Vec& z) const {
  z.assign(r.size(), 0.0);
  vcycle(top_, r, z);
}

// ---- GMRES ------------------------------------------------------------------

GmresResult gmres(const Csr& A, const la::Vec& b, la::Vec& x, const MgPreconditioner* M,
                  double tol, int restart, int maxiter) {
  int n = A.nrows;
  int m = restart;
  double bn = la::norm2(b);
  if (bn == 0.0) {
    x.assign(n, 0.0);
    return {true, 0, 0.0};
  }
  std::vector<la::Vec> V(m + 1, la::Vec(n));
  la::Vec w(n), z(n);
  std::vector<double> H((size_t)(m + 1) * m, 0.0), cs(m), sn(m), g(m + 1), y(m);
  auto hij = [&](int i, int j) -> double& { return H[(size_t)j * (m + 1) + i]; };
  GmresResult res;
  la::Vec r(n);
  while (true) {
    A.mult(x.data(), r.data());
    for (int i = 0; i < n; ++i) r[i] = b[i] - r[i];
    double rn = la::norm2(r);
    res.rel_res = rn / bn;
    if (res.rel_res < tol) {
      res.converged = true;
      return res;
    }
    if (res.iters >= maxiter) return res;
    for (int i = 0; i < n; ++i) V[0][i] = r[i] / rn;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = rn;
    int j = 0;
    for (; j < m && res.iters < maxiter; ++j) {
      if (M)
        M->apply(V[j], z);
      else
        z = V[j];
      A.mult(z.data(), w.data());
      for (int i = 0; i <= j; ++i) {
        double h = la::dot(w, V[i]);
        hij(i, j) = h;
        la::axpy(-h, V[i], w);
      }
      double hh = la::norm2(w);
      hij(j + 1, j) = hh;
      bool breakdown = hh < 1e-300;
      if (!breakdown)
        for (int i = 0; i < n; ++i) V[j + 1][i] = w[i] / hh;
      for (int i = 0; i < j; ++i) {
        double t0 = cs[i] * hij(i, j) + sn[i] * hij(i + 1, j);
        double t1 = -sn[i] * hij(i, j) + cs[i] * hij(i + 1, j);
        hij(i, j) = t0;
        hij(i + 1, j) = t1;
      }
      double t = std::hypot(hij(j, j), hij(j + 1, j));
      cs[j] = hij(j, j) / t;
      sn[j] = hij(j + 1, j) / t;
      hij(j, j) = t;
      hij(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] *= cs[j];
      ++res.iters;
      if (std::abs(g[j + 1]) / bn < tol || breakdown) {
        ++j;
        break;
      }
    }
    for (int k = j - 1; k >= 0; --k) {
      double s = g[k];
      for (int i = k + 1; i < j; ++i) s -= hij(k, i) * y[i];
      y[k] = s / hij(k, k);
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (int k = 0; k < j; ++k) la::axpy(y[k], V[k], w);
    if (M) {
      M->apply(w, z);
      for (int i = 0; i < n; ++i) x[i] += z[i];
    } else {
      for (int i = 0; i < n; ++i) x[i] += w[i];
    }
  }
}

// ---- Newton -----------------------------------------------------------------

NewtonSolver::NewtonSolver(Discretization& d, int level, const SolverConfig& cfg)
    : disc_(&d), level_(level), cfg_(cfg), mg_(d, level, cfg) {}

NewtonReport NewtonSolver::solve(la::Vec& x, const la::Vec& b, double t) {
  auto& fem = disc_->fem(level_);
  int n = fem.n_dofs();
  fem.apply_dirichlet(x, t);
  NewtonReport rep;
  la::Vec w(n), xt(n), rc;
  double rn0 = 0.0;
  for (int it = 0;; ++it) {
    la::Vec r = fem.assemble_residual(x, b, t);
    double rn = la::norm2(r);
    rep.res_norms.push_back(rn);
    if (it == 0) rn0 = std::max(rn, 1e-300);
    if (rn < cfg_.newton_tol || rn < 1e-12 * rn0) {
      rep.converged = true;
      rep.iters = it;
      return rep;
    }
    if (it == cfg_.newton_max) break;
    mg_.update(x);
    for (int i = 0; i < n; ++i) r[i] = -r[i];
    w.assign(n, 0.0);
    GmresResult gr =
        gmres(mg_.matrix(level_), r, w, &mg_, cfg_.gmres_tol, cfg_.gmres_restart, cfg_.gmres_max);
    rep.gmres_iters.push_back(gr.iters);
    double step = 1.0;
    for (int ls = 0;; ++ls) {
      xt = x;
      la::axpy(step, w, xt);
      fem.apply_dirichlet(xt, t);
      rc = fem.assemble_residual(xt, b, t);
      if (la::norm2(rc) < rn || ls >= cfg_.line_search_max) break;
      step *= 0.5;
    }
    x = xt;
  }
  rep.converged = false;
  rep.iters = cfg_.newton_max;
  rep.what = "newton: no convergence, last residual " + std::to_string(rep.res_norms.back());
  return rep;
}

}  // namespace dnnmg
