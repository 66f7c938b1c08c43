#include "dnnmg/transfer.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace dnnmg {

namespace {

// 1D quadratic Lagrange basis on [0,1], nodes {0, 1/2, 1}
inline double b1d(int i, double t) {
  switch (i) {
    case 0: return (1.0 - t) * (1.0 - 2.0 * t);
    case 1: return 4.0 * t * (1.0 - t);
    default: return t * (2.0 * t - 1.0);
  }
}

Csr assemble_scalar_mass(const MeshLevel& m) {
  // local 9x9 mass via 3x3 Gauss (exact for Q2 x Q2)
  static const double gp[3] = {0.5 - std::sqrt(0.15), 0.5, 0.5 + std::sqrt(0.15)};
  static const double gw[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  double mloc[9][9] = {};
  for (int qx = 0; qx < 3; ++qx)
    for (int qy = 0; qy < 3; ++qy) {
      double w = gw[qx] * gw[qy] * m.hx * m.hy;
      double phi[9];
      for (int l = 0; l < 9; ++l) phi[l] = b1d(l % 3, gp[qx]) * b1d(l / 3, gp[qy]);
      for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) mloc[i][j] += w * phi[i] * phi[j];
    }

  std::vector<std::vector<int>> rows(m.n_nodes());
  for (const Element& e : m.elems)
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) rows[e.n[i]].push_back(e.n[j]);
  Csr M = Csr::from_rows(m.n_nodes(), rows);
  for (const Element& e : m.elems)
    for (int i = 0; i < 9; ++i) {
      int r = e.n[i];
      for (int j = 0; j < 9; ++j) M.vals[M.slot_checked(r, e.n[j])] += mloc[i][j];
    }
  return M;
}

}  // namespace

Transfer::Transfer(const MeshHierarchy& hier) : hier_(&hier) {
  int nl = hier.n_levels();
  mass_.reserve(nl);
  for (int l = 0; l < nl; ++l) mass_.push_back(assemble_scalar_mass(hier[l]));
  mass_fac_.resize(nl);

  pairs_.resize(nl - 1);
  for (int l = 0; l + 1 < nl; ++l) {
    const MeshLevel& mc = hier[l];
    const MeshLevel& mf = hier[l + 1];
    Pair& pr = pairs_[l];

    std::vector<std::vector<int>> rows(mf.n_nodes());
    std::vector<std::vector<double>> wts(mf.n_nodes());
    for (int gy = 0; gy <= 2 * mf.ny; ++gy)
      for (int gx = 0; gx <= 2 * mf.nx; ++gx) {
        int fn = mf.node_id(gx, gy);
        if (fn < 0) continue;
        // containing coarse cell; on coarse mesh lines both neighbours work,
        // take the first existing one for a deterministic pattern
        auto candidates = [](int g, int ncells) {
          std::array<int, 2> c{g / 4, -1};
          if (g % 4 == 0 && g / 4 > 0) c[1] = g / 4 - 1;
          if (c[0] >= ncells) std::swap(c[0], c[1]);
          return c;
        };
        auto cxs = candidates(gx, mc.nx), cys = candidates(gy, mc.ny);
        int cell = -1, cx = 0, cy = 0;
        for (int a = 0; a < 2 && cell < 0; ++a)
          for (int b = 0; b < 2 && cell < 0; ++b) {
            if (cxs[a] < 0 || cys[b] < 0) continue;
            int id = mc.elem_id(cxs[a], cys[b]);
            if (id >= 0) {
              cell = id;
              cx = cxs[a];
              cy = cys[b];
            }
          }
        if (cell < 0) throw std::logic_error("transfer: fine node outside coarse mesh");
        double xi = 0.25 * (gx - 4 * cx), eta = 0.25 * (gy - 4 * cy);
        for (int ly = 0; ly < 3; ++ly)
          for (int lx = 0; lx < 3; ++lx) {
            double w = b1d(lx, xi) * b1d(ly, eta);
            if (std::fabs(w) < 1e-14) continue;
            rows[fn].push_back(mc.node_id(2 * cx + lx, 2 * cy + ly));
            wts[fn].push_back(w);
          }
      }

    // from_rows sorts columns, so re-derive the weight order through slot lookup
    std::vector<std::vector<int>> rows_copy = rows;
    pr.P = Csr::from_rows(mc.n_nodes(), rows_copy);
    for (int r = 0; r < (int)rows.size(); ++r)
      for (std::size_t k = 0; k < rows[r].size(); ++k)
        pr.P.vals[pr.P.slot_checked(r, rows[r][k])] = wts[r][k];
    pr.PT = pr.P.transposed();

    pr.inject.resize(mc.n_nodes());
    for (int gy = 0; gy <= 2 * mc.ny; ++gy)
      for (int gx = 0; gx <= 2 * mc.nx; ++gx) {
        int cn = mc.node_id(gx, gy);
        if (cn < 0) continue;
        int fn = mf.node_id(2 * gx, 2 * gy);
        if (fn < 0) throw std::logic_error("transfer: coarse node missing on fine level");
        pr.inject[cn] = fn;
      }
  }
}

const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& Transfer::mass_solver(int l) const {
  if (!mass_fac_[l]) {
    const Csr& M = mass_[l];
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(M.nnz());
    for (int r = 0; r < M.nrows; ++r)
      for (int k = M.row_ptr[r]; k < M.row_ptr[r + 1]; ++k)
        trip.emplace_back(r, M.col_idx[k], M.vals[k]);
    Eigen::SparseMatrix<double> A(M.nrows, M.ncols);
    A.setFromTriplets(trip.begin(), trip.end());
    auto fac = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(A);
    if (fac->info() != Eigen::Success) throw std::runtime_error("transfer: mass factorization failed");
    mass_fac_[l] = std::move(fac);
  }
  return *mass_fac_[l];
}

la::Vec Transfer::prolong_scalar(int l, const la::Vec& vc) const { return pairs_[l].P.mult(vc); }

la::Vec Transfer::restrict_functional_scalar(int l, const la::Vec& bf) const {
  return pairs_[l].PT.mult(bf);
}

la::Vec Transfer::restrict_l2_scalar(int l, const la::Vec& vf) const {
  la::Vec mf = mass_[l + 1].mult(vf);
  la::Vec rhs = pairs_[l].PT.mult(mf);
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), rhs.size());
  Eigen::VectorXd x = mass_solver(l).solve(b);
  return la::Vec(x.data(), x.data() + x.size());
}

la::Vec Transfer::inject_scalar(int l, const la::Vec& vf) const {
  const auto& map = pairs_[l].inject;
  la::Vec out(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = vf[map[i]];
  return out;
}

namespace {
template <class F>
la::Vec per_block(int nin, int nout, int nblocks, const la::Vec& v, F&& op) {
  if ((int)v.size() != nin * nblocks) throw std::invalid_argument("transfer: block size mismatch");
  la::Vec out((std::size_t)nout * nblocks);
  for (int b = 0; b < nblocks; ++b) {
    la::Vec in(v.begin() + (std::size_t)b * nin, v.begin() + (std::size_t)(b + 1) * nin);
    la::Vec o = op(in);
    std::copy(o.begin(), o.end(), out.begin() + (std::size_t)b * nout);
  }
  return out;
}
}  // namespace

la::Vec Transfer::prolong(int l, const la::Vec& vc, int nblocks) const {
  int nc = (*hier_)[l].n_nodes(), nf = (*hier_)[l + 1].n_nodes();
  return per_block(nc, nf, nblocks, vc, [&](const la::Vec& x) { return prolong_scalar(l, x); });
}

la::Vec Transfer::restrict_functional(int l, const la::Vec& bf, int nblocks) const {
  int nc = (*hier_)[l].n_nodes(), nf = (*hier_)[l + 1].n_nodes();
  return per_block(nf, nc, nblocks, bf,
                   [&](const la::Vec& x) { return restrict_functional_scalar(l, x); });
}

la::Vec Transfer::restrict_l2(int l, const la::Vec& vf, int nblocks) const {
  int nc = (*hier_)[l].n_nodes(), nf = (*hier_)[l + 1].n_nodes();
  return per_block(nf, nc, nblocks, vf, [&](const la::Vec& x) { return restrict_l2_scalar(l, x); });
}

la::Vec Transfer::inject(int l, const la::Vec& vf, int nblocks) const {
  int nc = (*hier_)[l].n_nodes(), nf = (*hier_)[l + 1].n_nodes();
  return per_block(nf, nc, nblocks, vf, [&](const la::Vec& x) { return inject_scalar(l, x); });
}

}  // namespace dnnmg
