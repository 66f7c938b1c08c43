#include "dnnmg/divfree.hpp"

#include <cmath>
#include <stdexcept>

namespace dnnmg {

Vec2 curl_perp_basis(int i, double x, double y) {
  if (i < 2 || i > 9) throw std::invalid_argument("curl_perp_basis: index out of range");
  int a = (i - 1) % 3, b = (i - 1) / 3;
  auto powi = [](double v, int e) { return e <= 0 ? 1.0 : (e == 1 ? v : v * v); };
  double vx = -b * powi(x, a) * powi(y, b - 1);
  double vy = a * powi(x, a - 1) * powi(y, b);
  return {vx, vy};
}

EtaTable EtaTable::build() {
  EtaTable t;
  for (int i = 2; i <= 9; ++i)
    for (int ly = 0; ly < 3; ++ly)
      for (int lx = 0; lx < 3; ++lx)
        t.eta[i - 2][3 * ly + lx] = curl_perp_basis(i, 0.5 * lx, 0.5 * ly);
  return t;
}

StreamReconstructor::StreamReconstructor(const MeshLevel& fine)
    : mesh_(&fine), tab_(EtaTable::build()), sx_(1.0 / fine.hy), sy_(1.0 / fine.hx) {
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 9; ++j) {
      bmat_[(2 * j + 0) * 8 + k] = tab_.eta[k][j].x * sx_;
      bmat_[(2 * j + 1) * 8 + k] = tab_.eta[k][j].y * sy_;
    }
  wnode_.assign(fine.n_nodes(), 0.0);
  for (const Element& e : fine.elems)
    for (int j = 0; j < 9; ++j) wnode_[e.n[j]] += 1.0;
  for (double& w : wnode_)
    if (w > 0) w = 1.0 / w;
}

std::array<Vec2, 9> StreamReconstructor::local_correction(int elem,
                                                          const std::array<double, 8>& s) const {
  const Element& e = mesh_->elems[elem];
  std::array<Vec2, 9> d;
  for (int j = 0; j < 9; ++j) {
    if (mesh_->is_dirichlet_v(e.n[j])) {
      d[j] = {0.0, 0.0};
      continue;
    }
    double dx = 0, dy = 0;
    for (int k = 0; k < 8; ++k) {
      dx += bmat_[(2 * j + 0) * 8 + k] * s[k];
      dy += bmat_[(2 * j + 1) * 8 + k] * s[k];
    }
    d[j] = {dx, dy};
  }
  return d;
}

la::Vec StreamReconstructor::assemble(const std::vector<std::array<double, 8>>& s_all) const {
  if ((int)s_all.size() != mesh_->n_elems())
    throw std::invalid_argument("stream assemble: one coefficient set per element required");
  int nn = mesh_->n_nodes();
  la::Vec out(2 * nn, 0.0);
  for (int e = 0; e < mesh_->n_elems(); ++e) {
    std::array<Vec2, 9> d = local_correction(e, s_all[e]);
    for (int j = 0; j < 9; ++j) {
      int n = mesh_->elems[e].n[j];
      out[n] += wnode_[n] * d[j].x;
      out[nn + n] += wnode_[n] * d[j].y;
    }
  }
  return out;
}

void StreamReconstructor::assemble_adjoint(const la::Vec& gbar,
                                           std::vector<std::array<double, 8>>& sbar) const {
  int nn = mesh_->n_nodes();
  sbar.assign(mesh_->n_elems(), {});
  for (int e = 0; e < mesh_->n_elems(); ++e) {
    for (int j = 0; j < 9; ++j) {
      int n = mesh_->elems[e].n[j];
      if (mesh_->is_dirichlet_v(n)) continue;
      double gx = wnode_[n] * gbar[n];
      double gy = wnode_[n] * gbar[nn + n];
      for (int k = 0; k < 8; ++k)
        sbar[e][k] += bmat_[(2 * j + 0) * 8 + k] * gx + bmat_[(2 * j + 1) * 8 + k] * gy;
    }
  }
}

}  // namespace dnnmg
