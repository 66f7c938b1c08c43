#include "dnnmg/fem.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace dnnmg {

namespace {

inline double b1d(int i, double t) {
  switch (i) {
    case 0: return (1.0 - t) * (1.0 - 2.0 * t);
    case 1: return 4.0 * t * (1.0 - t);
    default: return t * (2.0 * t - 1.0);
  }
}
inline double db1d(int i, double t) {
  switch (i) {
    case 0: return 4.0 * t - 3.0;
    case 1: return 4.0 - 8.0 * t;
    default: return 4.0 * t - 1.0;
  }
}

// Gauss rules on [0,1]
void gauss1d(int n, std::vector<double>& x, std::vector<double>& w) {
  if (n == 3) {
    double s = std::sqrt(0.15);
    x = {0.5 - s, 0.5, 0.5 + s};
    w = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  } else if (n == 4) {
    double a = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(1.2));
    double b = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(1.2));
    double wa = (18.0 + std::sqrt(30.0)) / 72.0, wb = (18.0 - std::sqrt(30.0)) / 72.0;
    x = {0.5 * (1 - b), 0.5 * (1 - a), 0.5 * (1 + a), 0.5 * (1 + b)};
    w = {wb, wa, wa, wb};
  } else {
    throw std::logic_error("fem: unsupported quadrature order");
  }
}

}  // namespace

double inflow_ramp(double t, double ramp_time) {
  if (ramp_time <= 0.0 || t >= ramp_time) return 1.0;
  if (t <= 0.0) return 0.0;
  return 0.5 * (1.0 - std::cos(M_PI * t / ramp_time));
}

LevelFem::LevelFem(const MeshLevel& m, const FlowParams& prm) : mesh_(&m), prm_(prm) {
  const int N = m.n_nodes();
  const double hx = m.hx, hy = m.hy;

  auto make_quad = [&](int n, Quad& q) {
    std::vector<double> x1, w1;
    gauss1d(n, x1, w1);
    for (int qy = 0; qy < n; ++qy)
      for (int qx = 0; qx < n; ++qx) {
        q.x.push_back(x1[qx]);
        q.y.push_back(x1[qy]);
        q.w.push_back(w1[qx] * w1[qy] * hx * hy);
        std::array<double, 9> phi, dx, dy;
        for (int l = 0; l < 9; ++l) {
          int lx = l % 3, ly = l / 3;
          phi[l] = b1d(lx, x1[qx]) * b1d(ly, x1[qy]);
          dx[l] = db1d(lx, x1[qx]) * b1d(ly, x1[qy]) / hx;
          dy[l] = b1d(lx, x1[qx]) * db1d(ly, x1[qy]) / hy;
        }
        q.phi.push_back(phi);
        q.dphx.push_back(dx);
        q.dphy.push_back(dy);
      }
  };
  make_quad(3, q3_);
  make_quad(4, q4_);

  for (int qp = 0; qp < 16; ++qp)
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) phixphi4_[qp][9 * i + j] = q4_.phi[qp][i] * q4_.phi[qp][j];

  // ---- constant local matrices (same for every element of the level) ----
  std::array<double, 81> M{}, K{}, G0{}, G1{};
  for (std::size_t qp = 0; qp < q3_.w.size(); ++qp) {
    double w = q3_.w[qp];
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) {
        M[9 * i + j] += w * q3_.phi[qp][i] * q3_.phi[qp][j];
        K[9 * i + j] += w * (q3_.dphx[qp][i] * q3_.dphx[qp][j] + q3_.dphy[qp][i] * q3_.dphy[qp][j]);
        G0[9 * i + j] += w * q3_.dphx[qp][i] * q3_.phi[qp][j];
        G1[9 * i + j] += w * q3_.dphy[qp][i] * q3_.phi[qp][j];
      }
  }

  // LPS fluctuation C = I - E * Pi, with Pi the element-local L2 projection
  // onto bilinears (metric drops out on axis-aligned rectangles).
  {
    auto q1 = [](int j, double x, double y) {
      double bx = (j % 2 == 0) ? 1.0 - x : x;
      double by = (j / 2 == 0) ? 1.0 - y : y;
      return bx * by;
    };
    Eigen::Matrix4d Mq = Eigen::Matrix4d::Zero();
    Eigen::Matrix<double, 4, 9> R = Eigen::Matrix<double, 4, 9>::Zero();
    std::vector<double> x1, w1;
    gauss1d(3, x1, w1);
    for (int qx = 0; qx < 3; ++qx)
      for (int qy = 0; qy < 3; ++qy) {
        double w = w1[qx] * w1[qy];
        double q1v[4], q2v[9];
        for (int j = 0; j < 4; ++j) q1v[j] = q1(j, x1[qx], x1[qy]);
        for (int l = 0; l < 9; ++l) q2v[l] = b1d(l % 3, x1[qx]) * b1d(l / 3, x1[qy]);
        for (int a = 0; a < 4; ++a) {
          for (int b = 0; b < 4; ++b) Mq(a, b) += w * q1v[a] * q1v[b];
          for (int l = 0; l < 9; ++l) R(a, l) += w * q1v[a] * q2v[l];
        }
      }
    Eigen::Matrix<double, 4, 9> Pi = Mq.llt().solve(R);
    Eigen::Matrix<double, 9, 4> E;
    for (int i = 0; i < 9; ++i) {
      double nx = 0.5 * (i % 3), ny = 0.5 * (i / 3);
      for (int j = 0; j < 4; ++j) E(i, j) = q1(j, nx, ny);
    }
    Eigen::Matrix<double, 9, 9> C = Eigen::Matrix<double, 9, 9>::Identity() - E * Pi;
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) lps_fluct_[9 * i + j] = C(i, j);
  }

  double alpha_t = prm.alpha0 * prm.re_eq * hx * hy;
  std::array<double, 81> S{};
  {
    // S = alpha_T * C^T K C
    std::array<double, 81> KC{};
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) {
        double s = 0;
        for (int l = 0; l < 9; ++l) s += K[9 * i + l] * lps_fluct_[9 * l + j];
        KC[9 * i + j] = s;
      }
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) {
        double s = 0;
        for (int l = 0; l < 9; ++l) s += lps_fluct_[9 * l + i] * KC[9 * l + j];
        S[9 * i + j] = alpha_t * s;
      }
  }

  // ---- mixed sparsity: full 27x27 coupling per element ----
  {
    std::vector<std::vector<int>> adj(N);
    for (const Element& e : m.elems)
      for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) adj[e.n[i]].push_back(e.n[j]);
    std::vector<std::vector<int>> rows(3 * N);
    for (int i = 0; i < N; ++i) {
      auto& a = adj[i];
      std::sort(a.begin(), a.end());
      a.erase(std::unique(a.begin(), a.end()), a.end());
      for (int f = 0; f < 3; ++f) {
        auto& r = rows[f * N + i];
        r.reserve(3 * a.size());
        for (int b = 0; b < 3; ++b)
          for (int j : a) r.push_back(b * N + j);
      }
    }
    a0_ = Csr::from_rows(3 * N, rows);
  }

  // constant operator values and the rhs companion
  double mk = 1.0 / prm.k, dfc = 0.5 / prm.re_eq;
  a0rhs_.assign(a0_.nnz(), 0.0);
  for (const Element& e : m.elems) {
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) {
        double mij = M[9 * i + j], kij = K[9 * i + j];
        for (int a = 0; a < 2; ++a) {
          int s = a0_.slot_checked(a * N + e.n[i], a * N + e.n[j]);
          a0_.vals[s] += mk * mij + dfc * kij;
          a0rhs_[s] += mk * mij - dfc * kij;
        }
        // -(p, div phi) on velocity rows
        a0_.vals[a0_.slot_checked(e.n[i], 2 * N + e.n[j])] -= G0[9 * i + j];
        a0_.vals[a0_.slot_checked(N + e.n[i], 2 * N + e.n[j])] -= G1[9 * i + j];
        // (div v, xi) on pressure rows
        a0_.vals[a0_.slot_checked(2 * N + e.n[i], e.n[j])] += G0[9 * j + i];
        a0_.vals[a0_.slot_checked(2 * N + e.n[i], N + e.n[j])] += G1[9 * j + i];
        // LPS
        a0_.vals[a0_.slot_checked(2 * N + e.n[i], 2 * N + e.n[j])] += S[9 * i + j];
      }
  }

  conv_slots_.resize(m.n_elems());
  for (int id = 0; id < m.n_elems(); ++id) {
    const Element& e = m.elems[id];
    auto& sl = conv_slots_[id];
    int p = 0;
    for (int a = 0; a < 2; ++a)
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 9; ++i)
          for (int j = 0; j < 9; ++j)
            sl[p++] = a0_.slot_checked(a * N + e.n[i], c * N + e.n[j]);
  }

  for (int i = 0; i < N; ++i)
    if (m.is_dirichlet_v(i)) {
      dir_dofs_.push_back(i);
      dir_dofs_.push_back(N + i);
    }
  std::sort(dir_dofs_.begin(), dir_dofs_.end());
}

void LevelFem::convection_residual(const la::Vec& x, double factor, la::Vec& r) const {
  const int N = mesh_->n_nodes();
  for (const Element& e : mesh_->elems) {
    double v1[9], v2[9];
    for (int l = 0; l < 9; ++l) {
      v1[l] = x[e.n[l]];
      v2[l] = x[N + e.n[l]];
    }
    double acc1[9] = {}, acc2[9] = {};
    for (std::size_t qp = 0; qp < q4_.w.size(); ++qp) {
      const auto& phi = q4_.phi[qp];
      const auto& dx = q4_.dphx[qp];
      const auto& dy = q4_.dphy[qp];
      double u = 0, v = 0, u_x = 0, u_y = 0, v_x = 0, v_y = 0;
      for (int l = 0; l < 9; ++l) {
        u += phi[l] * v1[l];
        v += phi[l] * v2[l];
        u_x += dx[l] * v1[l];
        u_y += dy[l] * v1[l];
        v_x += dx[l] * v2[l];
        v_y += dy[l] * v2[l];
      }
      double w = factor * q4_.w[qp];
      double c1 = w * (u * u_x + v * u_y), c2 = w * (u * v_x + v * v_y);
      for (int l = 0; l < 9; ++l) {
        acc1[l] += c1 * phi[l];
        acc2[l] += c2 * phi[l];
      }
    }
    for (int l = 0; l < 9; ++l) {
      r[e.n[l]] += acc1[l];
      r[N + e.n[l]] += acc2[l];
    }
  }
}

la::Vec LevelFem::apply_operator(const la::Vec& x) const {
  la::Vec r(n_dofs());
  a0_.mult(x.data(), r.data());
  convection_residual(x, 0.5, r);
  return r;
}

la::Vec LevelFem::assemble_residual_raw(const la::Vec& x, const la::Vec& b) const {
  la::Vec r = apply_operator(x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
  return r;
}

la::Vec LevelFem::assemble_residual(const la::Vec& x, const la::Vec& b, double t) const {
  la::Vec r = assemble_residual_raw(x, b);
  for (int d : dir_dofs_) r[d] = x[d] - dirichlet_value(d, t);
  return r;
}

void LevelFem::assemble_jacobian(const la::Vec& x, Csr& J) const {
  if (J.nnz() != a0_.nnz()) throw std::logic_error("fem: jacobian pattern mismatch");
  std::memcpy(J.vals.data(), a0_.vals.data(), sizeof(double) * a0_.nnz());

  const int N = mesh_->n_nodes();
  const int ne = mesh_->n_elems();
  for (int id = 0; id < ne; ++id) {
    const Element& e = mesh_->elems[id];
    double v1[9], v2[9];
    for (int l = 0; l < 9; ++l) {
      v1[l] = x[e.n[l]];
      v2[l] = x[N + e.n[l]];
    }
    // blocks in (a,c) order: (0,0) (0,1) (1,0) (1,1)
    double blk[4][81] = {};
    for (std::size_t qp = 0; qp < q4_.w.size(); ++qp) {
      const auto& phi = q4_.phi[qp];
      const auto& dx = q4_.dphx[qp];
      const auto& dy = q4_.dphy[qp];
      double u = 0, v = 0, u_x = 0, u_y = 0, v_x = 0, v_y = 0;
      for (int l = 0; l < 9; ++l) {
        u += phi[l] * v1[l];
        v += phi[l] * v2[l];
        u_x += dx[l] * v1[l];
        u_y += dy[l] * v1[l];
        v_x += dx[l] * v2[l];
        v_y += dy[l] * v2[l];
      }
      double w = 0.5 * q4_.w[qp];
      const auto& pp = phixphi4_[qp];
      double g[4] = {w * u_x, w * u_y, w * v_x, w * v_y};  // d_c v_a
      for (int b = 0; b < 4; ++b) {
        double gb = g[b];
        if (gb != 0.0)
          for (int k = 0; k < 81; ++k) blk[b][k] += gb * pp[k];
      }
      double adv[9];
      for (int l = 0; l < 9; ++l) adv[l] = w * (u * dx[l] + v * dy[l]);
      for (int i = 0; i < 9; ++i) {
        double pi = phi[i];
        for (int j = 0; j < 9; ++j) {
          double t = pi * adv[j];
          blk[0][9 * i + j] += t;  // (0,0)
          blk[3][9 * i + j] += t;  // (1,1)
        }
      }
    }
    const auto& sl = conv_slots_[id];
    for (int b = 0; b < 4; ++b)
      for (int k = 0; k < 81; ++k) J.vals[sl[81 * b + k]] += blk[b][k];
  }

  for (int d : dir_dofs_) {
    for (int k = J.row_ptr[d]; k < J.row_ptr[d + 1]; ++k)
      J.vals[k] = (J.col_idx[k] == d) ? 1.0 : 0.0;
  }
}

void LevelFem::add_force(const ForceFunc& f, double t, double weight, la::Vec& r) const {
  if (!f) return;
  const int N = mesh_->n_nodes();
  for (const Element& e : mesh_->elems) {
    for (std::size_t qp = 0; qp < q3_.w.size(); ++qp) {
      double px = e.x0 + q3_.x[qp] * mesh_->hx, py = e.y0 + q3_.y[qp] * mesh_->hy;
      Vec2 fv = f(px, py, t);
      double w = weight * q3_.w[qp];
      for (int l = 0; l < 9; ++l) {
        r[e.n[l]] += w * fv.x * q3_.phi[qp][l];
        r[N + e.n[l]] += w * fv.y * q3_.phi[qp][l];
      }
    }
  }
}

la::Vec LevelFem::assemble_rhs(const la::Vec& xprev, double told, double tnew,
                               const ForceFunc& f) const {
  la::Vec b(n_dofs());
  a0_.mult_ext(a0rhs_.data(), xprev.data(), b.data());
  convection_residual(xprev, -0.5, b);
  add_force(f, tnew, 0.5, b);
  add_force(f, told, 0.5, b);
  return b;
}

double LevelFem::dirichlet_value(int dof, double t) const {
  const int N = mesh_->n_nodes();
  int comp = dof / N, node = dof % N;
  if (comp != 0) return 0.0;
  if (mesh_->node_tag[node] != BoundaryTag::inflow) return 0.0;
  double H = mesh_->spec.height;
  double y = mesh_->nodes[node].y;
  return inflow_ramp(t, prm_.ramp_time) * prm_.vmax * 4.0 * y * (H - y) / (H * H);
}

void LevelFem::apply_dirichlet(la::Vec& x, double t) const {
  for (int d : dir_dofs_) x[d] = dirichlet_value(d, t);
}

std::vector<std::array<double, 9>> LevelFem::lps_project(const la::Vec& p) const {
  if ((int)p.size() != mesh_->n_nodes()) throw std::invalid_argument("lps_project: scalar field expected");
  std::vector<std::array<double, 9>> out(mesh_->n_elems());
  for (int id = 0; id < mesh_->n_elems(); ++id) {
    const Element& e = mesh_->elems[id];
    std::array<double, 9>& o = out[id];
    for (int i = 0; i < 9; ++i) {
      double s = 0;
      for (int j = 0; j < 9; ++j) s += (((i == j) ? 1.0 : 0.0) - lps_fluct_[9 * i + j]) * p[e.n[j]];
      o[i] = s;
    }
  }
  return out;
}

}  // namespace dnnmg
