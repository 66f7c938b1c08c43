#include "dnnmg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace dnnmg {

double divergence_norm(const LevelFem& fem, const la::Vec& x, bool exclude_corners) {
  const MeshLevel& m = fem.mesh();
  int nn = m.n_nodes();
  std::vector<char> corner(nn, 0);
  if (exclude_corners)
    for (int n : m.obstacle_corner_nodes)
      if (n >= 0) corner[n] = 1;

  const LevelFem::Quad& q = fem.quad3();
  double acc = 0.0;
  for (const Element& e : m.elems) {
    bool skip = false;
    for (int j = 0; j < 9 && !skip; ++j) skip = corner[e.n[j]] != 0;
    if (skip) continue;
    for (size_t qp = 0; qp < q.w.size(); ++qp) {
      double div = 0.0;
      for (int j = 0; j < 9; ++j)
        div += x[e.n[j]] * q.dphx[qp][j] + x[nn + e.n[j]] * q.dphy[qp][j];
      acc += q.w[qp] * div * div;
    }
  }
  return std::sqrt(acc);
}

std::pair<double, double> drag_lift_residual(const LevelFem& fem, const la::Vec& x,
                                             const la::Vec& b_raw) {
  const MeshLevel& m = fem.mesh();
  int nn = m.n_nodes();
  la::Vec r = fem.assemble_residual_raw(x, b_raw);
  double drag = 0.0, lift = 0.0;
  for (int n = 0; n < nn; ++n)
    if (m.node_tag[n] == BoundaryTag::obstacle) {
      drag -= r[n];
      lift -= r[nn + n];
    }
  return {drag, lift};
}

std::pair<double, double> drag_lift_boundary(const LevelFem& fem, const la::Vec& x) {
  const MeshLevel& m = fem.mesh();
  int nn = m.n_nodes();
  double nu = 1.0 / fem.params().re_eq;
  // element outward normal per side; the obstacle-outward normal is its negative
  static const double side_nrm[4][2] = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
  const double gx[3] = {0.5 - std::sqrt(0.15), 0.5, 0.5 + std::sqrt(0.15)};
  const double gw[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

  double drag = 0.0, lift = 0.0;
  for (const BoundaryEdge& be : m.bedges) {
    if (be.tag != BoundaryTag::obstacle) continue;
    const Element& e = m.elems[be.elem];
    double elen = (be.side % 2 == 0) ? m.hx : m.hy;
    double nxo = -side_nrm[be.side][0], nyo = -side_nrm[be.side][1];
    for (int q = 0; q < 3; ++q) {
      // reference coordinates of the quadrature point on that side
      double rx, ry;
      switch (be.side) {
        case 0: rx = gx[q], ry = 0.0; break;
        case 1: rx = 1.0, ry = gx[q]; break;
        case 2: rx = 1.0 - gx[q], ry = 1.0; break;
        default: rx = 0.0, ry = 1.0 - gx[q]; break;
      }
      double ux = 0, uy = 0, vx = 0, vy = 0, p = 0;
      for (int j = 0; j < 9; ++j) {
        int lx = j % 3, ly = j / 3;
        auto b1 = [](int i, double t) {
          return i == 0 ? (1 - t) * (1 - 2 * t) : (i == 1 ? 4 * t * (1 - t) : t * (2 * t - 1));
        };
        auto db1 = [](int i, double t) {
          return i == 0 ? 4 * t - 3 : (i == 1 ? 4 - 8 * t : 4 * t - 1);
        };
        double ph = b1(lx, rx) * b1(ly, ry);
        double dx = db1(lx, rx) * b1(ly, ry) / m.hx;
        double dy = b1(lx, rx) * db1(ly, ry) / m.hy;
        ux += x[e.n[j]] * dx;
        uy += x[e.n[j]] * dy;
        vx += x[nn + e.n[j]] * dx;
        vy += x[nn + e.n[j]] * dy;
        p += x[2 * nn + e.n[j]] * ph;
      }
      double w = gw[q] * elen;
      drag += w * (nu * (ux * nxo + uy * nyo) - p * nxo);
      lift += w * (nu * (vx * nxo + vy * nyo) - p * nyo);
    }
  }
  return {drag, lift};
}

OscStats oscillation_stats(const std::vector<double>& t, const std::vector<double>& v, double t0,
                           double t1) {
  if (t.size() != v.size()) throw std::invalid_argument("oscillation_stats: length mismatch");
  OscStats s;
  s.t0 = t0;
  s.t1 = t1;
  std::vector<double> tt, vv;
  for (size_t i = 0; i < t.size(); ++i)
    if (t[i] >= t0 && t[i] <= t1) {
      tt.push_back(t[i]);
      vv.push_back(v[i]);
    }
  if (tt.empty()) {
    s.freq = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.minv = s.maxv = vv[0];
  double sum = 0.0;
  for (double x : vv) {
    s.minv = std::min(s.minv, x);
    s.maxv = std::max(s.maxv, x);
    sum += x;
  }
  s.mean = sum / vv.size();
  s.ampl = s.maxv - s.minv;

  std::vector<double> cross;
  for (size_t i = 1; i < vv.size(); ++i) {
    double a = vv[i - 1] - s.mean, b = vv[i] - s.mean;
    if (a < 0.0 && b >= 0.0) {
      double frac = (b - a) > 0 ? -a / (b - a) : 0.0;
      cross.push_back(tt[i - 1] + frac * (tt[i] - tt[i - 1]));
    }
  }
  if (cross.size() >= 2) {
    double span = cross.back() - cross.front();
    if (span > 0) {
      s.freq = (double)(cross.size() - 1) / span;
      s.has_freq = true;
    }
  }
  if (!s.has_freq) s.freq = std::numeric_limits<double>::quiet_NaN();
  return s;
}

std::vector<double> velocity_error_field(const MeshLevel& m, const la::Vec& v,
                                         const la::Vec& ref) {
  int nn = m.n_nodes();
  if ((int)v.size() < 2 * nn || (int)ref.size() < 2 * nn)
    throw std::invalid_argument("velocity_error_field: state too short for this level");
  std::vector<double> out(nn);
  for (int n = 0; n < nn; ++n) out[n] = std::hypot(v[n] - ref[n], v[nn + n] - ref[nn + n]);
  return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size())
    throw std::invalid_argument("write_csv: header/column count mismatch");
  size_t nrow = columns.empty() ? 0 : columns[0].size();
  for (const auto& c : columns)
    if (c.size() != nrow) throw std::invalid_argument("write_csv: ragged columns");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (size_t j = 0; j < header.size(); ++j) f << (j ? "," : "") << header[j];
  f << "\n";
  char buf[32];
  for (size_t i = 0; i < nrow; ++i) {
    for (size_t j = 0; j < columns.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.6g", columns[j][i]);
      f << (j ? "," : "") << buf;
    }
    f << "\n";
  }
}

}  // namespace dnnmg
