#include "dnnmg/mesh.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dnnmg {

namespace {

// exact multiple of h, or -1
int as_cells(double len, double h) {
  double q = len / h;
  double r = std::round(q);
  if (std::fabs(q - r) > 1e-9 * std::max(1.0, q)) return -1;
  return (int)r;
}

struct ObstacleBox {
  int x0, x1, y0, y1;  // element-cell range [x0,x1) x [y0,y1)
};

ObstacleBox obstacle_cells(const ChannelSpec& s) {
  double h = s.h0;
  int x0 = as_cells(s.obs_cx - 0.5 * s.obs_side, h);
  int y0 = as_cells(s.obs_cy - 0.5 * s.obs_side, h);
  int w = as_cells(s.obs_side, h);
  if (x0 < 0 || y0 < 0 || w < 0)
    throw std::invalid_argument("mesh: obstacle box not aligned with the element lattice");
  return {x0, x0 + w, y0, y0 + w};
}

}  // namespace

MeshLevel build_channel_mesh(const ChannelSpec& spec) {
  MeshLevel m;
  m.spec = spec;
  m.hx = m.hy = spec.h0;
  m.nx = as_cells(spec.length, spec.h0);
  m.ny = as_cells(spec.height, spec.h0);
  if (m.nx <= 0 || m.ny <= 0)
    throw std::invalid_argument("mesh: channel size is not a multiple of h0");
  ObstacleBox ob = obstacle_cells(spec);
  if (ob.x0 <= 0 || ob.y0 <= 0 || ob.x1 >= m.nx || ob.y1 >= m.ny)
    throw std::invalid_argument("mesh: obstacle must be strictly inside the channel");

  auto in_obstacle = [&](int ix, int iy) {
    return ix >= ob.x0 && ix < ob.x1 && iy >= ob.y0 && iy < ob.y1;
  };

  // nodes on the half-step lattice, skipping the open interior of the obstacle
  int gnx = 2 * m.nx + 1, gny = 2 * m.ny + 1;
  m.node_at.assign((std::size_t)gnx * gny, -1);
  for (int gy = 0; gy < gny; ++gy)
    for (int gx = 0; gx < gnx; ++gx) {
      bool inside = gx > 2 * ob.x0 && gx < 2 * ob.x1 && gy > 2 * ob.y0 && gy < 2 * ob.y1;
      if (inside) continue;
      m.node_at[(std::size_t)gy * gnx + gx] = (int)m.nodes.size();
      m.nodes.push_back({0.5 * spec.h0 * gx, 0.5 * spec.h0 * gy});
    }

  m.elem_at.assign((std::size_t)m.nx * m.ny, -1);
  for (int iy = 0; iy < m.ny; ++iy)
    for (int ix = 0; ix < m.nx; ++ix) {
      if (in_obstacle(ix, iy)) continue;
      Element e;
      e.ix = ix;
      e.iy = iy;
      e.x0 = ix * spec.h0;
      e.y0 = iy * spec.h0;
      for (int ly = 0; ly < 3; ++ly)
        for (int lx = 0; lx < 3; ++lx) e.n[3 * ly + lx] = m.node_id(2 * ix + lx, 2 * iy + ly);
      m.elem_at[(std::size_t)iy * m.nx + ix] = (int)m.elems.size();
      m.elems.push_back(e);
    }

  // boundary edges; tag rank decides at shared nodes (obstacle > wall > inflow > outflow)
  m.node_tag.assign(m.nodes.size(), BoundaryTag::none);
  auto tag_nodes = [&](const Element& e, int side, BoundaryTag t) {
    static const int side_nodes[4][3] = {{0, 1, 2}, {2, 5, 8}, {6, 7, 8}, {0, 3, 6}};
    for (int k = 0; k < 3; ++k) {
      int nd = e.n[side_nodes[side][k]];
      if ((int)t > (int)m.node_tag[nd]) m.node_tag[nd] = t;
    }
  };
  for (int id = 0; id < m.n_elems(); ++id) {
    const Element& e = m.elems[id];
    const int dx[4] = {0, 1, 0, -1}, dy[4] = {-1, 0, 1, 0};
    for (int side = 0; side < 4; ++side) {
      int jx = e.ix + dx[side], jy = e.iy + dy[side];
      BoundaryTag t = BoundaryTag::none;
      if (jy < 0 || jy >= m.ny) t = BoundaryTag::wall;
      else if (jx < 0) t = BoundaryTag::inflow;
      else if (jx >= m.nx) t = BoundaryTag::outflow;
      else if (in_obstacle(jx, jy)) t = BoundaryTag::obstacle;
      if (t == BoundaryTag::none) continue;
      m.bedges.push_back({id, side, t});
      tag_nodes(e, side, t);
    }
  }

  m.obstacle_corner_nodes = {m.node_id(2 * ob.x0, 2 * ob.y0), m.node_id(2 * ob.x1, 2 * ob.y0),
                             m.node_id(2 * ob.x0, 2 * ob.y1), m.node_id(2 * ob.x1, 2 * ob.y1)};
  m.parent.assign(m.elems.size(), -1);
  return m;
}

MeshLevel refine(const MeshLevel& coarse) {
  ChannelSpec s = coarse.spec;
  s.h0 *= 0.5;
  MeshLevel fine = build_channel_mesh(s);
  for (int id = 0; id < fine.n_elems(); ++id) {
    const Element& e = fine.elems[id];
    fine.parent[id] = coarse.elem_id(e.ix / 2, e.iy / 2);
  }
  return fine;
}

MeshHierarchy MeshHierarchy::build(const ChannelSpec& spec, int nlevels) {
  if (nlevels < 1) throw std::invalid_argument("mesh: need at least one level");
  MeshHierarchy h;
  h.levels.push_back(build_channel_mesh(spec));
  for (int l = 1; l < nlevels; ++l) h.levels.push_back(refine(h.levels.back()));
  return h;
}

std::vector<Patch> enumerate_patches(const MeshHierarchy& hier, int coarse_level, PatchMode mode) {
  if (coarse_level + 1 >= hier.n_levels())
    throw std::invalid_argument("patches: no finer level above the requested one");
  const MeshLevel& mc = hier[coarse_level];
  const MeshLevel& mf = hier[coarse_level + 1];

  std::vector<Patch> out;
  auto push_lattice = [&](Patch& p, int gx0, int gy0, int n) {
    bool dir = false;
    for (int ly = 0; ly < n; ++ly)
      for (int lx = 0; lx < n; ++lx) {
        int nd = mf.node_id(gx0 + lx, gy0 + ly);
        p.fine_nodes.push_back(nd);
        if (nd >= 0 && mf.is_dirichlet_v(nd)) dir = true;
      }
    p.is_boundary = dir;
  };

  if (mode == PatchMode::coarse_element) {
    out.reserve(mc.n_elems());
    for (const Element& e : mc.elems) {
      Patch p;
      p.x0 = e.x0;
      p.y0 = e.y0;
      p.w = mc.hx;
      p.h = mc.hy;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) p.fine_elems.push_back(mf.elem_id(2 * e.ix + dx, 2 * e.iy + dy));
      push_lattice(p, 4 * e.ix, 4 * e.iy, 5);
      out.push_back(std::move(p));
    }
  } else {
    out.reserve(mf.n_elems());
    for (int id = 0; id < mf.n_elems(); ++id) {
      const Element& e = mf.elems[id];
      Patch p;
      p.x0 = e.x0;
      p.y0 = e.y0;
      p.w = mf.hx;
      p.h = mf.hy;
      p.fine_elems.push_back(id);
      push_lattice(p, 2 * e.ix, 2 * e.iy, 3);
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace dnnmg
