#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace dnnmg {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

// Channel with one square obstacle, axis aligned, meshed by uniform squares.
// All lengths must be integer multiples of the element size h0 so that every
// refinement level lines up with the obstacle box.
struct ChannelSpec {
  double length = 2.25;
  double height = 0.4;
  double h0 = 0.05;
  double obs_cx = 0.3;   // obstacle center
  double obs_cy = 0.15;
  double obs_side = 0.1;
};

enum class BoundaryTag : std::uint8_t { none = 0, outflow = 1, inflow = 2, wall = 3, obstacle = 4 };

// Q2 element: 9 nodes on the half-step lattice, local index l = 3*ly + lx.
struct Element {
  std::array<int, 9> n;
  double x0 = 0.0, y0 = 0.0;  // lower-left corner
  int ix = 0, iy = 0;         // cell position in the element lattice
};

struct BoundaryEdge {
  int elem;
  int side;  // 0 bottom, 1 right, 2 top, 3 left
  BoundaryTag tag;
};

struct MeshLevel {
  ChannelSpec spec;    // spec.h0 holds this level's element size
  double hx = 0, hy = 0;
  int nx = 0, ny = 0;  // element lattice dims
  std::vector<Vec2> nodes;  // ordered by (y,x), i.e. x fastest
  std::vector<Element> elems;
  std::vector<int> elem_at;  // nx*ny -> element id or -1 inside the obstacle
  std::vector<int> node_at;  // (2nx+1)*(2ny+1) -> node id or -1
  std::vector<BoundaryTag> node_tag;
  std::vector<BoundaryEdge> bedges;
  std::vector<int> parent;  // element -> parent on the coarser level, -1 on level 0
  std::array<int, 4> obstacle_corner_nodes{-1, -1, -1, -1};

  int n_nodes() const { return (int)nodes.size(); }
  int n_elems() const { return (int)elems.size(); }
  // Mixed vector layout: vx block | vy block | p block, each of length n_nodes().
  int n_dofs() const { return 3 * n_nodes(); }

  int elem_id(int ix, int iy) const {
    if (ix < 0 || iy < 0 || ix >= nx || iy >= ny) return -1;
    return elem_at[iy * nx + ix];
  }
  int node_id(int gx, int gy) const {
    if (gx < 0 || gy < 0 || gx > 2 * nx || gy > 2 * ny) return -1;
    return node_at[gy * (2 * nx + 1) + gx];
  }
  bool is_dirichlet_v(int node) const {
    BoundaryTag t = node_tag[node];
    return t == BoundaryTag::inflow || t == BoundaryTag::wall || t == BoundaryTag::obstacle;
  }
};

// Throws std::invalid_argument if the geometry does not line up with h0 or the
// obstacle touches the outer boundary.
MeshLevel build_channel_mesh(const ChannelSpec& spec);

// Uniform quadrisection; fills parent links on the returned level.
MeshLevel refine(const MeshLevel& coarse);

struct MeshHierarchy {
  std::vector<MeshLevel> levels;

  static MeshHierarchy build(const ChannelSpec& spec, int nlevels);
  const MeshLevel& operator[](int l) const { return levels[l]; }
  int n_levels() const { return (int)levels.size(); }
};

// Patch of the correction pair (lc, lc+1): either one coarse element covering
// its 4 children (5x5 fine nodes) or a single fine element (3x3 fine nodes).
// fine_nodes is row-major over the patch node lattice, y outer.
struct Patch {
  std::vector<int> fine_elems;
  std::vector<int> fine_nodes;
  double x0 = 0, y0 = 0, w = 0, h = 0;
  bool is_boundary = false;  // some patch node carries a Dirichlet velocity value
};

enum class PatchMode { coarse_element, fine_element };

std::vector<Patch> enumerate_patches(const MeshHierarchy& hier, int coarse_level, PatchMode mode);

}  // namespace dnnmg
