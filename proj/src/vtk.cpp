#include "dnnmg/vtk.hpp"

#include <cstdio>
#include <stdexcept>
#include <vector>

namespace dnnmg {

namespace {

FILE* open_or_throw(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("vtk: cannot open " + path);
  return f;
}

void write_grid(FILE* f, const MeshLevel& m) {
  std::fprintf(f, "# vtk DataFile Version 3.0\nchannel\nASCII\nDATASET UNSTRUCTURED_GRID\n");
  std::fprintf(f, "POINTS %d double\n", m.n_nodes());
  for (const Vec2& p : m.nodes) std::fprintf(f, "%.9g %.9g 0\n", p.x, p.y);
  int ne = m.n_elems();
  std::fprintf(f, "CELLS %d %d\n", ne, 5 * ne);
  for (const Element& e : m.elems)
    std::fprintf(f, "4 %d %d %d %d\n", e.n[0], e.n[2], e.n[8], e.n[6]);
  std::fprintf(f, "CELL_TYPES %d\n", ne);
  for (int i = 0; i < ne; ++i) std::fprintf(f, "9\n");

  std::vector<int> ctag(ne, 0);
  for (const BoundaryEdge& be : m.bedges)
    ctag[be.elem] = std::max(ctag[be.elem], (int)be.tag);
  std::fprintf(f, "CELL_DATA %d\nSCALARS boundary int 1\nLOOKUP_TABLE default\n", ne);
  for (int t : ctag) std::fprintf(f, "%d\n", t);
}

}  // namespace

void write_mesh_vtk(const MeshLevel& m, const std::string& path) {
  FILE* f = open_or_throw(path);
  write_grid(f, m);
  std::fclose(f);
}

void write_solution_vtk(const MeshLevel& m, const std::vector<double>& v,
                        const std::vector<double>& p, const std::string& path,
                        const std::vector<std::pair<std::string, const std::vector<double>*>>& extra) {
  int n = m.n_nodes();
  if ((int)v.size() != 2 * n || (int)p.size() != n)
    throw std::invalid_argument("vtk: field sizes do not match the mesh");
  FILE* f = open_or_throw(path);
  write_grid(f, m);
  std::fprintf(f, "POINT_DATA %d\nVECTORS velocity double\n", n);
  for (int i = 0; i < n; ++i) std::fprintf(f, "%.9g %.9g 0\n", v[i], v[n + i]);
  std::fprintf(f, "SCALARS pressure double 1\nLOOKUP_TABLE default\n");
  for (int i = 0; i < n; ++i) std::fprintf(f, "%.9g\n", p[i]);
  for (const auto& [name, field] : extra) {
    if ((int)field->size() != n) throw std::invalid_argument("vtk: extra field size");
    std::fprintf(f, "SCALARS %s double 1\nLOOKUP_TABLE default\n", name.c_str());
    for (int i = 0; i < n; ++i) std::fprintf(f, "%.9g\n", (*field)[i]);
  }
  std::fclose(f);
}

}  // namespace dnnmg
