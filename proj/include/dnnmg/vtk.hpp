#pragma once

#include <string>
#include <vector>

#include "dnnmg/mesh.hpp"

namespace dnnmg {

// Legacy ASCII VTK, unstructured quads.  Cells carry an integer boundary tag
// (0 = interior element, otherwise the strongest tag among its boundary sides).
void write_mesh_vtk(const MeshLevel& m, const std::string& path);

// Same grid plus point data: velocity vectors and pressure.  v is a 2n block
// vector (vx | vy), p has n entries.  Extra named scalar fields may follow.
void write_solution_vtk(const MeshLevel& m, const std::vector<double>& v,
                        const std::vector<double>& p, const std::string& path,
                        const std::vector<std::pair<std::string, const std::vector<double>*>>& extra = {});

}  // namespace dnnmg
