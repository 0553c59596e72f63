#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "advnerf/common.hpp"
#include "advnerf/field.hpp"

namespace advnerf {

namespace mc {
extern const int kEdgeTable[256];
extern const int kTriTable[256][16];
}  // namespace mc

/// Scalar density volume over an axis-aligned box, sampled at lattice cell
/// centers: node (i,j,k) sits at min + (i+0.5)*spacing. Values are stored
/// x-fastest.
struct DensityGrid {
  int nx = 0, ny = 0, nz = 0;
  Vec3 bb_min{-1, -1, -1};
  Vec3 bb_max{1, 1, 1};
  std::vector<double> values;

  double spacing(int axis) const {
    const double ext = (&bb_max.x)[axis] - (&bb_min.x)[axis];
    const int n = axis == 0 ? nx : (axis == 1 ? ny : nz);
    return ext / static_cast<double>(n);
  }
  Vec3 node(int ix, int iy, int iz) const {
    return {bb_min.x + (ix + 0.5) * spacing(0), bb_min.y + (iy + 0.5) * spacing(1),
            bb_min.z + (iz + 0.5) * spacing(2)};
  }
  double at(int ix, int iy, int iz) const {
    return values[static_cast<size_t>(iz) * ny * nx + static_cast<size_t>(iy) * nx + ix];
  }
  double& at(int ix, int iy, int iz) {
    return values[static_cast<size_t>(iz) * ny * nx + static_cast<size_t>(iy) * nx + ix];
  }
  void validate() const;
};

/// Clean density sampled on the lattice (no perturbations).
DensityGrid export_density_grid(const RadianceField& field, int resolution);
DensityGrid export_density_grid(const std::function<double(const Vec3&)>& sigma, int resolution);

/// Raw float32 volume + JSON header sidecar (<base>.raw, <base>.json).
void save_density_grid(const DensityGrid& grid, const std::string& base_path);

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

/// Standard 256-case marching cubes with linear edge interpolation. Shared
/// cube-edge crossings are welded to one vertex; zero-area triangles are
/// dropped. A threshold outside the value range yields an empty mesh.
TriangleMesh marching_cubes(const DensityGrid& grid, double threshold);

void write_obj(const TriangleMesh& mesh, const std::string& path);

using PointSet = std::vector<Vec3>;

/// Symmetric Chamfer distance: mean nearest-neighbor distance in both
/// directions. Accelerated by a kd-tree; bit-compatible with the O(n^2)
/// double loop. Errors on empty sets.
double chamfer_distance(const PointSet& a, const PointSet& b);

}  // namespace advnerf
