#include "advnerf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

namespace advnerf {

void DensityGrid::validate() const {
  if (nx < 2 || ny < 2 || nz < 2)
    fail(ErrorCode::InvalidArgument, cat("DensityGrid: resolution ", nx, "x", ny, "x", nz, " below 2"));
  if (values.size() != static_cast<size_t>(nx) * ny * nz)
    fail(ErrorCode::InvalidArgument, "DensityGrid: value count mismatch");
  for (double v : values)
    if (v < 0.0) fail(ErrorCode::InvalidArgument, "DensityGrid: negative density");
}

DensityGrid export_density_grid(const std::function<double(const Vec3&)>& sigma, int resolution) {
  if (resolution < 2) fail(ErrorCode::InvalidArgument, "export_density_grid: resolution must be >= 2");
  DensityGrid g;
  g.nx = g.ny = g.nz = resolution;
  g.values.resize(static_cast<size_t>(resolution) * resolution * resolution);
  for (int iz = 0; iz < resolution; ++iz)
    for (int iy = 0; iy < resolution; ++iy)
      for (int ix = 0; ix < resolution; ++ix) g.at(ix, iy, iz) = sigma(g.node(ix, iy, iz));
  return g;
}

DensityGrid export_density_grid(const RadianceField& field, int resolution) {
  if (resolution < 2) fail(ErrorCode::InvalidArgument, "export_density_grid: resolution must be >= 2");
  DensityGrid g;
  g.nx = g.ny = g.nz = resolution;
  g.values.resize(static_cast<size_t>(resolution) * resolution * resolution);

  // batched sigma queries, one z-slab at a time
  const int slab = static_cast<int>(std::max<size_t>(1, (1 << 16) / (static_cast<size_t>(resolution) * resolution)));
  for (int z0 = 0; z0 < resolution; z0 += slab) {
    const int zn = std::min(slab, resolution - z0);
    const int rows = zn * resolution * resolution;
    std::vector<double> pos(static_cast<size_t>(rows) * 3);
    size_t r = 0;
    for (int iz = z0; iz < z0 + zn; ++iz)
      for (int iy = 0; iy < resolution; ++iy)
        for (int ix = 0; ix < resolution; ++ix) {
          Vec3 p = g.node(ix, iy, iz);
          pos[r * 3 + 0] = p.x;
          pos[r * 3 + 1] = p.y;
          pos[r * 3 + 2] = p.z;
          ++r;
        }
    Tensor sigma = field.sigma_forward(Tensor::from(std::move(pos), {rows, 3}));
    auto sv = sigma.values();
    std::copy(sv.begin(), sv.end(),
              g.values.begin() + static_cast<size_t>(z0) * resolution * resolution);
  }
  return g;
}

void save_density_grid(const DensityGrid& grid, const std::string& base_path) {
  grid.validate();
  {
    std::ofstream raw(base_path + ".raw", std::ios::binary);
    if (!raw) fail(ErrorCode::Io, "save_density_grid: cannot write " + base_path + ".raw");
    std::vector<float> f(grid.values.size());
    for (size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(grid.values[i]);
    raw.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  nlohmann::json j;
  j["dtype"] = "float32";
  j["order"] = "x-fastest";
  j["resolution"] = {grid.nx, grid.ny, grid.nz};
  j["bb_min"] = {grid.bb_min.x, grid.bb_min.y, grid.bb_min.z};
  j["bb_max"] = {grid.bb_max.x, grid.bb_max.y, grid.bb_max.z};
  j["voxel_size"] = {grid.spacing(0), grid.spacing(1), grid.spacing(2)};
  std::ofstream hdr(base_path + ".json");
  if (!hdr) fail(ErrorCode::Io, "save_density_grid: cannot write " + base_path + ".json");
  hdr << j.dump(2) << "\n";
}

namespace {

// cube corner offsets and the edges between them, standard numbering
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

TriangleMesh marching_cubes(const DensityGrid& grid, double threshold) {
  grid.validate();
  TriangleMesh mesh;

  // weld key: lattice edge identified by its lower endpoint and axis
  auto edge_key = [&](int ix, int iy, int iz, int axis) {
    return ((static_cast<int64_t>(iz) * grid.ny + iy) * grid.nx + ix) * 3 + axis;
  };
  std::map<int64_t, int> vertex_of_edge;

  auto edge_vertex = [&](int cx, int cy, int cz, int edge) {
    const int* a = kCorner[kEdgeCorners[edge][0]];
    const int* b = kCorner[kEdgeCorners[edge][1]];
    int ax = cx + a[0], ay = cy + a[1], az = cz + a[2];
    int bx = cx + b[0], by = cy + b[1], bz = cz + b[2];
    int axis = (ax != bx) ? 0 : (ay != by ? 1 : 2);
    // canonical direction: lower endpoint first
    if (ax > bx || ay > by || az > bz) {
      std::swap(ax, bx);
      std::swap(ay, by);
      std::swap(az, bz);
    }
    const int64_t key = edge_key(ax, ay, az, axis);
    auto it = vertex_of_edge.find(key);
    if (it != vertex_of_edge.end()) return it->second;

    const double va = grid.at(ax, ay, az);
    const double vb = grid.at(bx, by, bz);
    double frac = 0.5;
    if (vb != va) frac = (threshold - va) / (vb - va);
    frac = std::min(std::max(frac, 0.0), 1.0);
    Vec3 pa = grid.node(ax, ay, az);
    Vec3 pb = grid.node(bx, by, bz);
    Vec3 p = pa + (pb - pa) * frac;
    const int idx = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    vertex_of_edge.emplace(key, idx);
    return idx;
  };

  for (int cz = 0; cz + 1 < grid.nz; ++cz)
    for (int cy = 0; cy + 1 < grid.ny; ++cy)
      for (int cx = 0; cx + 1 < grid.nx; ++cx) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const double v = grid.at(cx + kCorner[c][0], cy + kCorner[c][1], cz + kCorner[c][2]);
          if (v < threshold) cube |= 1 << c;
        }
        if (mc::kEdgeTable[cube] == 0) continue;
        const int* tri = mc::kTriTable[cube];
        for (int i = 0; tri[i] != -1; i += 3) {
          const int v0 = edge_vertex(cx, cy, cz, tri[i]);
          const int v1 = edge_vertex(cx, cy, cz, tri[i + 1]);
          const int v2 = edge_vertex(cx, cy, cz, tri[i + 2]);
          if (v0 == v1 || v1 == v2 || v0 == v2) continue;  // degenerate after welding
          const Vec3 e1 = mesh.vertices[static_cast<size_t>(v1)] - mesh.vertices[static_cast<size_t>(v0)];
          const Vec3 e2 = mesh.vertices[static_cast<size_t>(v2)] - mesh.vertices[static_cast<size_t>(v0)];
          if (e1.cross(e2).norm() == 0.0) continue;
          mesh.triangles.push_back({v0, v1, v2});
        }
      }
  return mesh;
}

void write_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "write_obj: cannot write " + path);
  out.precision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x << " " << v.y << " " << v.z << "\n";
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  if (!out) fail(ErrorCode::Io, "write_obj: write failed for " + path);
}

// --- chamfer -------------------------------------------------------------------

namespace {

// exact nearest neighbor via a median-split kd-tree
class KdTree {
 public:
  explicit KdTree(const PointSet& pts) : pts_(pts), idx_(pts.size()) {
    std::iota(idx_.begin(), idx_.end(), 0);
    nodes_.reserve(pts.size() * 2);
    root_ = build(0, static_cast<int>(pts.size()), 0);
  }

  double nearest_sq(const Vec3& q) const {
    double best = std::numeric_limits<double>::infinity();
    search(root_, q, best);
    return best;
  }

 private:
  struct Node {
    int axis = 0;
    int point = -1;
    int left = -1, right = -1;
  };

  int build(int lo, int hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const int mid = (lo + hi) / 2;
    std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                     [&](int a, int b) { return (&pts_[static_cast<size_t>(a)].x)[axis] <
                                                (&pts_[static_cast<size_t>(b)].x)[axis]; });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({axis, idx_[static_cast<size_t>(mid)], -1, -1});
    nodes_[static_cast<size_t>(id)].left = build(lo, mid, depth + 1);
    nodes_[static_cast<size_t>(id)].right = build(mid + 1, hi, depth + 1);
    return id;
  }

  void search(int id, const Vec3& q, double& best) const {
    if (id < 0) return;
    const Node& n = nodes_[static_cast<size_t>(id)];
    const Vec3& p = pts_[static_cast<size_t>(n.point)];
    const double dx = q.x - p.x, dy = q.y - p.y, dz = q.z - p.z;
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < best) best = d2;
    const double split = (&p.x)[n.axis] - (&q.x)[n.axis];
    const int near = split > 0.0 ? n.left : n.right;
    const int far = split > 0.0 ? n.right : n.left;
    search(near, q, best);
    if (split * split < best) search(far, q, best);
  }

  const PointSet& pts_;
  std::vector<int> idx_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

double directed_mean_nn(const PointSet& from, const KdTree& tree) {
  double total = 0.0;
  for (const auto& p : from) total += std::sqrt(tree.nearest_sq(p));
  return total / static_cast<double>(from.size());
}

}  // namespace

double chamfer_distance(const PointSet& a, const PointSet& b) {
  if (a.empty() || b.empty()) fail(ErrorCode::InvalidArgument, "chamfer_distance: empty point set");
  KdTree ta(a), tb(b);
  return directed_mean_nn(a, tb) + directed_mean_nn(b, ta);
}

}  // namespace advnerf
