#pragma once

// Procedural geometry: icospheres, bumpy (asymmetric) test models, plane
// patches and scene composition helpers. Used by the benchmark harness and
// the test suites; all generators are deterministic under their seeds.

#include "posekit/cloud.hpp"
#include "posekit/rng.hpp"

#include <map>
#include <utility>

namespace posekit {

/// Unit icosphere centered at the origin with outward winding.
inline TriangleMesh icosphere(int subdivisions) {
  TriangleMesh mesh;
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  const double s = std::sqrt(1.0 + t * t);
  auto add = [&](double x, double y, double z) {
    mesh.vertices.emplace_back(Vec3(x, y, z) / s);
  };
  add(-1, t, 0); add(1, t, 0); add(-1, -t, 0); add(1, -t, 0);
  add(0, -1, t); add(0, 1, t); add(0, -1, -t); add(0, 1, -t);
  add(t, 0, -1); add(t, 0, 1); add(-t, 0, -1); add(-t, 0, 1);
  mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const Vec3 m = (mesh.vertices[static_cast<std::size_t>(a)] +
                      mesh.vertices[static_cast<std::size_t>(b)])
                         .normalized();
      mesh.vertices.push_back(m);
      const int id = static_cast<int>(mesh.vertices.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(mesh.faces.size() * 4);
    for (const auto& f : mesh.faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    mesh.faces = std::move(next);
  }
  return mesh;
}

/// Star-shaped closed surface with smooth pseudo-random lobes; asymmetric,
/// so it has a unique alignment with itself. The mesh is scaled to the
/// requested bounding-box diagonal.
inline TriangleMesh bumpy_sphere_mesh(int subdivisions, double diagonal, int lobes,
                                      std::uint64_t seed) {
  TriangleMesh mesh = icosphere(subdivisions);
  Rng rng(derive_seed(seed, 0x626c6f62));
  std::vector<Vec3> axes;
  std::vector<double> amplitude, frequency, phase;
  for (int i = 0; i < lobes; ++i) {
    axes.push_back(rng.unit_vector());
    amplitude.push_back(rng.uniform(0.05, 0.18) / std::max(1, lobes));
    frequency.push_back(rng.uniform(1.5, 4.5));
    phase.push_back(rng.uniform(0.0, 2.0 * kPi));
  }
  for (Vec3& v : mesh.vertices) {
    const Vec3 dir = v.normalized();
    double radius = 1.0;
    for (int i = 0; i < lobes; ++i)
      radius += amplitude[static_cast<std::size_t>(i)] *
                std::sin(frequency[static_cast<std::size_t>(i)] *
                             dir.dot(axes[static_cast<std::size_t>(i)]) * kPi +
                         phase[static_cast<std::size_t>(i)]);
    v = dir * radius;
  }
  Vec3 lo = mesh.vertices.front(), hi = mesh.vertices.front();
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double scale = diagonal / (hi - lo).norm();
  for (Vec3& v : mesh.vertices) v *= scale;
  return mesh;
}

/// Applies a rigid motion to a cloud (normals rotate).
inline PointCloud transformed(const PointCloud& cloud, const Pose& pose) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back(apply(pose, p));
  out.normals.reserve(cloud.normals.size());
  for (const Vec3& n : cloud.normals) out.normals.push_back(pose.rotation * n);
  return out;
}

/// Concatenates two clouds; normals are kept only when both sides have them.
inline PointCloud concat(const PointCloud& a, const PointCloud& b) {
  PointCloud out = a;
  out.points.insert(out.points.end(), b.points.begin(), b.points.end());
  if (a.has_normals() && b.has_normals())
    out.normals.insert(out.normals.end(), b.normals.begin(), b.normals.end());
  else
    out.normals.clear();
  return out;
}

/// Jittered grid on the z = 0 plane with +z normals.
inline PointCloud plane_patch(int nx, int ny, double spacing, double jitter = 0.0,
                              std::uint64_t seed = 0) {
  Rng rng(derive_seed(seed, 0x706c616e65));
  PointCloud out;
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      Vec3 p(i * spacing, j * spacing, 0.0);
      if (jitter > 0.0) {
        p.x() += rng.uniform(-jitter, jitter);
        p.y() += rng.uniform(-jitter, jitter);
      }
      out.points.push_back(p);
      out.normals.push_back(Vec3::UnitZ());
    }
  }
  return out;
}

/// Uniform sample of a sphere surface with outward (radial) normals.
inline PointCloud sphere_cloud(int n, double radius, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x7370686572));
  PointCloud out;
  for (int i = 0; i < n; ++i) {
    const Vec3 dir = rng.unit_vector();
    out.points.push_back(dir * radius);
    out.normals.push_back(dir);
  }
  return out;
}

/// Uniform clutter cloud in a box, with random unit normals.
inline PointCloud clutter_cloud(int n, const Vec3& lo, const Vec3& hi, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x636c7574));
  PointCloud out;
  for (int i = 0; i < n; ++i) {
    out.points.push_back(rng.in_box(lo, hi));
    out.normals.push_back(rng.unit_vector());
  }
  return out;
}

}  // namespace posekit
