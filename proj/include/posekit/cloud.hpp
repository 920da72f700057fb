#pragma once

// Point cloud and triangle mesh data model plus the preprocessing
// operations used ahead of feature matching: vertex/point normal
// estimation, consistent normal orientation, voxel-grid downsampling and
// controlled uniform noise injection.
//
// All types are plain values, immutable by convention after construction;
// operations return new clouds and never mutate their inputs.

#include "posekit/detail/parallel.hpp"
#include "posekit/geom.hpp"
#include "posekit/kdtree.hpp"
#include "posekit/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace posekit {

/// Surface point paired with its outward unit normal.
struct OrientedPoint {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
};

/// A matched pair of oriented points (object side, scene side).
struct OrientedPair {
  OrientedPoint object;
  OrientedPoint scene;
};

struct PointCloud {
  std::vector<Vec3> points;
  /// Either empty or parallel to points, each entry unit length.
  std::vector<Vec3> normals;

  std::size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }
  OrientedPoint oriented(int id) const {
    return {points[static_cast<std::size_t>(id)], normals[static_cast<std::size_t>(id)]};
  }
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }
};

/// Length of the axis-aligned bounding box diagonal.
inline double bounding_box_diagonal(const PointCloud& cloud) {
  if (cloud.points.empty())
    throw std::invalid_argument("bounding_box_diagonal: empty cloud");
  Vec3 lo = cloud.points.front(), hi = cloud.points.front();
  for (const Vec3& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

inline Vec3 centroid(const PointCloud& cloud) {
  if (cloud.points.empty()) throw std::invalid_argument("centroid: empty cloud");
  Vec3 sum = Vec3::Zero();
  for (const Vec3& p : cloud.points) sum += p;
  return sum / static_cast<double>(cloud.points.size());
}

/// Cloud produced by an operation that may discard unusable points.
struct CloudResult {
  PointCloud cloud;
  std::size_t dropped = 0;
};

/// Per-vertex normals as the normalized area-weighted sum of incident face
/// normals (the unnormalized cross product of edge vectors is twice the
/// face area times its unit normal, so summing raw cross products is the
/// area weighting). Vertices without any incident face are dropped.
inline CloudResult mesh_vertex_normals(const TriangleMesh& mesh) {
  std::vector<Vec3> accum(mesh.vertices.size(), Vec3::Zero());
  std::vector<int> incident(mesh.vertices.size(), 0);
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
    const Vec3 fn = (b - a).cross(c - a);
    for (int k = 0; k < 3; ++k) {
      accum[static_cast<std::size_t>(f[k])] += fn;
      ++incident[static_cast<std::size_t>(f[k])];
    }
  }
  CloudResult out;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const double norm = accum[i].norm();
    if (incident[i] == 0 || norm < 1e-20) {
      ++out.dropped;
      continue;
    }
    out.cloud.points.push_back(mesh.vertices[i]);
    out.cloud.normals.push_back(accum[i] / norm);
  }
  return out;
}

/// Normal per point as the least-variance direction of its k-neighborhood
/// covariance. Signs are arbitrary; run orient_normals afterwards.
/// Points whose neighborhood is fully coincident are dropped.
inline CloudResult estimate_normals(const PointCloud& cloud, int k, unsigned threads = 0) {
  if (k < 1) throw std::invalid_argument("estimate_normals: k must be positive");
  if (cloud.size() < static_cast<std::size_t>(k) + 1)
    throw std::invalid_argument("estimate_normals: cloud must have at least k+1 points");

  const KdTree tree(cloud.points);
  const std::size_t n = cloud.size();
  std::vector<Vec3> normals(n);
  std::vector<char> ok(n, 1);

  detail::parallel_for(
      n,
      [&](std::size_t i) {
        const auto ids = tree.knn(cloud.points[i], k + 1);
        Vec3 mean = Vec3::Zero();
        for (int id : ids) mean += cloud.points[static_cast<std::size_t>(id)];
        mean /= static_cast<double>(ids.size());
        Mat3 cov = Mat3::Zero();
        for (int id : ids) {
          const Vec3 d = cloud.points[static_cast<std::size_t>(id)] - mean;
          cov += d * d.transpose();
        }
        if (cov.trace() <= 1e-24) {
          ok[i] = 0;
          return;
        }
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        normals[i] = eig.eigenvectors().col(0).normalized();
      },
      threads);

  CloudResult out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!ok[i]) {
      ++out.dropped;
      continue;
    }
    out.cloud.points.push_back(cloud.points[i]);
    out.cloud.normals.push_back(normals[i]);
  }
  return out;
}

/// Orientation pass result; `components` counts the connected components of
/// the k-NN graph, each oriented independently.
struct OrientResult {
  PointCloud cloud;
  std::size_t components = 0;
};

/// Makes normal signs globally consistent by breadth-first traversal of the
/// (symmetrized) k-NN graph: a visited neighbor is flipped when its normal
/// opposes its BFS predecessor's. Each component is seeded at its highest-z
/// point with that normal forced into the +z hemisphere, which orients
/// height-field-like scans outward.
inline OrientResult orient_normals(const PointCloud& cloud, int k) {
  if (!cloud.has_normals())
    throw std::invalid_argument("orient_normals: cloud has no normals");
  const std::size_t n = cloud.size();
  OrientResult out;
  out.cloud = cloud;
  if (n == 1) {
    out.components = 1;
    return out;
  }

  const KdTree tree(cloud.points);
  const int kk = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k) + 1, n));
  std::vector<std::vector<int>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j : tree.knn(cloud.points[i], kk)) {
      if (static_cast<std::size_t>(j) == i) continue;
      adj[i].push_back(j);
      adj[static_cast<std::size_t>(j)].push_back(static_cast<int>(i));
    }
  }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }

  auto& normals = out.cloud.normals;
  std::vector<char> visited(n, 0);
  for (;;) {
    // Next component seed: unvisited point with maximal z, lowest id on ties.
    int seed = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (visited[i]) continue;
      if (seed < 0 || cloud.points[i].z() > cloud.points[static_cast<std::size_t>(seed)].z())
        seed = static_cast<int>(i);
    }
    if (seed < 0) break;
    ++out.components;
    if (normals[static_cast<std::size_t>(seed)].z() < 0.0)
      normals[static_cast<std::size_t>(seed)] = -normals[static_cast<std::size_t>(seed)];
    visited[static_cast<std::size_t>(seed)] = 1;
    std::queue<int> queue;
    queue.push(seed);
    while (!queue.empty()) {
      const int i = queue.front();
      queue.pop();
      for (int j : adj[static_cast<std::size_t>(i)]) {
        if (visited[static_cast<std::size_t>(j)]) continue;
        if (normals[static_cast<std::size_t>(j)].dot(normals[static_cast<std::size_t>(i)]) < 0.0)
          normals[static_cast<std::size_t>(j)] = -normals[static_cast<std::size_t>(j)];
        visited[static_cast<std::size_t>(j)] = 1;
        queue.push(j);
      }
    }
  }
  return out;
}

/// One output point per occupied voxel: the centroid of its members, with
/// normals averaged and renormalized. Output is ordered by voxel key, so
/// the operation is deterministic and idempotent at a fixed resolution.
inline PointCloud voxel_downsample(const PointCloud& cloud, double resolution) {
  if (resolution <= 0.0)
    throw std::invalid_argument("voxel_downsample: resolution must be positive");
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  std::vector<std::pair<Key, int>> cells(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    cells[i] = {Key{static_cast<std::int64_t>(std::floor(p.x() / resolution)),
                    static_cast<std::int64_t>(std::floor(p.y() / resolution)),
                    static_cast<std::int64_t>(std::floor(p.z() / resolution))},
                static_cast<int>(i)};
  }
  std::sort(cells.begin(), cells.end());

  PointCloud out;
  const bool with_normals = cloud.has_normals();
  std::size_t i = 0;
  while (i < cells.size()) {
    std::size_t j = i;
    while (j < cells.size() && cells[j].first == cells[i].first) ++j;
    const std::size_t first = static_cast<std::size_t>(cells[i].second);
    if (j - i == 1) {
      // Single occupant: copy verbatim so repeated passes are bit-stable.
      out.points.push_back(cloud.points[first]);
      if (with_normals) out.normals.push_back(cloud.normals[first]);
      i = j;
      continue;
    }
    Vec3 pos = Vec3::Zero();
    Vec3 nrm = Vec3::Zero();
    for (std::size_t m = i; m < j; ++m) {
      pos += cloud.points[static_cast<std::size_t>(cells[m].second)];
      if (with_normals) nrm += cloud.normals[static_cast<std::size_t>(cells[m].second)];
    }
    out.points.push_back(pos / static_cast<double>(j - i));
    if (with_normals) {
      const double norm = nrm.norm();
      // Opposing normals can cancel; fall back to the first member.
      out.normals.push_back(norm > 1e-12 ? Vec3(nrm / norm) : cloud.normals[first]);
    }
    i = j;
  }
  return out;
}

/// Displaces every point by an independent random vector drawn uniformly
/// from the solid ball of radius fraction * bounding_box_diagonal(cloud).
/// Normals are copied unchanged; callers re-estimate them downstream when
/// the corruption matters.
inline PointCloud add_uniform_noise(const PointCloud& cloud, double fraction,
                                    std::uint64_t seed) {
  if (fraction < 0.0)
    throw std::invalid_argument("add_uniform_noise: fraction must be non-negative");
  const double bound = fraction * bounding_box_diagonal(cloud);
  PointCloud out = cloud;
  Rng rng(derive_seed(seed, 0x6e6f697365));
  for (Vec3& p : out.points) p += rng.in_ball(bound);
  return out;
}

}  // namespace posekit
