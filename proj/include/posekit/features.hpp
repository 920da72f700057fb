#pragma once

// Feature pipeline: uniform feature-point selection, a simple
// rotation-invariant local descriptor, nearest-neighbor descriptor
// matching, and a synthetic correspondence generator with controlled
// inlier rate for estimator testing.
//
// The descriptor is a histogram of three point-pair angle features over
// the support neighborhood (neighbor normal vs center normal, and each
// normal vs the center-to-neighbor direction). All three are dot products
// of rigidly co-moving vectors, so the descriptor is invariant under rigid
// motions by construction.

#include "posekit/cloud.hpp"
#include "posekit/detail/parallel.hpp"
#include "posekit/io.hpp"
#include "posekit/kdtree.hpp"
#include "posekit/rng.hpp"

#include <limits>
#include <unordered_set>

namespace posekit {

/// L1-normalized histogram descriptor. All-zero descriptors are invalid
/// (not enough support) and are skipped by the matcher.
struct Descriptor {
  std::vector<double> values;

  bool valid() const {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum > 0.5;  // valid descriptors sum to 1
  }

  double l1_distance(const Descriptor& other) const {
    double d = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
      d += std::abs(values[i] - other.values[i]);
    return d;
  }
};

/// Match between an object point and a scene point; score is the
/// descriptor distance (smaller is better).
struct Correspondence {
  int object_id = 0;
  int scene_id = 0;
  double score = 0.0;
};

/// Feature points of one cloud: point ids plus parallel descriptors.
struct FeatureSet {
  std::vector<int> ids;
  std::vector<Descriptor> descriptors;

  std::size_t size() const { return ids.size(); }
};

namespace detail {

inline std::uint64_t pack_voxel_key(std::int64_t x, std::int64_t y, std::int64_t z) {
  auto fold = [](std::int64_t v) {
    return static_cast<std::uint64_t>(v) * 0x9e3779b97f4a7c15ULL;
  };
  return fold(x) ^ (fold(y) << 21 | fold(y) >> 43) ^ (fold(z) << 42 | fold(z) >> 22);
}

inline std::size_t occupied_voxels(const PointCloud& cloud, double voxel) {
  std::unordered_set<std::uint64_t> keys;
  keys.reserve(cloud.size());
  for (const Vec3& p : cloud.points)
    keys.insert(pack_voxel_key(static_cast<std::int64_t>(std::floor(p.x() / voxel)),
                               static_cast<std::int64_t>(std::floor(p.y() / voxel)),
                               static_cast<std::int64_t>(std::floor(p.z() / voxel))));
  return keys.size();
}

}  // namespace detail

/// Spatially uniform subset of about `target` point ids (voxel-stratified:
/// the voxel size is bisected until the occupied-voxel count lands within
/// 10% of the target, then the point nearest each voxel center is kept).
/// Returns all ids when target >= cloud size. Deterministic.
inline std::vector<int> select_feature_points(const PointCloud& cloud, std::size_t target) {
  if (target < 1) throw std::invalid_argument("select_feature_points: target must be >= 1");
  if (cloud.points.empty())
    throw std::invalid_argument("select_feature_points: empty cloud");
  if (target >= cloud.size()) {
    std::vector<int> all(cloud.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }

  const double diag = bounding_box_diagonal(cloud);
  double lo = diag / (4.0 * std::cbrt(static_cast<double>(cloud.size())) + 4.0);
  double hi = diag + 1e-30;
  double best_voxel = lo;
  std::size_t best_err = std::numeric_limits<std::size_t>::max();
  for (int iter = 0; iter < 48; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const std::size_t count = detail::occupied_voxels(cloud, mid);
    const std::size_t err = count > target ? count - target : target - count;
    if (err < best_err) {
      best_err = err;
      best_voxel = mid;
    }
    if (err * 10 <= target) break;
    if (count > target) lo = mid;
    else hi = mid;
  }

  // One representative per voxel: the point nearest the voxel center.
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  std::vector<std::pair<Key, int>> cells(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    cells[i] = {Key{static_cast<std::int64_t>(std::floor(p.x() / best_voxel)),
                    static_cast<std::int64_t>(std::floor(p.y() / best_voxel)),
                    static_cast<std::int64_t>(std::floor(p.z() / best_voxel))},
                static_cast<int>(i)};
  }
  std::sort(cells.begin(), cells.end());
  std::vector<int> out;
  std::size_t i = 0;
  while (i < cells.size()) {
    int best = cells[i].second;
    const auto [kx, ky, kz] = cells[i].first;
    const Vec3 center((kx + 0.5) * best_voxel, (ky + 0.5) * best_voxel,
                      (kz + 0.5) * best_voxel);
    double best_d = (cloud.points[static_cast<std::size_t>(best)] - center).squaredNorm();
    std::size_t j = i + 1;
    while (j < cells.size() && cells[j].first == cells[i].first) {
      const double d =
          (cloud.points[static_cast<std::size_t>(cells[j].second)] - center).squaredNorm();
      if (d < best_d || (d == best_d && cells[j].second < best)) {
        best_d = d;
        best = cells[j].second;
      }
      ++j;
    }
    out.push_back(best);
    i = j;
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Descriptor at one point from its support-radius neighborhood.
/// `bins_per_feature` is odd by default so that the canonical planar values
/// (angle cosines of exactly 0) fall in a bin center, not on an edge.
/// Fewer than 5 usable neighbors yields an invalid (all-zero) descriptor.
inline Descriptor compute_descriptor(const PointCloud& cloud, const KdTree& tree,
                                     int center_id, double support_radius,
                                     int bins_per_feature = 11) {
  if (!cloud.has_normals())
    throw std::invalid_argument("compute_descriptor: cloud has no normals");
  if (support_radius <= 0.0)
    throw std::invalid_argument("compute_descriptor: support radius must be positive");

  const Vec3& p = cloud.points[static_cast<std::size_t>(center_id)];
  const Vec3& n = cloud.normals[static_cast<std::size_t>(center_id)];
  const int b = bins_per_feature;

  Descriptor out;
  out.values.assign(static_cast<std::size_t>(3 * b), 0.0);
  auto bin_of = [b](double cosine) {
    const int idx = static_cast<int>(std::floor((cosine + 1.0) * 0.5 * b));
    return std::clamp(idx, 0, b - 1);
  };

  std::size_t used = 0;
  for (int j : tree.radius_search(p, support_radius)) {
    if (j == center_id) continue;
    const Vec3 d = cloud.points[static_cast<std::size_t>(j)] - p;
    const double dist = d.norm();
    if (dist < 1e-20) continue;  // coincident duplicate, direction undefined
    const Vec3 dir = d / dist;
    const Vec3& nj = cloud.normals[static_cast<std::size_t>(j)];
    out.values[static_cast<std::size_t>(bin_of(n.dot(nj)))] += 1.0;
    out.values[static_cast<std::size_t>(b + bin_of(n.dot(dir)))] += 1.0;
    out.values[static_cast<std::size_t>(2 * b + bin_of(nj.dot(dir)))] += 1.0;
    ++used;
  }
  if (used < 5) {
    out.values.assign(out.values.size(), 0.0);
    return out;
  }
  const double norm = 1.0 / static_cast<double>(3 * used);
  for (double& v : out.values) v *= norm;
  return out;
}

/// Descriptors for a set of feature point ids (parallel per point).
inline FeatureSet compute_feature_set(const PointCloud& cloud, std::vector<int> ids,
                                      double support_radius, int bins_per_feature = 11,
                                      unsigned threads = 0) {
  const KdTree tree(cloud.points);
  FeatureSet set;
  set.ids = std::move(ids);
  set.descriptors.resize(set.ids.size());
  detail::parallel_for(
      set.ids.size(),
      [&](std::size_t i) {
        set.descriptors[i] =
            compute_descriptor(cloud, tree, set.ids[i], support_radius, bins_per_feature);
      },
      threads);
  return set;
}

/// One correspondence per valid scene feature: its nearest object
/// descriptor under the L1 metric (ties resolve to the lower object
/// feature index). The matching direction is scene into object.
inline std::vector<Correspondence> match_features(const FeatureSet& scene,
                                                  const FeatureSet& object,
                                                  unsigned threads = 0) {
  if (scene.size() == 0 || object.size() == 0)
    throw std::invalid_argument("match_features: empty feature set");

  std::vector<Correspondence> out(scene.size());
  std::vector<char> keep(scene.size(), 0);
  detail::parallel_for(
      scene.size(),
      [&](std::size_t i) {
        if (!scene.descriptors[i].valid()) return;
        const auto& sv = scene.descriptors[i].values;
        double best = std::numeric_limits<double>::infinity();
        int best_j = -1;
        for (std::size_t j = 0; j < object.size(); ++j) {
          if (!object.descriptors[j].valid()) continue;
          const auto& ov = object.descriptors[j].values;
          double d = 0.0;
          for (std::size_t k = 0; k < sv.size(); ++k) {
            d += std::abs(sv[k] - ov[k]);
            if (d >= best) break;  // early exit cannot win
          }
          if (d < best) {
            best = d;
            best_j = static_cast<int>(j);
          }
        }
        if (best_j < 0) return;
        out[i] = Correspondence{object.ids[static_cast<std::size_t>(best_j)], scene.ids[i], best};
        keep[i] = 1;
      },
      threads);

  std::vector<Correspondence> compact;
  compact.reserve(out.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (keep[i]) compact.push_back(out[i]);
  return compact;
}

/// Synthetic correspondences with a controlled inlier rate.
struct SynthCorrespondences {
  std::vector<OrientedPair> pairs;  // inliers first, then outliers
  Pose truth;
  std::size_t inliers = 0;
};

/// Builds oriented point pairs around a known pose. Inlier scene points are
/// the posed object points plus isotropic Gaussian noise (sigma =
/// noise_sigma); inlier normals are the rotated object normals perturbed by
/// a small bounded angle that scales with noise_sigma relative to the model
/// diagonal. Outliers pair an object point with a uniform point in the
/// posed model's bounding box and a random unit normal.
inline SynthCorrespondences synth_correspondences(const PointCloud& object,
                                                  const Pose& true_pose,
                                                  std::size_t n_inliers,
                                                  std::size_t n_outliers,
                                                  double noise_sigma, std::uint64_t seed) {
  if (!object.has_normals())
    throw std::invalid_argument("synth_correspondences: object cloud has no normals");
  if (n_inliers + n_outliers < 1)
    throw std::invalid_argument("synth_correspondences: need at least one pair");

  const double diag = bounding_box_diagonal(object);
  // Perturbation cap: |N(0, s)| clamped to 3s with s tied to the relative
  // position noise. At noise_sigma = 0 normals are exact.
  const double angle_sigma = diag > 0.0 ? noise_sigma / (0.1 * diag) : 0.0;

  Vec3 lo = apply(true_pose, object.points.front());
  Vec3 hi = lo;
  for (const Vec3& p : object.points) {
    const Vec3 q = apply(true_pose, p);
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }

  Rng rng(derive_seed(seed, 0x73796e7468));
  SynthCorrespondences out;
  out.truth = true_pose;
  out.inliers = n_inliers;
  out.pairs.reserve(n_inliers + n_outliers);

  for (std::size_t i = 0; i < n_inliers; ++i) {
    const int id = static_cast<int>(rng.below(object.size()));
    const OrientedPoint obj = object.oriented(id);
    OrientedPoint scene;
    scene.position = apply(true_pose, obj.position) +
                     Vec3(rng.gaussian(0.0, noise_sigma), rng.gaussian(0.0, noise_sigma),
                          rng.gaussian(0.0, noise_sigma));
    Vec3 n = true_pose.rotation * obj.normal;
    if (angle_sigma > 0.0) {
      const double angle = std::min(std::abs(rng.gaussian(0.0, angle_sigma)), 3.0 * angle_sigma);
      Vec3 axis = n.cross(rng.unit_vector());
      while (axis.norm() < 1e-9) axis = n.cross(rng.unit_vector());
      n = rodrigues_rotate(n, axis.normalized(), angle).normalized();
    }
    scene.normal = n;
    out.pairs.push_back({obj, scene});
  }
  for (std::size_t i = 0; i < n_outliers; ++i) {
    const int id = static_cast<int>(rng.below(object.size()));
    OrientedPoint scene;
    scene.position = rng.in_box(lo, hi);
    scene.normal = rng.unit_vector();
    out.pairs.push_back({object.oriented(id), scene});
  }
  return out;
}

/// Fraction of pairs whose scene point lies within `tol` of the posed
/// object point. The default tolerance used throughout is 0.005 m.
inline double ground_truth_inlier_rate(std::span<const OrientedPair> pairs,
                                       const Pose& true_pose, double tol) {
  if (tol <= 0.0) throw std::invalid_argument("ground_truth_inlier_rate: tol must be positive");
  if (pairs.empty()) throw std::invalid_argument("ground_truth_inlier_rate: empty pair set");
  std::size_t hits = 0;
  for (const OrientedPair& pair : pairs)
    if ((apply(true_pose, pair.object.position) - pair.scene.position).norm() <= tol) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

inline constexpr double kDefaultInlierTol = 0.005;  // meters

/// Writes correspondences as CSV (object_id,scene_id,score) for replay.
inline void save_correspondences_csv(const std::string& path,
                                     std::span<const Correspondence> correspondences) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open file for writing");
  out << "object_id,scene_id,score\n";
  char buf[64];
  for (const Correspondence& c : correspondences) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", c.object_id, c.scene_id, c.score);
    out << buf;
  }
}

inline std::vector<Correspondence> load_correspondences_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::string line;
  if (!std::getline(in, line) || line.rfind("object_id,scene_id,score", 0) != 0)
    throw ParseError(path + ":1: missing correspondence CSV header");
  std::vector<Correspondence> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Correspondence c;
    long long a = 0, b = 0;
    const char* s = line.data();
    const char* end = s + line.size();
    auto eat_comma = [&](const char* p) {
      if (p >= end || *p != ',') detail::fail_line(path, line_no, "malformed CSV row");
      return p + 1;
    };
    auto r1 = std::from_chars(s, end, a);
    if (r1.ec != std::errc()) detail::fail_line(path, line_no, "malformed object_id");
    auto r2 = std::from_chars(eat_comma(r1.ptr), end, b);
    if (r2.ec != std::errc()) detail::fail_line(path, line_no, "malformed scene_id");
    auto r3 = std::from_chars(eat_comma(r2.ptr), end, c.score);
    if (r3.ec != std::errc()) detail::fail_line(path, line_no, "malformed score");
    c.object_id = static_cast<int>(a);
    c.scene_id = static_cast<int>(b);
    out.push_back(c);
  }
  return out;
}

}  // namespace posekit
