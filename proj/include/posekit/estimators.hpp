#pragma once

// End-to-end estimators: a RANSAC baseline over oriented point pairs, ICP
// refinement, the full recognition pipeline (preprocess -> features ->
// votes -> modes -> refine -> greedy scene segmentation) and pose-error
// metrics.

#include "posekit/clustering.hpp"
#include "posekit/features.hpp"
#include "posekit/io.hpp"
#include "posekit/synthetic.hpp"
#include "posekit/voting.hpp"

#include <atomic>
#include <sstream>

namespace posekit {

/// Raised when an estimator cannot produce a pose at all (e.g. every RANSAC
/// sample was degenerate).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameters of the recognition pipeline with the defaults used across
/// the experiments. Lengths are meters.
struct PipelineConfig {
  double voxel_resolution = 0.005;
  std::size_t feature_target = 10000;
  double descriptor_radius = 0.0;  // 0 -> 15 x voxel_resolution
  int descriptor_bins = 11;        // per angle feature; descriptor dim = 3x this
  int tessellation = kDefaultTessellation;
  Bandwidths bandwidths{};         // sigma_t = 0.01 m, sigma_r = 22.5 deg
  double sigma_t_fraction = 0.0;   // if > 0, sigma_t = fraction * object diagonal
  double nms_fraction = kDefaultNmsFraction;
  double density_threshold = 0.0;
  std::size_t multi_instance = 0;  // 0 -> single modal pose, else top-k after NMS
  bool refine = true;
  int icp_max_iters = 50;
  double icp_converge_tol = 1e-5;
  int normal_k = 10;
  double ransac_inlier_tol = kDefaultInlierTol;
  int ransac_iterations = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  double effective_descriptor_radius() const {
    return descriptor_radius > 0.0 ? descriptor_radius : 15.0 * voxel_resolution;
  }
};

/// One recognized object instance.
struct Detection {
  int object = 0;
  Pose pose;
  double density = 0.0;
  bool refined = false;
  double inlier_fraction = 0.0;  // post-refinement overlap measure
  std::size_t correspondences = 0;
};

/// Component pose errors of an estimate against a ground-truth pose.
struct PoseError {
  double translation = 0.0;  // meters
  double rotation = 0.0;     // radians
};

inline PoseError pose_error(const Pose& estimate, const Pose& truth) {
  const Pose rel = relative_pose(estimate, truth);
  return {rel.translation.norm(), geodesic_distance(rel.rotation, Rotation::identity())};
}

// ---------------------------------------------------------------------------
// RANSAC baseline
// ---------------------------------------------------------------------------

/// Classic three-point RANSAC over the pair positions: sample, fit, count
/// pairs within inlier_tol, keep the max-consensus pose and re-fit it on
/// its consensus set. Deterministic under the seed (per-iteration streams
/// are derived from it), so iterations can run in parallel.
inline Pose ransac_pose(std::span<const OrientedPair> pairs, int iterations,
                        double inlier_tol, std::uint64_t seed, unsigned threads = 0) {
  if (pairs.size() < 3) throw EstimationError("ransac_pose: need at least 3 pairs");
  if (iterations < 1) throw std::invalid_argument("ransac_pose: iterations must be >= 1");

  struct Candidate {
    std::size_t consensus = 0;
    int iteration = std::numeric_limits<int>::max();
    Pose pose;
  };

  const std::size_t n = pairs.size();
  const double tol2 = inlier_tol * inlier_tol;
  std::vector<Candidate> best_per_iter(static_cast<std::size_t>(iterations));
  detail::parallel_for(
      static_cast<std::size_t>(iterations),
      [&](std::size_t it) {
        Rng rng(derive_seed(seed, it));
        std::size_t a = rng.below(n), b = rng.below(n), c = rng.below(n);
        for (int guard = 0; (a == b || b == c || a == c) && guard < 256; ++guard) {
          b = rng.below(n);
          c = rng.below(n);
        }
        if (a == b || b == c || a == c) return;
        const std::array<Vec3, 3> src{pairs[a].object.position, pairs[b].object.position,
                                      pairs[c].object.position};
        const std::array<Vec3, 3> dst{pairs[a].scene.position, pairs[b].scene.position,
                                      pairs[c].scene.position};
        Pose pose;
        try {
          pose = rigid_align(std::span<const Vec3>(src), std::span<const Vec3>(dst));
        } catch (const GeometryError&) {
          return;  // degenerate minimal sample
        }
        std::size_t consensus = 0;
        for (const OrientedPair& pair : pairs)
          if ((apply(pose, pair.object.position) - pair.scene.position).squaredNorm() <= tol2)
            ++consensus;
        best_per_iter[it] = Candidate{consensus, static_cast<int>(it), pose};
      },
      threads);

  Candidate best;
  for (const Candidate& c : best_per_iter) {
    if (c.consensus > best.consensus ||
        (c.consensus == best.consensus && c.iteration < best.iteration))
      best = c;
  }
  if (best.consensus == 0) throw EstimationError("ransac_pose: all samples degenerate");

  // Final least-squares fit on the winner's consensus set.
  std::vector<Vec3> src, dst;
  for (const OrientedPair& pair : pairs) {
    if ((apply(best.pose, pair.object.position) - pair.scene.position).squaredNorm() <= tol2) {
      src.push_back(pair.object.position);
      dst.push_back(pair.scene.position);
    }
  }
  if (src.size() >= 3) {
    try {
      return rigid_align(src, dst);
    } catch (const GeometryError&) {
      // fall through to the minimal-sample pose
    }
  }
  return best.pose;
}

// ---------------------------------------------------------------------------
// ICP refinement
// ---------------------------------------------------------------------------

struct IcpResult {
  Pose pose;
  bool refined = false;
  int iterations = 0;
  double mean_error = 0.0;  // mean pairing distance at the returned pose
};

/// Point-to-point ICP: pair each transformed object point with its nearest
/// scene point within capture_radius, re-fit, repeat until the pose change
/// drops below converge_tol or max_iters. A step that would increase the
/// mean pairing error is rejected and iteration stops. When no pairs fall
/// inside the capture radius the initial pose is returned un-refined.
inline IcpResult icp_refine(const PointCloud& object, const PointCloud& scene,
                            const Pose& init, int max_iters, double converge_tol,
                            double capture_radius) {
  if (object.points.empty() || scene.points.empty())
    throw std::invalid_argument("icp_refine: empty cloud");
  if (capture_radius <= 0.0)
    throw std::invalid_argument("icp_refine: capture radius must be positive");

  const KdTree scene_tree(scene.points);
  // Rotation changes are converted to a displacement via the object radius
  // so the convergence threshold stays a length.
  const double lever = 0.5 * bounding_box_diagonal(object);
  const double cap2 = capture_radius * capture_radius;

  IcpResult result{init, false, 0, std::numeric_limits<double>::infinity()};
  Pose pose = init;
  double prev_mean = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<Vec3> src, dst;
    double err_sum = 0.0;
    for (const Vec3& p : object.points) {
      const Vec3 moved = apply(pose, p);
      const int nn = scene_tree.knn(moved, 1)[0];
      const Vec3& q = scene.points[static_cast<std::size_t>(nn)];
      const double d2 = (moved - q).squaredNorm();
      if (d2 > cap2) continue;
      src.push_back(p);
      dst.push_back(q);
      err_sum += std::sqrt(d2);
    }
    if (src.size() < 3) break;  // nothing (or too little) to refine against
    const double mean = err_sum / static_cast<double>(src.size());
    if (mean > prev_mean) break;  // reject the step, keep the previous pose
    result.pose = pose;
    result.refined = true;
    result.iterations = iter + 1;
    result.mean_error = mean;
    prev_mean = mean;

    Pose next;
    try {
      next = rigid_align(src, dst);
    } catch (const GeometryError&) {
      break;
    }
    const double change = translation_distance(next.translation, pose.translation) +
                          geodesic_distance(next.rotation, pose.rotation) * lever;
    pose = next;
    if (change < converge_tol) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Scene segmentation
// ---------------------------------------------------------------------------

/// Scene minus every point within removal_radius of any transformed object
/// point (the greedy multi-object segmentation step).
inline PointCloud segment_scene(const PointCloud& scene, const PointCloud& object,
                                const Pose& pose, double removal_radius) {
  if (removal_radius <= 0.0)
    throw std::invalid_argument("segment_scene: removal radius must be positive");
  PointCloud moved = transformed(object, pose);
  const KdTree tree(moved.points);
  const double r2 = removal_radius * removal_radius;
  PointCloud out;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const int nn = tree.knn(scene.points[i], 1)[0];
    if ((moved.points[static_cast<std::size_t>(nn)] - scene.points[i]).squaredNorm() <= r2)
      continue;
    out.points.push_back(scene.points[i]);
    if (scene.has_normals()) out.normals.push_back(scene.normals[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recognition pipeline
// ---------------------------------------------------------------------------

/// A model or scene after preprocessing: downsampled cloud with oriented
/// normals plus its feature set.
struct PreparedInput {
  PointCloud cloud;
  FeatureSet features;
  double diagonal = 0.0;
};

/// Mesh path: face-winding normals, then downsample.
inline PreparedInput prepare_input(const TriangleMesh& mesh, const PipelineConfig& config) {
  PreparedInput out;
  out.cloud = voxel_downsample(mesh_vertex_normals(mesh).cloud, config.voxel_resolution);
  out.diagonal = bounding_box_diagonal(out.cloud);
  out.features = compute_feature_set(out.cloud,
                                     select_feature_points(out.cloud, config.feature_target),
                                     config.effective_descriptor_radius(),
                                     config.descriptor_bins, config.threads);
  return out;
}

/// Point-cloud path: estimate and orient normals at full resolution unless
/// the cloud already carries them, then downsample.
inline PreparedInput prepare_input(const PointCloud& cloud, const PipelineConfig& config) {
  PointCloud with_normals = cloud;
  if (!cloud.has_normals())
    with_normals = orient_normals(estimate_normals(cloud, config.normal_k, config.threads).cloud,
                                  config.normal_k)
                       .cloud;
  PreparedInput out;
  out.cloud = voxel_downsample(with_normals, config.voxel_resolution);
  out.diagonal = bounding_box_diagonal(out.cloud);
  out.features = compute_feature_set(out.cloud,
                                     select_feature_points(out.cloud, config.feature_target),
                                     config.effective_descriptor_radius(),
                                     config.descriptor_bins, config.threads);
  return out;
}

inline PreparedInput prepare_input(const LoadedModel& model, const PipelineConfig& config) {
  return model.is_mesh() ? prepare_input(model.mesh, config) : prepare_input(model.cloud, config);
}

struct RecognitionResult {
  std::vector<Detection> detections;
  std::vector<std::string> notes;  // skipped objects, segmentation summaries
};

/// Multi-object recognition: objects are processed in descending order of
/// correspondence count; each detection greedily segments its instance out
/// of the scene before the next object is handled.
inline RecognitionResult recognize(std::span<const PreparedInput> objects,
                                   const PreparedInput& scene,
                                   const PipelineConfig& config) {
  if (objects.empty()) throw std::invalid_argument("recognize: need at least one object");

  Bandwidths bw = config.bandwidths;
  RecognitionResult result;

  // Match every object against the full scene once; the greedy segmentation
  // later invalidates correspondences whose scene points were consumed.
  std::vector<std::vector<Correspondence>> matches(objects.size());
  for (std::size_t k = 0; k < objects.size(); ++k)
    matches[k] = match_features(scene.features, objects[k].features, config.threads);

  std::vector<std::size_t> order(objects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return matches[a].size() != matches[b].size() ? matches[a].size() > matches[b].size()
                                                  : a < b;
  });

  std::vector<char> alive(scene.cloud.size(), 1);
  const double removal_radius = 2.0 * config.voxel_resolution;
  const double capture_radius = 2.0 * config.voxel_resolution;

  for (std::size_t k : order) {
    const PreparedInput& object = objects[k];
    if (config.sigma_t_fraction > 0.0) bw.sigma_t = config.sigma_t_fraction * object.diagonal;

    std::vector<Correspondence> corr;
    for (const Correspondence& c : matches[k])
      if (alive[static_cast<std::size_t>(c.scene_id)]) corr.push_back(c);
    if (corr.empty()) {
      result.notes.push_back("object " + std::to_string(k) +
                             ": no usable correspondences, skipped");
      continue;
    }

    const VoteSet votes =
        generate_vote_set(corr, object.cloud, scene.cloud, config.tessellation,
                          PhasePolicy::seeded(derive_seed(config.seed, k)), config.threads);
    if (votes.size() == 0) {
      result.notes.push_back("object " + std::to_string(k) +
                             ": all correspondences degenerate, skipped");
      continue;
    }
    const std::vector<double> densities = density_estimates(votes, bw, config.threads);

    std::vector<Mode> modes;
    if (config.multi_instance > 0)
      modes = top_modes_nms(votes, densities, config.multi_instance,
                            config.nms_fraction * object.diagonal);
    else
      modes = {modal_pose(votes, densities)};
    modes = density_threshold_filter(modes, config.density_threshold);
    if (modes.empty()) {
      result.notes.push_back("object " + std::to_string(k) +
                             ": no mode above density threshold");
      continue;
    }

    // Remaining (un-segmented) scene subset for refinement and overlap.
    PointCloud remaining;
    for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
      if (!alive[i]) continue;
      remaining.points.push_back(scene.cloud.points[i]);
      if (scene.cloud.has_normals()) remaining.normals.push_back(scene.cloud.normals[i]);
    }
    if (remaining.points.empty()) break;
    const KdTree remaining_tree(remaining.points);

    for (const Mode& mode : modes) {
      Detection det;
      det.object = static_cast<int>(k);
      det.pose = mode.pose;
      det.density = mode.density;
      det.correspondences = corr.size();
      if (config.refine) {
        const IcpResult icp = icp_refine(object.cloud, remaining, mode.pose,
                                         config.icp_max_iters, config.icp_converge_tol,
                                         capture_radius);
        det.pose = icp.pose;
        det.refined = icp.refined;
      }
      std::size_t overlap = 0;
      const double overlap_r2 = capture_radius * capture_radius;
      for (const Vec3& p : object.cloud.points) {
        const Vec3 moved = apply(det.pose, p);
        const int nn = remaining_tree.knn(moved, 1)[0];
        if ((remaining.points[static_cast<std::size_t>(nn)] - moved).squaredNorm() <=
            overlap_r2)
          ++overlap;
      }
      det.inlier_fraction =
          static_cast<double>(overlap) / static_cast<double>(object.cloud.size());
      result.detections.push_back(det);

      // Consume the instance: mark scene points near the posed model dead.
      const PointCloud moved = transformed(object.cloud, det.pose);
      const KdTree moved_tree(moved.points);
      const double r2 = removal_radius * removal_radius;
      for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
        if (!alive[i]) continue;
        const int nn = moved_tree.knn(scene.cloud.points[i], 1)[0];
        if ((moved.points[static_cast<std::size_t>(nn)] - scene.cloud.points[i]).squaredNorm() <=
            r2)
          alive[i] = 0;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

inline void save_detections_csv(const std::string& path, std::span<const Detection> detections) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open file for writing");
  out << "object,density,refined,inlier_fraction,correspondences,"
         "r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n";
  char buf[640];
  for (const Detection& d : detections) {
    const Mat3& r = d.pose.rotation.m;
    const Vec3& t = d.pose.translation;
    std::snprintf(buf, sizeof(buf),
                  "%d,%.17g,%d,%.17g,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                  "%.17g,%.17g,%.17g\n",
                  d.object, d.density, d.refined ? 1 : 0, d.inlier_fraction, d.correspondences,
                  r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1),
                  r(2, 2), t.x(), t.y(), t.z());
    out << buf;
  }
}

/// Human-readable detection report; pass ground-truth poses (parallel to
/// object indices) to add per-detection error lines.
inline std::string detection_report(std::span<const Detection> detections,
                                    std::span<const std::string> notes = {},
                                    std::span<const Pose> ground_truth = {}) {
  std::ostringstream os;
  os << detections.size() << " detection(s)\n";
  for (const Detection& d : detections) {
    os << "object " << d.object << ": density " << d.density << ", overlap "
       << d.inlier_fraction << (d.refined ? ", refined" : ", unrefined") << ", "
       << d.correspondences << " correspondences\n";
    const Mat3& r = d.pose.rotation.m;
    const Vec3& t = d.pose.translation;
    for (int row = 0; row < 3; ++row) {
      char line[160];
      std::snprintf(line, sizeof(line), "  [% .6f % .6f % .6f | % .6f]\n", r(row, 0),
                    r(row, 1), r(row, 2), t[row]);
      os << line;
    }
    if (static_cast<std::size_t>(d.object) < ground_truth.size()) {
      const PoseError err = pose_error(d.pose, ground_truth[static_cast<std::size_t>(d.object)]);
      os << "  error vs ground truth: " << err.translation << " m, "
         << err.rotation * 180.0 / kPi << " deg\n";
    }
  }
  for (const std::string& note : notes) os << "note: " << note << "\n";
  return os.str();
}

}  // namespace posekit
