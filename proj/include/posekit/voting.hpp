#pragma once

// Rotational subgroup voting: each oriented-point correspondence casts N_r
// full 6-DoF pose votes that are constrained to a 1-DoF rotational subgroup
// of SE(3) (rotations about the scene normal).
//
// Geometry per correspondence (p, n) <-> (p', n') with object center c:
//   delta  = (p - c) . n              signed projection of the center offset
//   r      = c - (p - delta n)        radial vector, orthogonal to n
//   q      = p' - delta n'            radial point in the scene
// A scene-side radial r' orthogonal to n' with |r'| = |r| is instantiated
// at a phase angle and tessellated N_r times about n'. Every tessellation
// yields a voted center position q + r' and an aligning rotation built from
// the two radial frames; the rotation maps n onto n' exactly, so all votes
// of one correspondence differ only by rotations about n'.
//
// Votes are returned as poses acting on raw model coordinates (the voted
// center position is recoverable as R c + t); the voted centers are what
// the density estimate clusters on.

#include "posekit/cloud.hpp"
#include "posekit/detail/parallel.hpp"
#include "posekit/features.hpp"
#include "posekit/rng.hpp"

#include <optional>

namespace posekit {

/// Per-correspondence quantities reused across the N_r votes.
struct VotePrecomp {
  double delta = 0.0;       // scalar projection of (p - c) onto n
  Vec3 radial = Vec3::Zero();  // r, orthogonal to n by construction
  double radial_norm = 0.0;
  Mat3 object_frame = Mat3::Identity();  // columns [r/|r|, n x r/|r|, n]
  Vec3 center = Vec3::Zero();            // c, needed to assemble poses
};

/// Computes the object-side radial frame, or nullopt when the point lies on
/// the normal axis through the center (|r| < epsilon_r) and the frame is
/// undefined.
inline std::optional<VotePrecomp> precompute_object_frame(const Vec3& center, const Vec3& p,
                                                          const Vec3& n, double epsilon_r) {
  detail::require_unit(n, "precompute_object_frame");
  VotePrecomp pre;
  pre.center = center;
  pre.delta = (p - center).dot(n);
  pre.radial = center - (p - pre.delta * n);
  pre.radial_norm = pre.radial.norm();
  if (pre.radial_norm < epsilon_r) return std::nullopt;
  const Vec3 u = pre.radial / pre.radial_norm;
  pre.object_frame.col(0) = u;
  pre.object_frame.col(1) = n.cross(u);
  pre.object_frame.col(2) = n;
  return pre;
}

namespace detail {

/// Deterministic basis for directions orthogonal to n: crosses n with the
/// canonical axis of its smallest-magnitude component.
inline void orthogonal_basis(const Vec3& n, Vec3& u, Vec3& v) {
  int axis = 0;
  if (std::abs(n.y()) < std::abs(n.x())) axis = 1;
  if (std::abs(n.z()) < std::abs(n[axis])) axis = 2;
  u = n.cross(Vec3::Unit(axis)).normalized();
  v = n.cross(u);
}

}  // namespace detail

/// Casts the N_r pose votes of one correspondence into `out`. The phase
/// fixes the first instantiated radial direction within the plane
/// orthogonal to the scene normal; successive radials advance by
/// 2 pi / N_r. Every voted translation lies on the circle of radius |r|
/// about the radial point q in that plane.
inline void cast_votes(const VotePrecomp& pre, const Vec3& scene_p, const Vec3& scene_n,
                       int n_r, double phase, std::vector<Pose>& out) {
  detail::require_unit(scene_n, "cast_votes");
  if (n_r < 1) throw std::invalid_argument("cast_votes: N_r must be >= 1");

  const Vec3 q = scene_p - pre.delta * scene_n;
  Vec3 u, v;
  detail::orthogonal_basis(scene_n, u, v);
  const Vec3 r0 = u * std::cos(phase) + v * std::sin(phase);  // unit
  const Vec3 w = scene_n.cross(r0);
  const double axial = scene_n.dot(r0);  // zero up to rounding

  const Mat3 object_frame_t = pre.object_frame.transpose();
  const double step = 2.0 * kPi / static_cast<double>(n_r);
  for (int i = 0; i < n_r; ++i) {
    const double c = std::cos(step * i);
    const double s = std::sin(step * i);
    const Vec3 rdir = r0 * c + w * s + scene_n * (axial * (1.0 - c));
    Mat3 scene_frame;
    scene_frame.col(0) = rdir;
    scene_frame.col(1) = scene_n.cross(rdir);
    scene_frame.col(2) = scene_n;
    const Mat3 rot = scene_frame * object_frame_t;
    const Vec3 voted_center = q + rdir * pre.radial_norm;
    out.push_back(Pose{Rotation{rot}, voted_center - rot * pre.center});
  }
}

/// How the initial radial phase of each correspondence is chosen.
/// A seeded random phase decorrelates the tessellation error across
/// correspondences; the fixed mode exists for exactness tests.
struct PhasePolicy {
  enum class Kind { seeded_random, fixed };
  Kind kind = Kind::seeded_random;
  std::uint64_t seed = 0;
  double fixed_phase = 0.0;

  static PhasePolicy seeded(std::uint64_t seed) {
    return {Kind::seeded_random, seed, 0.0};
  }
  static PhasePolicy fixed(double phase) { return {Kind::fixed, 0, phase}; }

  double phase_for(std::size_t correspondence_index) const {
    if (kind == Kind::fixed) return fixed_phase;
    Rng rng(derive_seed(seed, correspondence_index));
    return rng.uniform(0.0, 2.0 * kPi);
  }
};

/// All votes of a correspondence set, flat and in correspondence order.
struct VoteSet {
  std::vector<Pose> poses;
  std::vector<int> source;  // correspondence index per vote, parallel to poses
  int tessellation = 0;     // N_r
  Vec3 center = Vec3::Zero();
  std::size_t degenerate = 0;  // correspondences skipped (radial below epsilon)

  std::size_t size() const { return poses.size(); }

  /// Scene positions voted for the object center: R c + t per vote.
  std::vector<Vec3> center_votes() const {
    std::vector<Vec3> out(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i)
      out[i] = poses[i].rotation * center + poses[i].translation;
    return out;
  }
};

/// Vote generation over explicit oriented pairs; linear in the number of
/// pairs, embarrassingly parallel per correspondence.
inline VoteSet generate_vote_set(std::span<const OrientedPair> pairs, const Vec3& center,
                                 double epsilon_r, int n_r, const PhasePolicy& phase,
                                 unsigned threads = 0) {
  if (n_r < 1) throw std::invalid_argument("generate_vote_set: N_r must be >= 1");

  std::vector<std::optional<VotePrecomp>> pre(pairs.size());
  detail::parallel_for(
      pairs.size(),
      [&](std::size_t i) {
        pre[i] = precompute_object_frame(center, pairs[i].object.position,
                                         pairs[i].object.normal, epsilon_r);
      },
      threads);

  VoteSet votes;
  votes.tessellation = n_r;
  votes.center = center;
  std::vector<std::size_t> active;
  active.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pre[i]) active.push_back(i);
    else ++votes.degenerate;
  }

  const std::size_t n = active.size() * static_cast<std::size_t>(n_r);
  votes.poses.resize(n);
  votes.source.resize(n);
  detail::parallel_for(
      active.size(),
      [&](std::size_t k) {
        const std::size_t i = active[k];
        std::vector<Pose> local;
        local.reserve(static_cast<std::size_t>(n_r));
        cast_votes(*pre[i], pairs[i].scene.position, pairs[i].scene.normal, n_r,
                   phase.phase_for(i), local);
        const std::size_t base = k * static_cast<std::size_t>(n_r);
        for (int j = 0; j < n_r; ++j) {
          votes.poses[base + static_cast<std::size_t>(j)] = local[static_cast<std::size_t>(j)];
          votes.source[base + static_cast<std::size_t>(j)] = static_cast<int>(i);
        }
      },
      threads);
  return votes;
}

inline constexpr int kDefaultTessellation = 60;  // 6 degree angular step
inline constexpr double kRadialEpsilonFraction = 1e-4;  // of the object bbox diagonal

/// Vote generation for correspondences into object/scene clouds. The object
/// center is the cloud centroid and the degenerate-radial threshold is
/// kRadialEpsilonFraction of the object bounding-box diagonal.
inline VoteSet generate_vote_set(std::span<const Correspondence> correspondences,
                                 const PointCloud& object, const PointCloud& scene,
                                 int n_r, const PhasePolicy& phase, unsigned threads = 0) {
  if (!object.has_normals() || !scene.has_normals())
    throw std::invalid_argument("generate_vote_set: clouds must carry normals");
  std::vector<OrientedPair> pairs(correspondences.size());
  for (std::size_t i = 0; i < correspondences.size(); ++i)
    pairs[i] = {object.oriented(correspondences[i].object_id),
                scene.oriented(correspondences[i].scene_id)};
  return generate_vote_set(pairs, centroid(object),
                           kRadialEpsilonFraction * bounding_box_diagonal(object), n_r,
                           phase, threads);
}

/// CSV dump of a vote set (source id + row-major rotation + translation),
/// mainly for visualizing vote clouds.
inline void save_votes_csv(const std::string& path, const VoteSet& votes) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open file for writing");
  out << "source,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n";
  char buf[512];
  for (std::size_t i = 0; i < votes.size(); ++i) {
    const Mat3& m = votes.poses[i].rotation.m;
    const Vec3& t = votes.poses[i].translation;
    std::snprintf(buf, sizeof(buf),
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  votes.source[i], m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2),
                  m(2, 0), m(2, 1), m(2, 2), t.x(), t.y(), t.z());
    out << buf;
  }
}

}  // namespace posekit
