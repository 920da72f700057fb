#pragma once

// Truncated kernel density estimation over a vote set and modal pose
// extraction. The density at a vote is the sum, over all votes within BOTH
// bandwidths, of the product of two unnormalized Gaussian kernels
// exp(-d^2 / (2 sigma^2)) -- one on the Euclidean distance between voted
// center positions, one on the geodesic distance between rotations. The
// sum always includes the vote itself, so every density is >= 1.
//
// Neighborhoods come from a k-d tree radius search over the voted centers
// (radius sigma_t) followed by a linear rotation-distance filter within
// that ball (threshold sigma_r); the truncation at exactly one bandwidth
// per factor is part of the estimator's definition, and the brute-force
// oracle in the tests applies the same rule.

#include "posekit/detail/parallel.hpp"
#include "posekit/kdtree.hpp"
#include "posekit/voting.hpp"

namespace posekit {

/// Kernel locality scales: translation bandwidth (length) and rotation
/// bandwidth (radians).
struct Bandwidths {
  double sigma_t = 0.01;
  double sigma_r = 22.5 * kPi / 180.0;

  void validate() const {
    if (sigma_t <= 0.0 || sigma_r <= 0.0 || sigma_r > kPi)
      throw std::invalid_argument("Bandwidths: need sigma_t > 0 and 0 < sigma_r <= pi");
  }
};

/// A vote with its kernel density; the clustering output unit.
struct Mode {
  Pose pose;
  double density = 0.0;
  int vote_id = 0;
};

/// Truncated kernel density at every vote. O(n log n + n * ball occupancy);
/// parallel over votes.
inline std::vector<double> density_estimates(const VoteSet& votes, const Bandwidths& bw,
                                             unsigned threads = 0) {
  bw.validate();
  if (votes.size() == 0) throw std::invalid_argument("density_estimates: empty vote set");

  const std::vector<Vec3> centers = votes.center_votes();
  const KdTree tree(centers);

  // d_R <= sigma_r  <=>  trace(Ra^T Rb) >= 2 cos(sigma_r) + 1, which avoids
  // the acos for the (dominant) rejected pairs.
  const double trace_gate = 2.0 * std::cos(bw.sigma_r) + 1.0;
  const double inv_2st2 = 1.0 / (2.0 * bw.sigma_t * bw.sigma_t);
  const double inv_2sr2 = 1.0 / (2.0 * bw.sigma_r * bw.sigma_r);

  std::vector<double> density(votes.size());
  detail::parallel_for(
      votes.size(),
      [&](std::size_t i) {
        const Mat3& ri = votes.poses[i].rotation.m;
        double sum = 0.0;
        for (int j : tree.radius_search(centers[i], bw.sigma_t)) {
          if (static_cast<std::size_t>(j) == i) {
            // Self distance is identically zero; adding exactly 1 keeps the
            // density >= 1 invariant free of acos rounding.
            sum += 1.0;
            continue;
          }
          const Mat3& rj = votes.poses[static_cast<std::size_t>(j)].rotation.m;
          const double trace = ri.cwiseProduct(rj).sum();  // trace(Ri^T Rj)
          if (trace < trace_gate) continue;
          const double dr = std::acos(std::clamp((trace - 1.0) / 2.0, -1.0, 1.0));
          const double dt2 = (centers[static_cast<std::size_t>(j)] - centers[i]).squaredNorm();
          sum += std::exp(-dt2 * inv_2st2) * std::exp(-dr * dr * inv_2sr2);
        }
        density[i] = sum;
      },
      threads);
  return density;
}

/// The vote with maximal density; ties resolve to the lowest vote index.
inline Mode modal_pose(const VoteSet& votes, std::span<const double> densities) {
  if (votes.size() == 0 || densities.size() != votes.size())
    throw std::invalid_argument("modal_pose: empty or mismatched inputs");
  std::size_t best = 0;
  for (std::size_t i = 1; i < densities.size(); ++i)
    if (densities[i] > densities[best]) best = i;
  return Mode{votes.poses[best], densities[best], static_cast<int>(best)};
}

/// Multi-instance mode extraction: the candidate set is the best vote of
/// each correspondence; candidates are accepted greedily by descending
/// density, suppressing any whose translation lies within nms_radius of an
/// already accepted mode. At most k modes are returned.
inline std::vector<Mode> top_modes_nms(const VoteSet& votes, std::span<const double> densities,
                                       std::size_t k, double nms_radius,
                                       bool all_votes_as_candidates = false) {
  if (k < 1) throw std::invalid_argument("top_modes_nms: k must be >= 1");
  if (votes.size() == 0 || densities.size() != votes.size())
    throw std::invalid_argument("top_modes_nms: empty or mismatched inputs");

  std::vector<std::size_t> candidates;
  if (all_votes_as_candidates) {
    candidates.resize(votes.size());
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  } else {
    // Best vote per source correspondence (max density, lowest index on ties).
    int max_source = 0;
    for (int s : votes.source) max_source = std::max(max_source, s);
    std::vector<std::ptrdiff_t> best(static_cast<std::size_t>(max_source) + 1, -1);
    for (std::size_t i = 0; i < votes.size(); ++i) {
      auto& slot = best[static_cast<std::size_t>(votes.source[i])];
      if (slot < 0 || densities[i] > densities[static_cast<std::size_t>(slot)])
        slot = static_cast<std::ptrdiff_t>(i);
    }
    for (std::ptrdiff_t s : best)
      if (s >= 0) candidates.push_back(static_cast<std::size_t>(s));
  }

  std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return densities[a] != densities[b] ? densities[a] > densities[b] : a < b;
  });

  std::vector<Mode> out;
  for (std::size_t idx : candidates) {
    if (out.size() >= k) break;
    const Vec3& t = votes.poses[idx].translation;
    bool suppressed = false;
    for (const Mode& m : out) {
      if (translation_distance(t, m.pose.translation) <= nms_radius) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed)
      out.push_back(Mode{votes.poses[idx], densities[idx], static_cast<int>(idx)});
  }
  return out;
}

inline constexpr double kDefaultNmsFraction = 0.2;  // of the object bbox diagonal

/// Keeps modes with density >= min_density, order preserved.
inline std::vector<Mode> density_threshold_filter(std::span<const Mode> modes,
                                                  double min_density) {
  if (min_density < 0.0)
    throw std::invalid_argument("density_threshold_filter: negative threshold");
  std::vector<Mode> out;
  for (const Mode& m : modes)
    if (m.density >= min_density) out.push_back(m);
  return out;
}

/// CSV dump of a mode list (density, row-major rotation, translation,
/// maximizing vote id).
inline void save_modes_csv(const std::string& path, std::span<const Mode> modes) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open file for writing");
  out << "density,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz,vote_id\n";
  char buf[512];
  for (const Mode& m : modes) {
    const Mat3& r = m.pose.rotation.m;
    const Vec3& t = m.pose.translation;
    std::snprintf(buf, sizeof(buf),
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                  m.density, r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0),
                  r(2, 1), r(2, 2), t.x(), t.y(), t.z(), m.vote_id);
    out << buf;
  }
}

}  // namespace posekit
