#include "posekit/clustering.hpp"
#include "posekit/rng.hpp"
#include "posekit/synthetic.hpp"
#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace posekit;
using testutil::rotation_residual;

namespace {

// Brute-force truncated double sum with the same truncation rule as the
// implementation (both distances within their bandwidths), evaluated from
// the definition. Independent oracle for density_estimates.
std::vector<double> brute_density(const VoteSet& votes, const Bandwidths& bw) {
  const std::vector<Vec3> centers = votes.center_votes();
  std::vector<double> out(votes.size(), 0.0);
  for (std::size_t i = 0; i < votes.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < votes.size(); ++j) {
      if (j == i) {
        sum += 1.0;  // d(T, T) = 0 identically
        continue;
      }
      const double dt = (centers[j] - centers[i]).norm();
      if (dt > bw.sigma_t) continue;
      const double dr = geodesic_distance(votes.poses[i].rotation, votes.poses[j].rotation);
      if (dr > bw.sigma_r) continue;
      sum += std::exp(-dt * dt / (2.0 * bw.sigma_t * bw.sigma_t)) *
             std::exp(-dr * dr / (2.0 * bw.sigma_r * bw.sigma_r));
    }
    out[i] = sum;
  }
  return out;
}

VoteSet manual_votes(std::vector<Pose> poses, int per_source = 1) {
  VoteSet votes;
  votes.poses = std::move(poses);
  votes.tessellation = per_source;
  votes.center = Vec3::Zero();
  votes.source.resize(votes.poses.size());
  for (std::size_t i = 0; i < votes.poses.size(); ++i)
    votes.source[i] = static_cast<int>(i / static_cast<std::size_t>(per_source));
  return votes;
}

VoteSet random_votes(Rng& rng, std::size_t n, double spread) {
  std::vector<Pose> poses;
  // A few tight clusters plus uniform scatter exercises both sides of the
  // truncation boundary.
  std::vector<Pose> anchors;
  for (int a = 0; a < 5; ++a) anchors.push_back({rng.rotation(), rng.in_ball(spread)});
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < 0.5) {
      const Pose& anchor = anchors[rng.below(anchors.size())];
      const Vec3 axis = rng.unit_vector();
      poses.push_back({Rotation{rotation_from_axis_angle(axis, rng.uniform(0.0, 0.5)).m *
                                anchor.rotation.m},
                       anchor.translation + rng.in_ball(0.02)});
    } else {
      poses.push_back({rng.rotation(), rng.in_ball(spread)});
    }
  }
  return manual_votes(std::move(poses));
}

}  // namespace

TEST_CASE("density_estimates: self-contribution baseline", "[clustering]") {
  Rng rng(61);
  const Bandwidths bw{0.01, 22.5 * kPi / 180.0};

  const VoteSet one = manual_votes({Pose{rng.rotation(), rng.in_ball(1.0)}});
  CHECK(density_estimates(one, bw) == std::vector<double>{1.0});

  const Pose p{rng.rotation(), rng.in_ball(1.0)};
  const VoteSet two = manual_votes({p, p});
  const auto d = density_estimates(two, bw);
  CHECK(d[0] == Catch::Approx(2.0).margin(1e-12));
  CHECK(d[1] == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("density_estimates: neighbor at exactly one translation bandwidth", "[clustering]") {
  Rng rng(62);
  const Bandwidths bw{0.5, 22.5 * kPi / 180.0};
  const Rotation r = rng.rotation();
  const VoteSet votes = manual_votes({Pose{r, Vec3(0, 0, 0)}, Pose{r, Vec3(0.5, 0, 0)}});
  const auto d = density_estimates(votes, bw);
  // Closed-ball truncation includes the boundary; kernel there is e^{-1/2}.
  CHECK(d[0] == Catch::Approx(1.0 + std::exp(-0.5)).margin(1e-12));
  CHECK(d[1] == Catch::Approx(1.0 + std::exp(-0.5)).margin(1e-12));
}

TEST_CASE("density_estimates equals the brute-force truncated sum", "[clustering]") {
  Rng rng(63);
  const Bandwidths bw{0.05, 22.5 * kPi / 180.0};
  const VoteSet votes = random_votes(rng, 500, 0.15);
  const auto fast = density_estimates(votes, bw);
  const auto slow = brute_density(votes, bw);
  for (std::size_t i = 0; i < fast.size(); ++i) {
    CHECK(std::abs(fast[i] - slow[i]) <= 1e-9 * std::max(1.0, std::abs(slow[i])));
    CHECK(fast[i] >= 1.0);  // self always included
  }
}

TEST_CASE("density_estimates: kernel factors stay within (e^-1, 1]", "[clustering]") {
  // Inside the truncation both distances are at most one bandwidth, so each
  // pairwise contribution is at least e^{-1/2} * e^{-1/2}. Verify via the
  // two-vote case at the worst corner.
  Rng rng(64);
  const Bandwidths bw{0.1, 0.5};
  const Rotation r0 = rng.rotation();
  const Vec3 axis = rng.unit_vector();
  const Rotation r1{rotation_from_axis_angle(axis, 0.5).m * r0.m};
  const VoteSet votes = manual_votes({Pose{r0, Vec3::Zero()}, Pose{r1, Vec3(0.1, 0, 0)}});
  const auto d = density_estimates(votes, bw);
  const double pairwise = d[0] - 1.0;
  CHECK(pairwise >= std::exp(-1.0) - 1e-9);
  CHECK(pairwise <= 1.0);
}

TEST_CASE("modal_pose: ties resolve to the lowest vote index", "[clustering]") {
  Rng rng(65);
  const Pose p{rng.rotation(), rng.in_ball(1.0)};
  const VoteSet votes = manual_votes({p, p, p, p});
  const auto d = density_estimates(votes, Bandwidths{0.01, 0.4});
  const Mode mode = modal_pose(votes, d);
  CHECK(mode.vote_id == 0);
  CHECK(mode.density == Catch::Approx(4.0).margin(1e-12));
}

TEST_CASE("modal_pose survives 95% outliers", "[clustering][acceptance-support]") {
  const TriangleMesh mesh = bumpy_sphere_mesh(3, 0.25, 5, 66);
  const PointCloud object = mesh_vertex_normals(mesh).cloud;
  const Bandwidths bw{0.01, 22.5 * kPi / 180.0};
  Rng rng(67);
  int hits = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Pose truth{rng.rotation(), rng.in_ball(0.2)};
    const auto synth = synth_correspondences(object, truth, 10, 490, 0.002,
                                             derive_seed(68, static_cast<std::uint64_t>(trial)));
    const VoteSet votes =
        generate_vote_set(synth.pairs, centroid(object),
                          1e-4 * bounding_box_diagonal(object), 60,
                          PhasePolicy::seeded(derive_seed(69, static_cast<std::uint64_t>(trial))));
    const auto densities = density_estimates(votes, bw);
    const Mode mode = modal_pose(votes, densities);
    const double terr = translation_distance(mode.pose.translation, truth.translation);
    const double rerr = geodesic_distance(mode.pose.rotation, truth.rotation);
    if (terr <= bw.sigma_t && rerr <= bw.sigma_r) ++hits;
  }
  CHECK(hits >= 9);
}

TEST_CASE("density argmax is equivariant under rigid motions", "[clustering]") {
  Rng rng(70);
  const Bandwidths bw{0.05, 0.4};
  const VoteSet votes = random_votes(rng, 300, 0.2);
  const Pose g{rng.rotation(), rng.in_ball(0.5)};
  VoteSet moved = votes;
  for (Pose& p : moved.poses) p = compose(g, p);

  const auto d0 = density_estimates(votes, bw);
  const auto d1 = density_estimates(moved, bw);
  for (std::size_t i = 0; i < d0.size(); ++i)
    CHECK(d1[i] == Catch::Approx(d0[i]).epsilon(1e-9));

  const Mode m0 = modal_pose(votes, d0);
  const Mode m1 = modal_pose(moved, d1);
  CHECK(m0.vote_id == m1.vote_id);
  const Pose expected = compose(g, m0.pose);
  CHECK(translation_distance(expected.translation, m1.pose.translation) <= 1e-9);
  CHECK(rotation_residual(expected.rotation, m1.pose.rotation) <= 1e-9);
}

TEST_CASE("adding a duplicate vote never decreases its density", "[clustering]") {
  Rng rng(71);
  const Bandwidths bw{0.05, 0.4};
  VoteSet votes = random_votes(rng, 100, 0.1);
  const auto before = density_estimates(votes, bw);
  VoteSet more = votes;
  more.poses.push_back(votes.poses[17]);
  more.source.push_back(static_cast<int>(more.poses.size() - 1));
  const auto after = density_estimates(more, bw);
  CHECK(after[17] >= before[17]);
  CHECK(after[17] == Catch::Approx(before[17] + 1.0).margin(1e-12));
}

TEST_CASE("top_modes_nms: one cluster yields one mode", "[clustering]") {
  Rng rng(72);
  const Pose anchor{rng.rotation(), Vec3(0.3, 0, 0)};
  std::vector<Pose> poses;
  for (int i = 0; i < 50; ++i)
    poses.push_back({anchor.rotation, anchor.translation + rng.in_ball(0.004)});
  const VoteSet votes = manual_votes(std::move(poses), 5);  // 10 correspondences
  const auto d = density_estimates(votes, Bandwidths{0.01, 0.4});
  const auto modes = top_modes_nms(votes, d, 10, 0.05);
  CHECK(modes.size() == 1);
}

TEST_CASE("top_modes_nms: two separated clusters come out ordered by density",
          "[clustering]") {
  Rng rng(73);
  const double nms_radius = 0.05;
  std::vector<Pose> poses;
  const Rotation ra = rng.rotation();
  const Rotation rb = rng.rotation();
  // Cluster A: 30 votes; cluster B: 20 votes, 3 x nms_radius away.
  for (int i = 0; i < 30; ++i) poses.push_back({ra, Vec3(0, 0, 0) + rng.in_ball(0.003)});
  for (int i = 0; i < 20; ++i)
    poses.push_back({rb, Vec3(3.0 * nms_radius, 0, 0) + rng.in_ball(0.003)});
  const VoteSet votes = manual_votes(std::move(poses), 5);
  const auto d = density_estimates(votes, Bandwidths{0.01, 0.4});
  const auto modes = top_modes_nms(votes, d, 10, nms_radius);
  REQUIRE(modes.size() == 2);
  CHECK(modes[0].density > modes[1].density);
  CHECK(modes[0].pose.translation.norm() <= 0.01);
  CHECK(translation_distance(modes[0].pose.translation, modes[1].pose.translation) >
        nms_radius);
}

TEST_CASE("density_threshold_filter", "[clustering]") {
  std::vector<Mode> modes{{Pose{}, 9.0, 0}, {Pose{}, 4.0, 1}, {Pose{}, 1.5, 2}};
  CHECK(density_threshold_filter(modes, 0.0).size() == 3);
  CHECK(density_threshold_filter(modes, 100.0).empty());
  const auto mid = density_threshold_filter(modes, 5.0);
  REQUIRE(mid.size() == 1);
  CHECK(mid[0].vote_id == 0);
}
