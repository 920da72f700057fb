#include "posekit/cloud.hpp"
#include "posekit/rng.hpp"
#include "posekit/synthetic.hpp"
#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace posekit;

namespace {

TriangleMesh unit_cube() {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  // Outward winding (CCW seen from outside).
  m.faces = {{0, 2, 1}, {0, 3, 2},   // bottom (-z)
             {4, 5, 6}, {4, 6, 7},   // top (+z)
             {0, 1, 5}, {0, 5, 4},   // -y
             {2, 3, 7}, {2, 7, 6},   // +y
             {1, 2, 6}, {1, 6, 5},   // +x
             {3, 0, 4}, {3, 4, 7}};  // -x
  return m;
}

}  // namespace

TEST_CASE("mesh_vertex_normals: cube normals point away from the center", "[cloud]") {
  const auto res = mesh_vertex_normals(unit_cube());
  REQUIRE(res.cloud.size() == 8);
  CHECK(res.dropped == 0);
  const Vec3 center(0.5, 0.5, 0.5);
  for (std::size_t i = 0; i < res.cloud.size(); ++i) {
    CHECK(res.cloud.normals[i].dot(res.cloud.points[i] - center) > 0.0);
    CHECK(std::abs(res.cloud.normals[i].norm() - 1.0) <= 1e-6);
  }
}

TEST_CASE("mesh_vertex_normals: single CCW triangle in z=0 gives +z normals", "[cloud]") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  const auto res = mesh_vertex_normals(m);
  REQUIRE(res.cloud.size() == 3);
  for (const Vec3& n : res.cloud.normals) CHECK((n - Vec3::UnitZ()).norm() <= 1e-12);
}

TEST_CASE("mesh_vertex_normals: icosphere normals near radial", "[cloud]") {
  const auto res = mesh_vertex_normals(icosphere(3));
  REQUIRE(res.dropped == 0);
  const double cos5 = std::cos(5.0 * kPi / 180.0);
  for (std::size_t i = 0; i < res.cloud.size(); ++i)
    CHECK(res.cloud.normals[i].dot(res.cloud.points[i].normalized()) >= cos5);
}

TEST_CASE("mesh_vertex_normals: isolated vertex dropped with count", "[cloud]") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}};
  m.faces = {{0, 1, 2}};
  const auto res = mesh_vertex_normals(m);
  CHECK(res.cloud.size() == 3);
  CHECK(res.dropped == 1);
}

TEST_CASE("estimate_normals: plane gives +-z normals", "[cloud]") {
  const PointCloud plane = plane_patch(20, 20, 0.1, 0.02, 31);
  PointCloud input{plane.points, {}};
  const auto res = estimate_normals(input, 10);
  REQUIRE(res.cloud.size() == input.size());
  CHECK(res.dropped == 0);
  for (const Vec3& n : res.cloud.normals) {
    CHECK(std::abs(std::abs(n.z()) - 1.0) <= 1e-6);
    CHECK(std::abs(n.norm() - 1.0) <= 1e-6);
  }
}

TEST_CASE("estimate_normals: dense sphere sample is near radial", "[cloud]") {
  const PointCloud sphere = sphere_cloud(4000, 1.0, 32);
  PointCloud input{sphere.points, {}};
  const auto res = estimate_normals(input, 10);
  const double cos10 = std::cos(10.0 * kPi / 180.0);
  std::size_t good = 0;
  for (std::size_t i = 0; i < res.cloud.size(); ++i) {
    if (std::abs(res.cloud.normals[i].dot(res.cloud.points[i].normalized())) >= cos10) ++good;
  }
  CHECK(static_cast<double>(good) >= 0.99 * static_cast<double>(res.cloud.size()));
}

TEST_CASE("estimate_normals: k too large is a precondition error", "[cloud]") {
  PointCloud tiny;
  tiny.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  CHECK_THROWS_AS(estimate_normals(tiny, 3), std::invalid_argument);
}

TEST_CASE("orient_normals: plane with random flips becomes consistent", "[cloud]") {
  PointCloud plane = plane_patch(15, 15, 0.1, 0.0, 33);
  Rng rng(34);
  for (Vec3& n : plane.normals)
    if (rng.uniform() < 0.5) n = -n;
  const auto res = orient_normals(plane, 8);
  CHECK(res.components == 1);
  for (std::size_t i = 1; i < res.cloud.size(); ++i)
    CHECK(res.cloud.normals[i].dot(res.cloud.normals[0]) > 0.0);
}

TEST_CASE("orient_normals: sphere with random flips is mostly outward", "[cloud]") {
  PointCloud sphere = sphere_cloud(3000, 1.0, 35);
  Rng rng(36);
  for (Vec3& n : sphere.normals)
    if (rng.uniform() < 0.5) n = -n;
  const auto res = orient_normals(sphere, 10);
  std::size_t outward = 0;
  for (std::size_t i = 0; i < res.cloud.size(); ++i)
    if (res.cloud.normals[i].dot(res.cloud.points[i]) > 0.0) ++outward;
  CHECK(static_cast<double>(outward) >= 0.99 * static_cast<double>(res.cloud.size()));
}

TEST_CASE("orient_normals: disjoint clusters are reported", "[cloud]") {
  PointCloud two = concat(sphere_cloud(200, 0.5, 37),
                          transformed(sphere_cloud(200, 0.5, 38),
                                      Pose{Rotation::identity(), Vec3(100, 0, 0)}));
  const auto res = orient_normals(two, 8);
  CHECK(res.components == 2);
}

TEST_CASE("voxel_downsample: two points in one voxel merge at the midpoint", "[cloud]") {
  PointCloud c;
  c.points = {{0.1, 0.1, 0.1}, {0.3, 0.1, 0.1}};
  const PointCloud out = voxel_downsample(c, 1.0);
  REQUIRE(out.size() == 1);
  CHECK((out.points[0] - Vec3(0.2, 0.1, 0.1)).norm() <= 1e-15);
}

TEST_CASE("voxel_downsample: already-sparse cloud is unchanged up to order", "[cloud]") {
  Rng rng(39);
  PointCloud c;
  for (int i = 0; i < 50; ++i) c.points.push_back(rng.in_box(Vec3::Zero(), Vec3(100, 100, 100)));
  const PointCloud out = voxel_downsample(c, 0.5);
  REQUIRE(out.size() == c.size());
  auto sorted = [](std::vector<Vec3> v) {
    std::sort(v.begin(), v.end(), [](const Vec3& a, const Vec3& b) {
      return std::tie(a.x(), a.y(), a.z()) < std::tie(b.x(), b.y(), b.z());
    });
    return v;
  };
  CHECK(sorted(out.points) == sorted(c.points));
}

TEST_CASE("voxel_downsample: counting bound on a uniform cube", "[cloud]") {
  Rng rng(40);
  PointCloud c;
  for (int i = 0; i < 1000; ++i) c.points.push_back(rng.in_box(Vec3::Zero(), Vec3(1, 1, 1)));
  const PointCloud out = voxel_downsample(c, 0.2);
  CHECK(out.size() <= 125);
  CHECK(out.size() >= 100);  // uniform fill occupies nearly all voxels
}

TEST_CASE("voxel_downsample: idempotent at fixed resolution", "[cloud]") {
  PointCloud c = sphere_cloud(2000, 0.5, 41);
  const PointCloud once = voxel_downsample(c, 0.05);
  const PointCloud twice = voxel_downsample(once, 0.05);
  REQUIRE(once.size() == twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(once.points[i] == twice.points[i]);
    CHECK(once.normals[i] == twice.normals[i]);
  }
}

TEST_CASE("voxel_downsample: every output point has a nearby input point", "[cloud]") {
  Rng rng(42);
  PointCloud c;
  for (int i = 0; i < 500; ++i) c.points.push_back(rng.in_ball(1.0));
  const double res = 0.3;
  const PointCloud out = voxel_downsample(c, res);
  const KdTree tree(c.points);
  for (const Vec3& p : out.points) {
    const auto nn = tree.knn(p, 1);
    CHECK((c.points[static_cast<std::size_t>(nn[0])] - p).norm() <=
          res * std::sqrt(3.0) / 2.0 + 1e-12);
  }
}

TEST_CASE("add_uniform_noise: zero fraction is the identity", "[cloud]") {
  const PointCloud c = sphere_cloud(100, 1.0, 43);
  const PointCloud out = add_uniform_noise(c, 0.0, 7);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(out.points[i] == c.points[i]);
}

TEST_CASE("add_uniform_noise: displacement bound at bunny scale", "[cloud]") {
  PointCloud c = sphere_cloud(5000, 1.0, 44);
  const double scale = 0.25 / bounding_box_diagonal(c);  // diagonal 0.25 m
  for (Vec3& p : c.points) p *= scale;
  c = PointCloud{c.points, {}};
  const double diag = bounding_box_diagonal(c);
  CHECK(diag == Catch::Approx(0.25).epsilon(0.2));
  const PointCloud out = add_uniform_noise(c, 0.01, 45);
  double max_disp = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i)
    max_disp = std::max(max_disp, (out.points[i] - c.points[i]).norm());
  CHECK(max_disp <= 0.01 * diag + 1e-15);
}

TEST_CASE("add_uniform_noise: deterministic and ball-filling", "[cloud]") {
  Rng rng(46);
  PointCloud c;
  for (int i = 0; i < 100000; ++i) c.points.push_back(rng.in_box(Vec3::Zero(), Vec3(1, 1, 1)));
  const PointCloud a = add_uniform_noise(c, 0.02, 99);
  const PointCloud b = add_uniform_noise(c, 0.02, 99);
  for (std::size_t i = 0; i < c.size(); i += 997) CHECK(a.points[i] == b.points[i]);

  const double bound = 0.02 * bounding_box_diagonal(c);
  double max_disp = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i)
    max_disp = std::max(max_disp, (a.points[i] - c.points[i]).norm());
  CHECK(max_disp <= bound + 1e-15);
  CHECK(max_disp >= 0.9 * bound);
}

TEST_CASE("bounding_box_diagonal", "[cloud]") {
  PointCloud single;
  single.points = {{3, 4, 5}};
  CHECK(bounding_box_diagonal(single) == 0.0);

  PointCloud cube;
  for (int x = 0; x <= 1; ++x)
    for (int y = 0; y <= 1; ++y)
      for (int z = 0; z <= 1; ++z) cube.points.emplace_back(x, y, z);
  CHECK(bounding_box_diagonal(cube) == Catch::Approx(std::sqrt(3.0)).margin(1e-15));

  Rng rng(47);
  PointCloud c;
  for (int i = 0; i < 300; ++i) c.points.push_back(rng.in_ball(2.0));
  Vec3 lo = c.points[0], hi = c.points[0];
  for (const Vec3& p : c.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  CHECK(bounding_box_diagonal(c) == Catch::Approx((hi - lo).norm()).margin(1e-12));
}
