#include "posekit/io.hpp"
#include "posekit/rng.hpp"
#include "posekit/synthetic.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace posekit;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = temp_path(name);
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

template <typename T>
void put(std::string& s, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  s.append(buf, sizeof(T));
}

}  // namespace

TEST_CASE("load_ply: minimal ASCII mesh", "[io]") {
  const std::string path = write_temp(
      "pk_min.ply",
      "ply\nformat ascii 1.0\ncomment test\n"
      "element vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
      "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
      "0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  const LoadedModel m = load_model(path, ModelFormat::ply);
  REQUIRE(m.is_mesh());
  CHECK(m.mesh.vertex_count() == 3);
  CHECK(m.mesh.face_count() == 1);
  CHECK(m.cloud.points[1] == Vec3(1, 0, 0));
}

TEST_CASE("load_ply: normals and skipped properties", "[io]") {
  const std::string path = write_temp(
      "pk_norm.ply",
      "ply\nformat ascii 1.0\n"
      "element vertex 2\n"
      "property float x\nproperty float y\nproperty float z\n"
      "property float nx\nproperty float ny\nproperty float nz\n"
      "property uchar red\nproperty uchar green\n"
      "end_header\n"
      "0 0 0 0 0 1 255 0\n1 2 3 1 0 0 0 255\n");
  const LoadedModel m = load_ply(path);
  CHECK_FALSE(m.is_mesh());
  REQUIRE(m.cloud.has_normals());
  CHECK(m.cloud.normals[0] == Vec3(0, 0, 1));
  CHECK(m.cloud.points[1] == Vec3(1, 2, 3));
  CHECK(m.skipped_properties == 2);
}

TEST_CASE("load_ply: binary little-endian", "[io]") {
  std::string content =
      "ply\nformat binary_little_endian 1.0\n"
      "element vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
      "element face 1\nproperty list uchar int vertex_indices\nend_header\n";
  put<float>(content, 1.5f); put<float>(content, 2.5f); put<float>(content, -3.0f);
  put<float>(content, 0.0f); put<float>(content, 1.0f); put<float>(content, 2.0f);
  content += '\x03';
  put<std::int32_t>(content, 0); put<std::int32_t>(content, 1); put<std::int32_t>(content, 0);
  const std::string path = write_temp("pk_bin.ply", content);
  const LoadedModel m = load_ply(path);
  CHECK(m.cloud.points[0] == Vec3(1.5, 2.5, -3.0));
  CHECK(m.cloud.points[1] == Vec3(0.0, 1.0, 2.0));
  // The only face repeats index 0 and is dropped as degenerate.
  CHECK(m.dropped_faces == 1);
  CHECK_FALSE(m.is_mesh());
}

TEST_CASE("load_ply: truncated binary names the byte offset", "[io]") {
  std::string content =
      "ply\nformat binary_little_endian 1.0\n"
      "element vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
      "end_header\n";
  put<float>(content, 1.0f); put<float>(content, 2.0f);  // half a vertex short
  const std::string path = write_temp("pk_trunc.ply", content);
  try {
    load_ply(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("load_ply: face index out of range", "[io]") {
  const std::string path = write_temp(
      "pk_oor.ply",
      "ply\nformat ascii 1.0\n"
      "element vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
      "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
      "0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n");
  CHECK_THROWS_AS(load_ply(path), ParseError);
}

TEST_CASE("load_ply: quads are fan-triangulated", "[io]") {
  const std::string path = write_temp(
      "pk_quad.ply",
      "ply\nformat ascii 1.0\n"
      "element vertex 4\nproperty float x\nproperty float y\nproperty float z\n"
      "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
      "0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
  const LoadedModel m = load_ply(path);
  CHECK(m.mesh.face_count() == 2);
}

TEST_CASE("load_obj: triangulated cube", "[io]") {
  std::string content;
  for (const char* v : {"v 0 0 0", "v 1 0 0", "v 1 1 0", "v 0 1 0",
                        "v 0 0 1", "v 1 0 1", "v 1 1 1", "v 0 1 1"})
    content += std::string(v) + "\n";
  content +=
      "f 1 3 2\nf 1 4 3\nf 5 6 7\nf 5 7 8\nf 1 2 6\nf 1 6 5\n"
      "f 3 4 8\nf 3 8 7\nf 2 3 7\nf 2 7 6\nf 4 1 5\nf 4 5 8\n";
  const std::string path = write_temp("pk_cube.obj", content);
  const LoadedModel m = load_model(path, ModelFormat::obj);
  CHECK(m.mesh.vertex_count() == 8);
  CHECK(m.mesh.face_count() == 12);
}

TEST_CASE("load_obj: slashes, negative indices, ignored records", "[io]") {
  const std::string path = write_temp(
      "pk_misc.obj",
      "# comment\nmtllib foo.mtl\no thing\n"
      "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
      "vn 0 0 1\nvt 0 0\ns off\n"
      "f 1/1/1 2/2/1 3/3/1\n"
      "f -3 -2 -1\n");
  const LoadedModel m = load_obj(path);
  CHECK(m.mesh.vertex_count() == 3);
  CHECK(m.mesh.face_count() == 2);
  CHECK(m.mesh.faces[1] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("load_obj: out-of-range index names the line", "[io]") {
  const std::string path = write_temp("pk_bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
  try {
    load_obj(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":4:") != std::string::npos);
  }
}

TEST_CASE("save_ply / load_ply round trip preserves geometry", "[io]") {
  Rng rng(48);
  PointCloud c;
  for (int i = 0; i < 200; ++i) {
    c.points.push_back(rng.in_ball(2.0));
    c.normals.push_back(rng.unit_vector());
  }
  const std::string path = temp_path("pk_roundtrip.ply");
  save_ply(path, c);
  const LoadedModel m = load_ply(path);
  REQUIRE(m.cloud.size() == c.size());
  REQUIRE(m.cloud.has_normals());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK((m.cloud.points[i] - c.points[i]).norm() <= 1e-15);
    CHECK((m.cloud.normals[i] - c.normals[i]).norm() <= 1e-15);
  }
}

TEST_CASE("save_ply mesh round trip", "[io]") {
  const TriangleMesh mesh = icosphere(1);
  const std::string path = temp_path("pk_mesh_rt.ply");
  save_ply(path, mesh);
  const LoadedModel m = load_ply(path);
  REQUIRE(m.is_mesh());
  CHECK(m.mesh.vertex_count() == mesh.vertex_count());
  CHECK(m.mesh.face_count() == mesh.face_count());
}
