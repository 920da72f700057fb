#pragma once

// Mesh / point-cloud file IO.
//
// PLY: ASCII and binary little-endian, header-driven. The reader keeps the
// vertex properties x/y/z (+ optional nx/ny/nz), skips any other property
// or element, and accepts polygonal faces (fan-triangulated). OBJ: v and f
// records only, 1-based and negative indices, other records ignored.
// A small ASCII PLY writer is provided for debugging dumps.

#include "posekit/cloud.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace posekit {

/// Malformed input; the message names the file and the line (ASCII) or byte
/// offset (binary) where parsing stopped.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelFormat { ply, obj };

/// Result of load_model: a mesh when the file carries faces, otherwise a
/// point cloud. `cloud` always holds the vertex data (with normals when the
/// file provides them).
struct LoadedModel {
  TriangleMesh mesh;
  PointCloud cloud;
  std::size_t skipped_properties = 0;   // vertex properties ignored by the reader
  std::size_t dropped_faces = 0;        // degenerate faces (repeated indices)

  bool is_mesh() const { return !mesh.faces.empty(); }
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

[[noreturn]] inline void fail_line(const std::string& path, std::size_t line,
                                   const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

[[noreturn]] inline void fail_offset(const std::string& path, std::size_t offset,
                                     const std::string& what) {
  throw ParseError(path + ": " + what + " at byte offset " + std::to_string(offset));
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view tok, double& out) {
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

inline bool parse_long(std::string_view tok, long long& out) {
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

// PLY property scalar types and their byte widths.
enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

inline std::optional<PlyType> ply_type(std::string_view name) {
  if (name == "char" || name == "int8") return PlyType::i8;
  if (name == "uchar" || name == "uint8") return PlyType::u8;
  if (name == "short" || name == "int16") return PlyType::i16;
  if (name == "ushort" || name == "uint16") return PlyType::u16;
  if (name == "int" || name == "int32") return PlyType::i32;
  if (name == "uint" || name == "uint32") return PlyType::u32;
  if (name == "float" || name == "float32") return PlyType::f32;
  if (name == "double" || name == "float64") return PlyType::f64;
  return std::nullopt;
}

inline std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32: return 4;
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

// Binary scalar read at `offset` (little-endian file, little-endian host
// assumed); advances the offset.
inline double ply_read_binary_scalar(const std::string& data, std::size_t& offset,
                                     PlyType type, const std::string& path) {
  const std::size_t size = ply_type_size(type);
  if (offset + size > data.size())
    fail_offset(path, offset, "truncated binary PLY data");
  const char* src = data.data() + offset;
  offset += size;
  switch (type) {
    case PlyType::i8: return static_cast<double>(static_cast<std::int8_t>(src[0]));
    case PlyType::u8: return static_cast<double>(static_cast<std::uint8_t>(src[0]));
    case PlyType::i16: {
      std::int16_t v;
      std::memcpy(&v, src, 2);
      return v;
    }
    case PlyType::u16: {
      std::uint16_t v;
      std::memcpy(&v, src, 2);
      return v;
    }
    case PlyType::i32: {
      std::int32_t v;
      std::memcpy(&v, src, 4);
      return v;
    }
    case PlyType::u32: {
      std::uint32_t v;
      std::memcpy(&v, src, 4);
      return v;
    }
    case PlyType::f32: {
      float v;
      std::memcpy(&v, src, 4);
      return v;
    }
    case PlyType::f64: {
      double v;
      std::memcpy(&v, src, 8);
      return v;
    }
  }
  return 0.0;
}

}  // namespace detail

inline LoadedModel load_ply(const std::string& path) {
  using namespace detail;
  const std::string data = read_file(path);

  // --- header ---
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= data.size()) return false;
    const std::size_t eol = data.find('\n', pos);
    const std::size_t end = eol == std::string::npos ? data.size() : eol;
    line = std::string_view(data).substr(pos, end - pos);
    pos = eol == std::string::npos ? data.size() : eol + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line) || split_ws(line).size() != 1 || split_ws(line)[0] != "ply")
    fail_line(path, 1, "missing 'ply' magic");

  bool binary = false;
  bool saw_format = false;
  std::vector<PlyElement> elements;
  for (;;) {
    if (!next_line(line)) fail_line(path, line_no, "unexpected end of header");
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() != 3) fail_line(path, line_no, "malformed format line");
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else if (tok[1] == "binary_big_endian")
        fail_line(path, line_no, "binary_big_endian PLY is not supported");
      else fail_line(path, line_no, "unknown PLY format");
      saw_format = true;
    } else if (tok[0] == "element") {
      long long count = 0;
      if (tok.size() != 3 || !parse_long(tok[2], count) || count < 0)
        fail_line(path, line_no, "malformed element line");
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(count), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) fail_line(path, line_no, "property before any element");
      PlyProperty prop;
      if (tok.size() == 5 && tok[1] == "list") {
        const auto ct = ply_type(tok[2]);
        const auto it = ply_type(tok[3]);
        if (!ct || !it) fail_line(path, line_no, "unknown list property type");
        prop.is_list = true;
        prop.count_type = *ct;
        prop.type = *it;
        prop.name = std::string(tok[4]);
      } else if (tok.size() == 3) {
        const auto t = ply_type(tok[1]);
        if (!t) fail_line(path, line_no, "unknown property type");
        prop.type = *t;
        prop.name = std::string(tok[2]);
      } else {
        fail_line(path, line_no, "malformed property line");
      }
      elements.back().properties.push_back(prop);
    } else if (tok[0] == "end_header") {
      break;
    } else {
      fail_line(path, line_no, "unknown header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!saw_format) fail_line(path, line_no, "header has no format line");

  LoadedModel out;

  // --- body ---
  for (const PlyElement& elem : elements) {
    const bool is_vertex = elem.name == "vertex";
    const bool is_face = elem.name == "face";

    int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1, ilist = -1;
    if (is_vertex) {
      for (std::size_t p = 0; p < elem.properties.size(); ++p) {
        const auto& name = elem.properties[p].name;
        if (elem.properties[p].is_list) continue;
        if (name == "x") ix = static_cast<int>(p);
        else if (name == "y") iy = static_cast<int>(p);
        else if (name == "z") iz = static_cast<int>(p);
        else if (name == "nx") inx = static_cast<int>(p);
        else if (name == "ny") iny = static_cast<int>(p);
        else if (name == "nz") inz = static_cast<int>(p);
        else ++out.skipped_properties;
      }
      if (ix < 0 || iy < 0 || iz < 0)
        fail_line(path, line_no, "vertex element lacks x/y/z properties");
      out.cloud.points.reserve(elem.count);
    } else if (is_face) {
      for (std::size_t p = 0; p < elem.properties.size(); ++p) {
        const auto& prop = elem.properties[p];
        if (prop.is_list && (prop.name == "vertex_indices" || prop.name == "vertex_index"))
          ilist = static_cast<int>(p);
        else ++out.skipped_properties;
      }
      if (ilist < 0) fail_line(path, line_no, "face element lacks a vertex index list");
      out.mesh.faces.reserve(elem.count);
    }
    const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;

    std::vector<double> row(elem.properties.size(), 0.0);
    std::vector<long long> indices;
    for (std::size_t r = 0; r < elem.count; ++r) {
      indices.clear();
      if (binary) {
        for (std::size_t p = 0; p < elem.properties.size(); ++p) {
          const auto& prop = elem.properties[p];
          if (!prop.is_list) {
            row[p] = ply_read_binary_scalar(data, pos, prop.type, path);
            continue;
          }
          const double count_val = ply_read_binary_scalar(data, pos, prop.count_type, path);
          const auto count = static_cast<std::size_t>(count_val);
          for (std::size_t c = 0; c < count; ++c) {
            const double v = ply_read_binary_scalar(data, pos, prop.type, path);
            if (static_cast<int>(p) == ilist)
              indices.push_back(static_cast<long long>(v));
          }
        }
      } else {
        if (!next_line(line))
          fail_line(path, line_no, "unexpected end of file inside element '" + elem.name + "'");
        const auto tok = split_ws(line);
        std::size_t t = 0;
        for (std::size_t p = 0; p < elem.properties.size(); ++p) {
          const auto& prop = elem.properties[p];
          if (!prop.is_list) {
            if (t >= tok.size() || !parse_double(tok[t], row[p]))
              fail_line(path, line_no, "malformed value in element '" + elem.name + "'");
            ++t;
            continue;
          }
          long long count = 0;
          if (t >= tok.size() || !parse_long(tok[t], count) || count < 0)
            fail_line(path, line_no, "malformed list count");
          ++t;
          for (long long c = 0; c < count; ++c) {
            long long v = 0;
            if (t >= tok.size() || !parse_long(tok[t], v))
              fail_line(path, line_no, "malformed list value");
            ++t;
            if (static_cast<int>(p) == ilist) indices.push_back(v);
          }
        }
        if (t != tok.size())
          fail_line(path, line_no, "trailing tokens in element '" + elem.name + "'");
      }

      if (is_vertex) {
        out.cloud.points.emplace_back(row[static_cast<std::size_t>(ix)],
                                      row[static_cast<std::size_t>(iy)],
                                      row[static_cast<std::size_t>(iz)]);
        if (has_normals)
          out.cloud.normals.emplace_back(row[static_cast<std::size_t>(inx)],
                                         row[static_cast<std::size_t>(iny)],
                                         row[static_cast<std::size_t>(inz)]);
      } else if (is_face) {
        if (indices.size() < 3) {
          if (binary) fail_offset(path, pos, "face with fewer than 3 indices");
          fail_line(path, line_no, "face with fewer than 3 indices");
        }
        for (long long v : indices) {
          if (v < 0 || static_cast<std::size_t>(v) >= out.cloud.points.size()) {
            const std::string what =
                "face vertex index " + std::to_string(v) + " out of range";
            if (binary) fail_offset(path, pos, what);
            fail_line(path, line_no, what);
          }
        }
        for (std::size_t c = 2; c < indices.size(); ++c) {
          const std::array<int, 3> f{static_cast<int>(indices[0]),
                                     static_cast<int>(indices[c - 1]),
                                     static_cast<int>(indices[c])};
          if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) ++out.dropped_faces;
          else out.mesh.faces.push_back(f);
        }
      }
    }
  }

  if (out.cloud.points.empty()) throw ParseError(path + ": file contains no vertices");
  if (!out.mesh.faces.empty()) out.mesh.vertices = out.cloud.points;
  return out;
}

inline LoadedModel load_obj(const std::string& path) {
  using namespace detail;
  const std::string data = read_file(path);
  LoadedModel out;

  std::size_t pos = 0, line_no = 0;
  while (pos < data.size()) {
    const std::size_t eol = data.find('\n', pos);
    const std::size_t end = eol == std::string::npos ? data.size() : eol;
    const std::string_view line = std::string_view(data).substr(pos, end - pos);
    pos = eol == std::string::npos ? data.size() : eol + 1;
    ++line_no;

    const auto tok = split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok[0] == "v") {
      if (tok.size() < 4) fail_line(path, line_no, "malformed vertex record");
      double x, y, z;
      if (!parse_double(tok[1], x) || !parse_double(tok[2], y) || !parse_double(tok[3], z))
        fail_line(path, line_no, "malformed vertex coordinate");
      out.cloud.points.emplace_back(x, y, z);
    } else if (tok[0] == "f") {
      if (tok.size() < 4) fail_line(path, line_no, "face with fewer than 3 vertices");
      std::vector<int> idx;
      for (std::size_t t = 1; t < tok.size(); ++t) {
        std::string_view ref = tok[t];
        const std::size_t slash = ref.find('/');
        if (slash != std::string_view::npos) ref = ref.substr(0, slash);
        long long v = 0;
        if (!parse_long(ref, v) || v == 0)
          fail_line(path, line_no, "malformed face vertex reference");
        // Negative references count back from the current vertex list.
        const long long resolved =
            v > 0 ? v - 1 : static_cast<long long>(out.cloud.points.size()) + v;
        if (resolved < 0 || static_cast<std::size_t>(resolved) >= out.cloud.points.size())
          fail_line(path, line_no,
                    "face vertex index " + std::to_string(v) + " out of range");
        idx.push_back(static_cast<int>(resolved));
      }
      for (std::size_t c = 2; c < idx.size(); ++c) {
        const std::array<int, 3> f{idx[0], idx[c - 1], idx[c]};
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) ++out.dropped_faces;
        else out.mesh.faces.push_back(f);
      }
    }
    // Any other record type (vn, vt, g, o, s, usemtl, mtllib, ...) is ignored.
  }

  if (out.cloud.points.empty()) throw ParseError(path + ": file contains no vertices");
  if (!out.mesh.faces.empty()) out.mesh.vertices = out.cloud.points;
  return out;
}

inline LoadedModel load_model(const std::string& path, ModelFormat format) {
  return format == ModelFormat::ply ? load_ply(path) : load_obj(path);
}

/// Picks the format from the file extension (.ply / .obj).
inline LoadedModel load_model(const std::string& path) {
  const std::size_t dot = path.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "ply" || ext == "PLY") return load_ply(path);
  if (ext == "obj" || ext == "OBJ") return load_obj(path);
  throw ParseError(path + ": cannot infer format from extension (use .ply or .obj)");
}

namespace detail {

inline void append_double(std::string& s, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  s += buf;
}

}  // namespace detail

/// ASCII PLY dump of a point cloud (with normals when present).
inline void save_ply(const std::string& path, const PointCloud& cloud) {
  std::string body;
  std::string header = "ply\nformat ascii 1.0\nelement vertex " +
                       std::to_string(cloud.size()) +
                       "\nproperty double x\nproperty double y\nproperty double z\n";
  if (cloud.has_normals())
    header += "property double nx\nproperty double ny\nproperty double nz\n";
  header += "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      detail::append_double(body, cloud.points[i][a]);
      body += a == 2 && !cloud.has_normals() ? "" : " ";
    }
    if (cloud.has_normals()) {
      for (int a = 0; a < 3; ++a) {
        detail::append_double(body, cloud.normals[i][a]);
        if (a != 2) body += " ";
      }
    }
    body += "\n";
  }
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw ParseError(path + ": cannot open file for writing");
  outf << header << body;
}

/// ASCII PLY dump of a triangle mesh.
inline void save_ply(const std::string& path, const TriangleMesh& mesh) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " +
                    std::to_string(mesh.vertex_count()) +
                    "\nproperty double x\nproperty double y\nproperty double z\n" +
                    "element face " + std::to_string(mesh.face_count()) +
                    "\nproperty list uchar int vertex_indices\nend_header\n";
  for (const Vec3& v : mesh.vertices) {
    for (int a = 0; a < 3; ++a) {
      detail::append_double(out, v[a]);
      out += a == 2 ? "\n" : " ";
    }
  }
  for (const auto& f : mesh.faces)
    out += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " +
           std::to_string(f[2]) + "\n";
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw ParseError(path + ": cannot open file for writing");
  outf << out;
}

}  // namespace posekit
