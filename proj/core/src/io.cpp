#include "puray/io.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "binary PLY and checkpoint layouts assume a little-endian host");

namespace puray::io {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& msg) {
  throw std::runtime_error(path.string() + ": " + msg);
}

[[noreturn]] void fail_line(const std::filesystem::path& path, std::size_t line,
                            const std::string& msg) {
  fail(path, "line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(std::move(tok));
  return out;
}

double parse_double(const std::filesystem::path& path, std::size_t line, const std::string& tok) {
  double v = 0.0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end)
    fail_line(path, line, "expected a number, got '" + tok + "'");
  return v;
}

long parse_long(const std::filesystem::path& path, std::size_t line, const std::string& tok) {
  long v = 0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end)
    fail_line(path, line, "expected an integer, got '" + tok + "'");
  return v;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) fail(path, "cannot open for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) fail(path, "cannot open for writing");
  return out;
}

// ---- PLY ----

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType ply_type(const std::filesystem::path& path, std::size_t line, const std::string& name) {
  if (name == "char" || name == "int8") return PlyType::i8;
  if (name == "uchar" || name == "uint8") return PlyType::u8;
  if (name == "short" || name == "int16") return PlyType::i16;
  if (name == "ushort" || name == "uint16") return PlyType::u16;
  if (name == "int" || name == "int32") return PlyType::i32;
  if (name == "uint" || name == "uint32") return PlyType::u32;
  if (name == "float" || name == "float32") return PlyType::f32;
  if (name == "double" || name == "float64") return PlyType::f64;
  fail_line(path, line, "unknown property type '" + name + "'");
}

std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

double ply_read_binary_value(const std::filesystem::path& path, std::istream& in, PlyType t) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(ply_type_size(t))))
    fail(path, "unexpected end of binary payload");
  switch (t) {
    case PlyType::i8: return static_cast<signed char>(buf[0]);
    case PlyType::u8: return buf[0];
    case PlyType::i16: {
      std::int16_t v;
      std::memcpy(&v, buf, 2);
      return v;
    }
    case PlyType::u16: {
      std::uint16_t v;
      std::memcpy(&v, buf, 2);
      return v;
    }
    case PlyType::i32: {
      std::int32_t v;
      std::memcpy(&v, buf, 4);
      return v;
    }
    case PlyType::u32: {
      std::uint32_t v;
      std::memcpy(&v, buf, 4);
      return v;
    }
    case PlyType::f32: {
      float v;
      std::memcpy(&v, buf, 4);
      return v;
    }
    case PlyType::f64: {
      double v;
      std::memcpy(&v, buf, 8);
      return v;
    }
  }
  return 0.0;
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
  std::vector<PlyProperty> props;
};

}  // namespace

PointCloud read_xyz(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, false);
  PointCloud cloud;
  cloud.name = path.stem().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 3)
      fail_line(path, lineno,
                "expected 3 coordinates, got " + std::to_string(toks.size()));
    cloud.points.push_back({parse_double(path, lineno, toks[0]),
                            parse_double(path, lineno, toks[1]),
                            parse_double(path, lineno, toks[2])});
  }
  return cloud;
}

void write_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out = open_out(path, false);
  char buf[128];
  for (const Point3& p : cloud.points) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p.x, p.y, p.z);
    out << buf;
  }
  if (!out) fail(path, "write failed");
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  std::string line;
  std::size_t lineno = 0;

  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) fail_line(path, lineno + 1, "unexpected end of header");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (split_ws(next_line()) != std::vector<std::string>{"ply"})
    fail_line(path, lineno, "not a PLY file");

  bool binary = false;
  bool have_format = false;
  std::vector<PlyElement> elems;
  for (;;) {
    const auto toks = split_ws(next_line());
    if (toks.empty() || toks[0] == "comment" || toks[0] == "obj_info") continue;
    if (toks[0] == "format") {
      if (toks.size() != 3 || toks[2] != "1.0")
        fail_line(path, lineno, "unsupported format line");
      if (toks[1] == "ascii") binary = false;
      else if (toks[1] == "binary_little_endian") binary = true;
      else if (toks[1] == "binary_big_endian")
        fail_line(path, lineno, "big-endian PLY is not supported");
      else
        fail_line(path, lineno, "unknown format '" + toks[1] + "'");
      have_format = true;
    } else if (toks[0] == "element") {
      if (toks.size() != 3) fail_line(path, lineno, "malformed element line");
      PlyElement e;
      e.name = toks[1];
      e.count = static_cast<std::size_t>(parse_long(path, lineno, toks[2]));
      elems.push_back(std::move(e));
    } else if (toks[0] == "property") {
      if (elems.empty()) fail_line(path, lineno, "property before any element");
      PlyProperty p;
      if (toks.size() == 5 && toks[1] == "list") {
        p.is_list = true;
        p.count_type = ply_type(path, lineno, toks[2]);
        p.type = ply_type(path, lineno, toks[3]);
        p.name = toks[4];
      } else if (toks.size() == 3) {
        p.type = ply_type(path, lineno, toks[1]);
        p.name = toks[2];
      } else {
        fail_line(path, lineno, "malformed property line");
      }
      elems.back().props.push_back(std::move(p));
    } else if (toks[0] == "end_header") {
      break;
    } else {
      fail_line(path, lineno, "unexpected header line '" + toks[0] + "'");
    }
  }
  if (!have_format) fail_line(path, lineno, "missing format line");

  PointCloud cloud;
  cloud.name = path.stem().string();
  for (const PlyElement& e : elems) {
    int ix = -1, iy = -1, iz = -1;
    if (e.name == "vertex") {
      for (std::size_t i = 0; i < e.props.size(); ++i) {
        const PlyProperty& p = e.props[i];
        if (p.is_list) continue;
        if (p.name == "x") ix = static_cast<int>(i);
        if (p.name == "y") iy = static_cast<int>(i);
        if (p.name == "z") iz = static_cast<int>(i);
      }
      if (ix < 0 || iy < 0 || iz < 0)
        fail(path, "vertex element lacks x/y/z properties");
      cloud.points.reserve(e.count);
    }

    for (std::size_t row = 0; row < e.count; ++row) {
      double x = 0, y = 0, z = 0;
      if (binary) {
        for (std::size_t pi = 0; pi < e.props.size(); ++pi) {
          const PlyProperty& p = e.props[pi];
          if (p.is_list) {
            const double n = ply_read_binary_value(path, in, p.count_type);
            for (long j = 0; j < static_cast<long>(n); ++j)
              ply_read_binary_value(path, in, p.type);
          } else {
            const double v = ply_read_binary_value(path, in, p.type);
            if (static_cast<int>(pi) == ix) x = v;
            if (static_cast<int>(pi) == iy) y = v;
            if (static_cast<int>(pi) == iz) z = v;
          }
        }
      } else {
        const auto toks = split_ws(next_line());
        std::size_t ti = 0;
        for (std::size_t pi = 0; pi < e.props.size(); ++pi) {
          const PlyProperty& p = e.props[pi];
          if (ti >= toks.size())
            fail_line(path, lineno, "row has too few values for element '" + e.name + "'");
          if (p.is_list) {
            const long n = parse_long(path, lineno, toks[ti++]);
            if (ti + static_cast<std::size_t>(n) > toks.size())
              fail_line(path, lineno, "list property overruns the row");
            ti += static_cast<std::size_t>(n);
          } else {
            const double v = parse_double(path, lineno, toks[ti++]);
            if (static_cast<int>(pi) == ix) x = v;
            if (static_cast<int>(pi) == iy) y = v;
            if (static_cast<int>(pi) == iz) z = v;
          }
        }
        if (ti != toks.size())
          fail_line(path, lineno, "row has trailing values for element '" + e.name + "'");
      }
      if (e.name == "vertex") cloud.points.push_back({x, y, z});
    }
  }
  return cloud;
}

void write_ply(const PointCloud& cloud, const std::filesystem::path& path, bool binary) {
  std::ofstream out = open_out(path, binary);
  out << "ply\n";
  out << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
  out << "element vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "end_header\n";
  if (binary) {
    for (const Point3& p : cloud.points) {
      const double v[3] = {p.x, p.y, p.z};
      out.write(reinterpret_cast<const char*>(v), sizeof v);
    }
  } else {
    char buf[128];
    for (const Point3& p : cloud.points) {
      std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x, p.y, p.z);
      out << buf;
    }
  }
  if (!out) fail(path, "write failed");
}

TriangleMesh read_off(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, false);
  std::string line;
  std::size_t lineno = 0;

  auto next_tokens = [&]() -> std::vector<std::string> {
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto toks = split_ws(line);
      if (!toks.empty()) return toks;
    }
    fail_line(path, lineno + 1, "unexpected end of file");
  };

  auto header = next_tokens();
  if (header.empty() || header[0] != "OFF") fail_line(path, lineno, "missing OFF header");
  header.erase(header.begin());
  if (header.empty()) header = next_tokens();
  if (header.size() != 3) fail_line(path, lineno, "expected 'nv nf ne' counts");
  const long nv = parse_long(path, lineno, header[0]);
  const long nf = parse_long(path, lineno, header[1]);
  if (nv < 0 || nf < 0) fail_line(path, lineno, "negative element count");

  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nv));
  for (long i = 0; i < nv; ++i) {
    const auto toks = next_tokens();
    if (toks.size() != 3)
      fail_line(path, lineno, "expected 3 vertex coordinates, got " + std::to_string(toks.size()));
    mesh.vertices.push_back({parse_double(path, lineno, toks[0]),
                             parse_double(path, lineno, toks[1]),
                             parse_double(path, lineno, toks[2])});
  }
  for (long f = 0; f < nf; ++f) {
    const auto toks = next_tokens();
    const long cnt = parse_long(path, lineno, toks[0]);
    if (cnt < 3) fail_line(path, lineno, "face needs at least 3 vertices");
    if (toks.size() != static_cast<std::size_t>(cnt) + 1)
      fail_line(path, lineno, "face vertex count does not match its index list");
    std::vector<int> idx(static_cast<std::size_t>(cnt));
    for (long j = 0; j < cnt; ++j) {
      const long v = parse_long(path, lineno, toks[static_cast<std::size_t>(j) + 1]);
      if (v < 0 || v >= nv)
        fail_line(path, lineno, "vertex index " + std::to_string(v) + " out of range");
      idx[static_cast<std::size_t>(j)] = static_cast<int>(v);
    }
    for (long j = 1; j + 1 < cnt; ++j)
      mesh.triangles.push_back({idx[0], idx[static_cast<std::size_t>(j)],
                                idx[static_cast<std::size_t>(j) + 1]});
  }
  return mesh;
}

PointCloud read_cloud(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".xyz") return read_xyz(path);
  if (ext == ".ply") return read_ply(path);
  fail(path, "unsupported point-cloud extension '" + ext + "'");
}

void write_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".xyz") return write_xyz(cloud, path);
  if (ext == ".ply") return write_ply(cloud, path);
  fail(path, "unsupported point-cloud extension '" + ext + "'");
}

}  // namespace puray::io
