#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace puray {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
  constexpr bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  constexpr double squared_norm() const { return x * x + y * y + z * z; }
  double norm() const { return std::sqrt(squared_norm()); }
  Vec3 normalized() const { return *this / norm(); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline constexpr double dot(const Vec3& a, const Vec3& b) { return a.dot(b); }
inline constexpr Vec3 cross(const Vec3& a, const Vec3& b) { return a.cross(b); }

using Point3 = Vec3;

// 3x3 matrix, row major.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 from_columns(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
    Mat3 r;
    r.m = {c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z};
    return r;
  }
  Vec3 apply(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 transposed() const {
    Mat3 r;
    r.m = {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]};
    return r;
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
};

struct PointCloud {
  std::vector<Point3> points;
  std::optional<Point3> sensor;  // realscan inputs only
  std::string name;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct Ray {
  Point3 origin;
  Vec3 direction;  // unit length
};

// k nearest input points expressed relative to the ray origin and rescaled so
// the farthest lies on the unit sphere. `scale` converts normalized units
// back to world units.
struct Patch {
  std::vector<Point3> points;
  double scale = 1.0;
  Point3 origin_world;
};

struct EigenFrame {
  Point3 mean;
  std::array<double, 3> eigenvalues;   // ascending, scatter matrix (not divided by n)
  std::array<Vec3, 3> eigenvectors;    // orthonormal, eigenvectors[i] pairs with eigenvalues[i]
};

Point3 centroid(const std::vector<Point3>& pts);

// Center on the centroid and scale so max distance from it is 1. No-op scale
// guard for degenerate single-point clouds.
struct NormalizeInfo {
  Point3 center;
  double scale = 1.0;
};
NormalizeInfo normalize_to_unit_ball(PointCloud& cloud);

}  // namespace puray
