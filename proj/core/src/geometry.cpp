#include "puray/geometry.hpp"

#include <stdexcept>

namespace puray {

Point3 centroid(const std::vector<Point3>& pts) {
  if (pts.empty()) throw std::invalid_argument("centroid: empty point set");
  Point3 sum;
  for (const Point3& p : pts) sum += p;
  return sum / static_cast<double>(pts.size());
}

NormalizeInfo normalize_to_unit_ball(PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("normalize_to_unit_ball: empty cloud");
  NormalizeInfo info;
  info.center = centroid(cloud.points);
  double max_d = 0.0;
  for (const Point3& p : cloud.points) {
    max_d = std::max(max_d, (p - info.center).norm());
  }
  info.scale = max_d > 0.0 ? max_d : 1.0;
  for (Point3& p : cloud.points) p = (p - info.center) / info.scale;
  return info;
}

}  // namespace puray
