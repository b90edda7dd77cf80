#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "puray/geometry.hpp"

namespace puray {

// Half the sum of the two directed mean nearest-neighbor distances
// (unsquared).
double chamfer(const PointCloud& a, const PointCloud& b);
// Larger of the two directed max nearest-neighbor distances.
double hausdorff(const PointCloud& a, const PointCloud& b);

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

Point3 closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b,
                                 const Point3& c);

// Mean exact point-to-surface distance over all mesh triangles.
double p2f(const PointCloud& pts, const TriangleMesh& mesh);

struct EvalReport {
  double cd_x1e3 = 0.0;
  double hd_x1e3 = 0.0;
  std::optional<double> p2f_x1e3;
  std::size_t pred_count = 0;
  std::size_t gt_count = 0;
};

EvalReport evaluate(const PointCloud& pred, const PointCloud& gt,
                    const TriangleMesh* mesh = nullptr);
// Header line plus one value row; p2f_x1e3 left empty without a mesh.
std::string eval_report_csv(const EvalReport& report);

}  // namespace puray
