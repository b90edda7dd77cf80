#include "puray/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "puray/kdtree.hpp"

namespace puray {

namespace {

double directed_mean(const std::vector<Point3>& from, const KdTree& tree) {
  double sum = 0.0;
  for (const Point3& p : from) sum += std::sqrt(tree.nearest(p).d2);
  return sum / static_cast<double>(from.size());
}

double directed_max(const std::vector<Point3>& from, const KdTree& tree) {
  double worst = 0.0;
  for (const Point3& p : from) worst = std::max(worst, tree.nearest(p).d2);
  return std::sqrt(worst);
}

void check_nonempty(const PointCloud& a, const PointCloud& b, const char* what) {
  if (a.empty() || b.empty())
    throw std::invalid_argument(std::string(what) + ": empty point cloud");
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
  check_nonempty(a, b, "chamfer");
  KdTree ta(a.points), tb(b.points);
  return 0.5 * (directed_mean(a.points, tb) + directed_mean(b.points, ta));
}

double hausdorff(const PointCloud& a, const PointCloud& b) {
  check_nonempty(a, b, "hausdorff");
  KdTree ta(a.points), tb(b.points);
  return std::max(directed_max(a.points, tb), directed_max(b.points, ta));
}

Point3 closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b,
                                 const Point3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return a + v * ab;
  }

  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return a + w * ac;
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + w * (c - b);
  }

  const double denom = va + vb + vc;
  if (!(denom > 0.0)) {
    // Degenerate triangle, fall back to the nearest edge segment.
    auto on_segment = [&p](const Point3& u, const Point3& v) {
      const Vec3 uv = v - u;
      const double len2 = uv.squared_norm();
      double t = len2 > 0.0 ? dot(p - u, uv) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      return u + t * uv;
    };
    Point3 best = on_segment(a, b);
    double best_d2 = (p - best).squared_norm();
    for (const Point3& cand : {on_segment(b, c), on_segment(a, c)}) {
      const double d2c = (p - cand).squared_norm();
      if (d2c < best_d2) {
        best_d2 = d2c;
        best = cand;
      }
    }
    return best;
  }
  const double v = vb / denom, w = vc / denom;
  return a + v * ab + w * ac;
}

double p2f(const PointCloud& pts, const TriangleMesh& mesh) {
  if (pts.empty()) throw std::invalid_argument("p2f: empty point cloud");
  if (mesh.triangles.empty()) throw std::invalid_argument("p2f: mesh has no triangles");
  for (const auto& tri : mesh.triangles)
    for (int idx : tri)
      if (idx < 0 || idx >= static_cast<int>(mesh.vertices.size()))
        throw std::invalid_argument("p2f: triangle index out of range");

  double sum = 0.0;
  for (const Point3& p : pts.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& tri : mesh.triangles) {
      const Point3 q = closest_point_on_triangle(p, mesh.vertices[tri[0]],
                                                 mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
      best = std::min(best, (p - q).squared_norm());
    }
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(pts.size());
}

EvalReport evaluate(const PointCloud& pred, const PointCloud& gt, const TriangleMesh* mesh) {
  EvalReport r;
  r.cd_x1e3 = chamfer(pred, gt) * 1e3;
  r.hd_x1e3 = hausdorff(pred, gt) * 1e3;
  if (mesh) r.p2f_x1e3 = p2f(pred, *mesh) * 1e3;
  r.pred_count = pred.size();
  r.gt_count = gt.size();
  return r;
}

std::string eval_report_csv(const EvalReport& report) {
  char buf[160];
  if (report.p2f_x1e3)
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", report.cd_x1e3, report.hd_x1e3,
                  *report.p2f_x1e3);
  else
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,\n", report.cd_x1e3, report.hd_x1e3);
  return std::string("cd_x1e3,hd_x1e3,p2f_x1e3\n") + buf;
}

}  // namespace puray
