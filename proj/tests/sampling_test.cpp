#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "puray/sampling.hpp"
#include "test_util.hpp"

using namespace puray;

namespace {

// Independent greedy max-min re-check with lower-index tie-break.
void check_fps_greedy(const std::vector<Point3>& pts, const std::vector<int>& sel) {
  std::vector<double> best(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    best[i] = KdTree::squared_distance(pts[i], pts[sel[0]]);
  for (std::size_t m = 1; m < sel.size(); ++m) {
    int want = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (best[i] > best[want]) want = static_cast<int>(i);
    CHECK(sel[m] == want);
    for (std::size_t i = 0; i < pts.size(); ++i)
      best[i] = std::min(best[i], KdTree::squared_distance(pts[i], pts[sel[m]]));
  }
}

}  // namespace

TEST_CASE("farthest point sampling is greedy max-min with index tie-break") {
  const PointCloud cloud = testutil::box_cloud(256, 3);
  const std::vector<int> sel = farthest_point_sampling(cloud, 32, 5);
  REQUIRE(sel.size() == 32);
  CHECK(sel[0] == 5);
  check_fps_greedy(cloud.points, sel);

  SUBCASE("every prefix is the same greedy run") {
    const std::vector<int> longer = farthest_point_sampling(cloud, 64, 5);
    for (int i = 0; i < 32; ++i) CHECK(longer[i] == sel[i]);
  }
  SUBCASE("n = cloud size is a permutation") {
    const std::vector<int> all = farthest_point_sampling(cloud, cloud.size(), 0);
    std::vector<int> sorted = all;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == static_cast<int>(i));
  }
}

TEST_CASE("farthest point sampling tie goes to the lower index") {
  // from the middle of {0,1,2} both neighbours are at distance 1
  const std::vector<Point3> pts = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  const std::vector<int> sel = farthest_point_sampling(pts, 3, 1);
  CHECK(sel == std::vector<int>{1, 0, 2});
}

TEST_CASE("farthest point sampling rejects bad arguments") {
  const std::vector<Point3> pts = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS((void)farthest_point_sampling(pts, 3, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)farthest_point_sampling(pts, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)farthest_point_sampling(pts, 1, 2), std::invalid_argument);
}

TEST_CASE("covariance eigen decomposition on a hand-built scatter") {
  // scatter = diag(2, 8, 18), mean = 0
  const std::vector<Point3> nb = {{1, 0, 0},  {-1, 0, 0}, {0, 2, 0},
                                  {0, -2, 0}, {0, 0, 3},  {0, 0, -3}};
  const EigenFrame f = covariance_eigen(nb);
  CHECK(f.mean.norm() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(f.eigenvalues[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(f.eigenvalues[1] == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(f.eigenvalues[2] == doctest::Approx(18.0).epsilon(1e-12));
  // sign convention: dominant component positive
  CHECK(f.eigenvectors[0].x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.eigenvectors[1].y == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.eigenvectors[2].z == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("covariance eigen reconstruction and orthonormality") {
  const PointCloud cloud = testutil::box_cloud(40, 11);
  const EigenFrame f = covariance_eigen(cloud.points);

  CHECK(f.eigenvalues[0] <= f.eigenvalues[1]);
  CHECK(f.eigenvalues[1] <= f.eigenvalues[2]);
  for (int i = 0; i < 3; ++i) {
    CHECK(f.eigenvalues[i] >= 0.0);
    CHECK(f.eigenvectors[i].norm() == doctest::Approx(1.0).epsilon(1e-12));
    for (int j = i + 1; j < 3; ++j)
      CHECK(std::abs(dot(f.eigenvectors[i], f.eigenvectors[j])) < 1e-12);
  }

  // scatter == sum_i lambda_i v_i v_i^T
  Point3 mu;
  for (const Point3& p : cloud.points) mu += p;
  mu = mu / static_cast<double>(cloud.size());
  double scatter[3][3] = {};
  for (const Point3& p : cloud.points) {
    const Vec3 d = p - mu;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) scatter[a][b] += d[a] * d[b];
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      double rec = 0.0;
      for (int i = 0; i < 3; ++i)
        rec += f.eigenvalues[i] * f.eigenvectors[i][a] * f.eigenvectors[i][b];
      CHECK(rec == doctest::Approx(scatter[a][b]).epsilon(1e-9));
    }
  }
}

TEST_CASE("covariance eigen flags a planar neighborhood") {
  const PointCloud plane = testutil::grid_cloud(5, 5, 0.1);
  const EigenFrame f = covariance_eigen(plane.points);
  CHECK(f.eigenvalues[0] == 0.0);  // clamped
  CHECK(std::abs(f.eigenvectors[0].z) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS((void)covariance_eigen(std::vector<Point3>{{0, 0, 0}, {1, 1, 1}}),
                  std::invalid_argument);
}

TEST_CASE("ray origins from a flat cloud stay in the plane") {
  const PointCloud plane = testutil::grid_cloud(16, 16, 0.1);
  Rng rng(4, "origins");
  const std::vector<Point3> origins = sample_ray_origins(plane, 32, rng);
  REQUIRE(origins.size() == 32);
  // the plane-normal eigenvalue clamps to zero, so no offset leaves the plane
  for (const Point3& o : origins) CHECK(o.z == 0.0);
}

TEST_CASE("ray origins are deterministic and mode-dependent") {
  const PointCloud cloud = testutil::sphere_cloud(300, 21);

  Rng r1(9, "o"), r2(9, "o");
  const auto a = sample_ray_origins(cloud, 40, r1);
  const auto b = sample_ray_origins(cloud, 40, r2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  Rng r3(9, "o");
  const auto c = sample_ray_origins(cloud, 40, r3, 16, OriginMode::eigen_frame);
  REQUIRE(c.size() == 40);
  bool any_differs = false;
  for (std::size_t i = 0; i < c.size(); ++i) any_differs |= !(c[i] == a[i]);
  CHECK(any_differs);

  Rng r4(9, "o");
  CHECK_THROWS_AS((void)sample_ray_origins(cloud, 301, r4), std::invalid_argument);
  PointCloud tiny;
  tiny.points = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS((void)sample_ray_origins(tiny, 1, r4), std::invalid_argument);
}

TEST_CASE("query samples are normalized to the unit ball") {
  const PointCloud cloud = testutil::box_cloud(120, 6);
  const std::vector<Point3> origins = {{0, 0, 2}, {2, 0, 0}};
  Rng rng(6, "q");
  for (int i = 0; i < 10; ++i) {
    const Point3 q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const QuerySample qs = build_query_sample(cloud, q, origins, 16);
    REQUIRE(qs.patch.points.size() == 16);
    CHECK(qs.ray.direction.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(qs.patch.scale > 0.0);
    double max_norm = 0.0;
    for (const Point3& p : qs.patch.points) max_norm = std::max(max_norm, p.norm());
    CHECK(max_norm == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("query sample picks the nearest origin, ties by index") {
  PointCloud cloud = testutil::box_cloud(40, 8, 0.25);
  const std::vector<Point3> origins = {{1, 0, 0}, {-1, 0, 0}};
  const QuerySample qs = build_query_sample(cloud, {0, 0.5, 0}, origins, 8);
  CHECK(qs.ray.origin == origins[0]);
  CHECK(qs.patch.origin_world == origins[0]);

  const QuerySample near1 = build_query_sample(cloud, {-0.5, 0, 0}, origins, 8);
  CHECK(near1.ray.origin == origins[1]);
}

TEST_CASE("query sample is translation invariant on exact coordinates") {
  // dyadic coordinates and integer shifts make every fp op exact
  PointCloud cloud;
  Rng rng(13, "dyadic");
  for (int i = 0; i < 80; ++i) {
    auto dy = [&] { return std::ldexp(static_cast<double>(rng.index(2049)) - 1024.0, -10); };
    cloud.points.push_back({dy(), dy(), dy()});
  }
  const std::vector<Point3> origins = {{2, 0, 0}, {0, 0, -3}};
  const Point3 q{0.25, -0.125, 0.5};
  const QuerySample base = build_query_sample(cloud, q, origins, 16);

  const Vec3 shift{5, -17, 2};
  PointCloud moved = cloud;
  for (Point3& p : moved.points) p += shift;
  std::vector<Point3> moved_origins = origins;
  for (Point3& o : moved_origins) o += shift;
  const QuerySample qs = build_query_sample(moved, q + shift, moved_origins, 16);

  CHECK(testutil::bits_equal(qs.patch.scale, base.patch.scale));
  for (int i = 0; i < 16; ++i) CHECK(qs.patch.points[i] == base.patch.points[i]);
  CHECK(qs.ray.direction == base.ray.direction);
}

TEST_CASE("query sample scale equivariance under power-of-two scaling") {
  const PointCloud cloud = testutil::box_cloud(90, 17);
  const std::vector<Point3> origins = {{0, 0, 1.5}};
  const Point3 q{0.3, 0.1, -0.2};
  const QuerySample base = build_query_sample(cloud, q, origins, 16);

  const double s = 4.0;
  PointCloud scaled = cloud;
  for (Point3& p : scaled.points) p *= s;
  const QuerySample qs = build_query_sample(scaled, q * s, {origins[0] * s}, 16);

  CHECK(testutil::bits_equal(qs.patch.scale, base.patch.scale * s));
  for (int i = 0; i < 16; ++i) CHECK(qs.patch.points[i] == base.patch.points[i]);
  CHECK(qs.ray.direction == base.ray.direction);
}

TEST_CASE("query sample can exclude the query point from its own patch") {
  const PointCloud grid = testutil::grid_cloud(8, 8, 0.1);
  const Point3 q = grid.points[27];
  const std::vector<Point3> origins = {{0, 0, 1}};

  const QuerySample with = build_query_sample(grid, q, origins, 8, false);
  double dmin = 1e300;
  for (const Point3& p : with.patch.points)
    dmin = std::min(dmin, (with.patch.origin_world + p * with.patch.scale - q).norm());
  CHECK(dmin < 1e-12);

  const QuerySample without = build_query_sample(grid, q, origins, 8, true);
  dmin = 1e300;
  for (const Point3& p : without.patch.points)
    dmin = std::min(dmin, (without.patch.origin_world + p * without.patch.scale - q).norm());
  CHECK(dmin > 0.05);
}

TEST_CASE("query sample rejects degenerate geometry") {
  PointCloud pile;
  for (int i = 0; i < 8; ++i) pile.points.push_back({1, 1, 1});
  // query on its origin
  CHECK_THROWS_AS((void)build_query_sample(pile, {2, 0, 0}, {{2, 0, 0}}, 8), std::domain_error);
  // patch collapses onto the origin
  CHECK_THROWS_AS((void)build_query_sample(pile, {2, 1, 1}, {{1, 1, 1}}, 8), std::domain_error);
  // k larger than the cloud
  CHECK_THROWS_AS((void)build_query_sample(pile, {2, 1, 1}, {{0, 0, 0}}, 9),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)build_query_sample(pile, {2, 1, 1}, {}, 8), std::invalid_argument);
}

TEST_CASE("random rotations are proper isometries") {
  Rng rng(31, "rot");
  for (int t = 0; t < 20; ++t) {
    const Mat3 r = random_rotation_matrix(rng);
    const Mat3 rt = r.transposed();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double e = 0.0;
        for (int k = 0; k < 3; ++k) e += rt.m[3 * i + k] * r.m[3 * k + j];
        CHECK(e == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
      }
    }
    CHECK(r.det() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rotating a sample preserves its ray geometry") {
  const PointCloud cloud = testutil::sphere_cloud(80, 5);
  const QuerySample qs = build_query_sample(cloud, {0.2, 0.3, 0.4}, {{0, 0, 0}}, 16);

  Rng rng(77, "rot");
  const QuerySample rot = random_rotation(qs, rng);
  CHECK(rot.patch.scale == qs.patch.scale);
  CHECK(rot.patch.origin_world == qs.patch.origin_world);
  CHECK(rot.ray.direction.norm() == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 0; i < 16; ++i) {
    CHECK(rot.patch.points[i].norm() == doctest::Approx(qs.patch.points[i].norm()).epsilon(1e-9));
    for (int j = i + 1; j < 16; ++j) {
      const double before = (qs.patch.points[i] - qs.patch.points[j]).norm();
      const double after = (rot.patch.points[i] - rot.patch.points[j]).norm();
      CHECK(after == doctest::Approx(before).epsilon(1e-9));
    }
    // depth along the ray of each patch point is a rotation invariant
    const double before = dot(qs.patch.points[i], qs.ray.direction);
    const double after = dot(rot.patch.points[i], rot.ray.direction);
    CHECK(after == doctest::Approx(before).epsilon(1e-9));
  }

  const Mat3 id = Mat3::identity();
  const QuerySample same = rotate_sample(qs, id);
  for (int i = 0; i < 16; ++i) CHECK(same.patch.points[i] == qs.patch.points[i]);
  CHECK(same.ray.direction == qs.ray.direction);
}

TEST_CASE("gaussian perturbation has the requested scale") {
  const PointCloud cloud = testutil::box_cloud(4000, 2);
  Rng rng(2, "noise");
  const double gamma = 0.01;
  const PointCloud noisy = gaussian_perturb(cloud, gamma, rng);
  REQUIRE(noisy.size() == cloud.size());

  double sum = 0.0, sum2 = 0.0;
  const std::size_t m = cloud.size() * 3;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 d = noisy.points[i] - cloud.points[i];
    for (int a = 0; a < 3; ++a) {
      sum += d[a];
      sum2 += d[a] * d[a];
    }
  }
  const double var = sum2 / m - (sum / m) * (sum / m);
  CHECK(std::sqrt(var) == doctest::Approx(gamma).epsilon(0.10));

  Rng rng2(2, "noise");
  const PointCloud same = gaussian_perturb(cloud, 0.0, rng2);
  for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(same.points[i] == cloud.points[i]);
  CHECK_THROWS_AS((void)gaussian_perturb(cloud, -0.1, rng2), std::invalid_argument);
}
