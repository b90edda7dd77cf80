#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "puray/network.hpp"
#include "puray/sampling.hpp"
#include "test_util.hpp"

using namespace puray;

namespace {

Patch make_patch(int k, std::uint64_t seed) {
  const PointCloud cloud = testutil::sphere_cloud(64, seed);
  const QuerySample qs = build_query_sample(cloud, cloud.points[0] * 1.02, {{0, 0, 0}}, k);
  return qs.patch;
}

std::size_t closed_form_count(const NetConfig& cfg) {
  const std::size_t c = cfg.c, h = cfg.hidden, d = cfg.depth;
  auto lin = [](std::size_t out, std::size_t in) { return out * (in + 1); };
  return lin(c, 3) + lin(c, c)                                  // point encoder
         + 3 * lin(c, c) + lin(c, 3)                            // self-attention
         + 2 * lin(c, c) + lin(c, 3)                            // cross-attention
         + lin(h, c) + (d - 1) * lin(h, h) + lin(3, h)          // nearest-point head
         + lin(h, c + 3) + (d - 1) * lin(h, h) + lin(1, h);     // offset head
}

void zero_tensor(ad::ParamStore& ps, const std::string& name) {
  ad::Tensor& t = ps.at(name);
  std::fill(t.data.begin(), t.data.end(), 0.0);
}

}  // namespace

TEST_CASE("parameter count matches the closed form") {
  const NetConfig cfg;
  CHECK(network_param_count(cfg) == 13284);
  CHECK(closed_form_count(cfg) == 13284);

  ad::ParamStore ps = make_network_params(cfg, 1);
  CHECK(ps.total_count() == 13284);

  NetConfig small;
  small.c = 16;
  small.hidden = 8;
  small.depth = 2;
  CHECK(make_network_params(small, 1).total_count() == network_param_count(small));
  CHECK(network_param_count(small) == closed_form_count(small));
}

TEST_CASE("initialization is seeded and respects the fan-in bound") {
  const NetConfig cfg;
  const ad::ParamStore a = make_network_params(cfg, 7);
  const ad::ParamStore b = make_network_params(cfg, 7);
  const ad::ParamStore c = make_network_params(cfg, 8);

  REQUIRE(a.size() == b.size());
  bool any_differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.name(i) == b.name(i));
    REQUIRE(a.tensor(i).data.size() == b.tensor(i).data.size());
    for (std::size_t j = 0; j < a.tensor(i).data.size(); ++j) {
      CHECK(testutil::bits_equal(a.tensor(i).data[j], b.tensor(i).data[j]));
      any_differs |= a.tensor(i).data[j] != c.tensor(i).data[j];
    }
  }
  CHECK(any_differs);

  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::string& name = a.name(i);
    // bias bounds follow the owning layer's input width
    const std::string wname =
        name.ends_with(".bias") ? name.substr(0, name.size() - 5) + ".weight" : name;
    const int fan_in = a.at(wname).shape[1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double v : a.tensor(i).data) {
      CHECK(v >= -bound);
      CHECK(v <= bound);
    }
  }
}

TEST_CASE("patch encoding is permutation equivariant bit for bit") {
  const NetConfig cfg;
  ad::ParamStore ps = make_network_params(cfg, 3);
  const Patch patch = make_patch(cfg.k, 5);
  const std::vector<double> base = encode_patch(ps, cfg, patch);
  REQUIRE(base.size() == static_cast<std::size_t>(cfg.k) * cfg.c);

  std::vector<int> perm(cfg.k);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 eng(99);
  for (int round = 0; round < 3; ++round) {
    std::shuffle(perm.begin(), perm.end(), eng);
    Patch shuffled = patch;
    for (int i = 0; i < cfg.k; ++i) shuffled.points[i] = patch.points[perm[i]];
    const std::vector<double> got = encode_patch(ps, cfg, shuffled);
    for (int i = 0; i < cfg.k; ++i)
      for (int ch = 0; ch < cfg.c; ++ch)
        CHECK(testutil::bits_equal(got[i * cfg.c + ch], base[perm[i] * cfg.c + ch]));
  }
}

TEST_CASE("march with zero steps reduces to the offset head") {
  NetConfig cfg;
  cfg.M = 0;
  ad::ParamStore ps = make_network_params(cfg, 11);
  const Patch patch = make_patch(cfg.k, 2);
  const Vec3 d = Vec3{0.3, -0.2, 0.93}.normalized();

  const MarchTrace tr = march(ps, cfg, patch, d);
  CHECK(tr.steps.empty());
  CHECK(tr.t_tilde == 0.0);
  CHECK(testutil::bits_equal(tr.t_hat, tr.eps));
  CHECK(tr.final_origin == Point3{0, 0, 0});
  CHECK_FALSE(tr.truncated);

  const std::vector<double> F_P = encode_patch(ps, cfg, patch);
  const std::vector<double> F0 = cross_attend(ps, cfg, F_P, patch, {0, 0, 0});
  CHECK(testutil::bits_equal(offset_head(ps, cfg, F0, d), tr.eps));
}

TEST_CASE("march trace is internally consistent") {
  const NetConfig cfg;
  ad::ParamStore ps = make_network_params(cfg, 13);
  const Patch patch = make_patch(cfg.k, 4);
  const Vec3 d = Vec3{0.1, 0.2, 0.97}.normalized();

  const MarchTrace tr = march(ps, cfg, patch, d);
  REQUIRE(!tr.steps.empty());
  CHECK(tr.steps.size() <= static_cast<std::size_t>(cfg.M));

  double cum = 0.0;
  for (const MarchStep& st : tr.steps) {
    CHECK(st.t >= 0.0);
    CHECK(st.t == doctest::Approx(st.nearest.norm()).epsilon(1e-15));
    // origin recorded before the step advances
    CHECK(st.origin.x == doctest::Approx(d.x * cum).epsilon(1e-12));
    CHECK(st.origin.y == doctest::Approx(d.y * cum).epsilon(1e-12));
    CHECK(st.origin.z == doctest::Approx(d.z * cum).epsilon(1e-12));
    cum += st.t;
    if (st.t > 0.0) {
      CHECK(st.n.norm() == doctest::Approx(1.0).epsilon(1e-12));
    } else {
      CHECK(st.n == Vec3{0, 0, 1});
    }
    REQUIRE(st.proj.size() == patch.points.size());
    REQUIRE(st.weights.size() == patch.points.size());
    for (std::size_t i = 0; i < patch.points.size(); ++i) {
      CHECK(st.proj[i] == doctest::Approx(dot(st.n, patch.points[i] - st.origin)).epsilon(1e-12));
      CHECK(st.weights[i] > 0.0);
      CHECK(st.weights[i] <= 1.0);
    }
  }
  CHECK(tr.t_tilde == doctest::Approx(cum).epsilon(1e-12));
  CHECK(testutil::bits_equal(tr.t_hat, tr.t_tilde + tr.eps));
  CHECK(tr.final_origin.x == doctest::Approx(d.x * tr.t_tilde).epsilon(1e-12));
  CHECK(tr.final_origin.z == doctest::Approx(d.z * tr.t_tilde).epsilon(1e-12));
}

TEST_CASE("march is bitwise invariant to patch permutation") {
  const NetConfig cfg;
  ad::ParamStore ps = make_network_params(cfg, 17);
  const Patch patch = make_patch(cfg.k, 6);
  const Vec3 d = Vec3{0.4, 0.4, 0.82}.normalized();
  const MarchTrace base = march(ps, cfg, patch, d);

  std::vector<int> perm(cfg.k);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 eng(5);
  for (int round = 0; round < 3; ++round) {
    std::shuffle(perm.begin(), perm.end(), eng);
    Patch shuffled = patch;
    for (int i = 0; i < cfg.k; ++i) shuffled.points[i] = patch.points[perm[i]];
    const MarchTrace got = march(ps, cfg, shuffled, d);
    CHECK(testutil::bits_equal(got.t_hat, base.t_hat));
    CHECK(testutil::bits_equal(got.t_tilde, base.t_tilde));
    CHECK(testutil::bits_equal(got.eps, base.eps));
    REQUIRE(got.steps.size() == base.steps.size());
    for (std::size_t m = 0; m < got.steps.size(); ++m)
      CHECK(testutil::bits_equal(got.steps[m].t, base.steps[m].t));
  }
}

TEST_CASE("marching truncates once the cumulative depth passes the bound") {
  NetConfig cfg;
  ad::ParamStore ps = make_network_params(cfg, 19);
  const Patch patch = make_patch(cfg.k, 8);
  const Vec3 d{0, 0, 1};

  // force a constant nearest-point prediction of norm 1.5
  zero_tensor(ps, "mlp_i.out.weight");
  ps.at("mlp_i.out.bias").data = {1.5, 0.0, 0.0};

  const MarchTrace tr = march(ps, cfg, patch, d);
  CHECK(tr.truncated);
  CHECK(tr.steps.size() == 2);  // 1.5, then 3.0 > 2.0
  CHECK(tr.t_tilde == 3.0);
  CHECK(tr.steps[0].t == 1.5);
  CHECK(tr.steps[1].t == 1.5);
  // the offset head still runs at the final origin
  CHECK(testutil::bits_equal(tr.t_hat, 3.0 + tr.eps));

  ps.at("mlp_i.out.bias").data = {9.0, 0.0, 0.0};
  const MarchTrace one = march(ps, cfg, patch, d);
  CHECK(one.truncated);
  CHECK(one.steps.size() == 1);
  CHECK(one.t_tilde == 9.0);
}

TEST_CASE("a zero nearest-point head yields a full zero-length march") {
  NetConfig cfg;
  ad::ParamStore ps = make_network_params(cfg, 23);
  zero_tensor(ps, "mlp_i.out.weight");
  zero_tensor(ps, "mlp_i.out.bias");
  const Patch patch = make_patch(cfg.k, 10);
  const Vec3 d{0, 0, 1};

  const MarchTrace tr = march(ps, cfg, patch, d);
  CHECK_FALSE(tr.truncated);
  CHECK(tr.steps.size() == static_cast<std::size_t>(cfg.M));
  CHECK(tr.t_tilde == 0.0);
  for (const MarchStep& st : tr.steps) {
    CHECK(st.t == 0.0);
    CHECK(st.n == Vec3{0, 0, 1});
    CHECK(st.origin == Point3{0, 0, 0});
  }
  CHECK(testutil::bits_equal(tr.t_hat, tr.eps));
}

TEST_CASE("plain single-step evaluation matches the assembled march") {
  NetConfig cfg;
  cfg.M = 1;
  ad::ParamStore ps = make_network_params(cfg, 29);
  const Patch patch = make_patch(cfg.k, 12);
  const Vec3 d = Vec3{-0.3, 0.1, 0.95}.normalized();

  const MarchTrace tr = march(ps, cfg, patch, d);
  REQUIRE(tr.steps.size() == 1);

  const std::vector<double> F_P = encode_patch(ps, cfg, patch);
  const std::vector<double> F1 = cross_attend(ps, cfg, F_P, patch, {0, 0, 0});
  const Vec3 xyz = udf_nearest(ps, cfg, F1);
  CHECK(testutil::bits_equal(xyz.x, tr.steps[0].nearest.x));
  CHECK(testutil::bits_equal(xyz.y, tr.steps[0].nearest.y));
  CHECK(testutil::bits_equal(xyz.z, tr.steps[0].nearest.z));
}

TEST_CASE("patch size must match the configured width") {
  const NetConfig cfg;
  ad::ParamStore ps = make_network_params(cfg, 31);
  Patch bad = make_patch(cfg.k, 3);
  bad.points.pop_back();
  CHECK_THROWS_AS((void)march(ps, cfg, bad, Vec3{0, 0, 1}), std::invalid_argument);
  CHECK_THROWS_AS((void)encode_patch(ps, cfg, bad), std::invalid_argument);
  const std::vector<double> short_f(cfg.c - 1, 0.0);
  CHECK_THROWS_AS((void)udf_nearest(ps, cfg, short_f), std::invalid_argument);
  CHECK_THROWS_AS((void)offset_head(ps, cfg, short_f, Vec3{0, 0, 1}), std::invalid_argument);
}

TEST_CASE("marching on an analytic sphere field converges radially") {
  const Point3 center{0, 0, 5};
  const double radius = 2.0;
  auto offset = [&](const Point3& o) {
    const Vec3 to_center = center - o;
    const double dist = to_center.norm();
    return to_center * (1.0 - radius / dist);
  };

  const MarchTrace tr = march_with_udf(offset, {0, 0, 1}, 6, 10.0);
  CHECK_FALSE(tr.truncated);
  CHECK(tr.steps.size() == 6);
  CHECK(tr.steps[0].t == 3.0);
  CHECK(tr.t_tilde == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(tr.t_hat == tr.t_tilde);
  CHECK(tr.eps == 0.0);
}

TEST_CASE("marching on an analytic plane never overshoots and converges") {
  // plane z = 1, ray at 45 degrees
  auto offset = [](const Point3& o) { return Vec3{0, 0, 1.0 - o.z}; };
  const Vec3 d = Vec3{1, 0, 1}.normalized();
  const double t_exact = std::sqrt(2.0);

  const MarchTrace tr = march_with_udf(offset, d, 6, 10.0);
  CHECK(std::abs(tr.t_tilde - t_exact) < 1e-3);
  double cum = 0.0;
  for (const MarchStep& st : tr.steps) {
    cum += st.t;
    CHECK(cum <= t_exact * (1.0 + 1e-12));
  }
}
