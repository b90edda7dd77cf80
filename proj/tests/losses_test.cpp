#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "puray/losses.hpp"
#include "puray/network.hpp"
#include "puray/sampling.hpp"
#include "test_util.hpp"

using namespace puray;

namespace {

MarchStep step_at(const Point3& o, const Vec3& n, double t) {
  MarchStep st;
  st.origin = o;
  st.n = n;
  st.t = t;
  st.nearest = n * t;
  return st;
}

MarchTrace trace_of(std::vector<MarchStep> steps, double eps = 0.0) {
  MarchTrace tr;
  tr.steps = std::move(steps);
  tr.eps = eps;
  for (const MarchStep& st : tr.steps) tr.t_tilde += st.t;
  tr.t_hat = tr.t_tilde + eps;
  return tr;
}

Vec3 any_perpendicular(const Vec3& n) {
  const Vec3 a = std::fabs(n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  return cross(n, a).normalized();
}

QuerySample make_sample(const NetConfig& cfg, std::uint64_t seed) {
  const PointCloud cloud = testutil::sphere_cloud(96, seed);
  return build_query_sample(cloud, cloud.points[1] * 1.03, {{0, 0, 0}}, cfg.k);
}

}  // namespace

TEST_CASE("projections report the signed heights and unsigned mean") {
  Patch patch;
  patch.points = {{1, 2, 3}, {4, 5, -3}};
  auto [proj, mu] = projections({0, 0, 0}, {0, 0, 1}, patch);
  REQUIRE(proj.size() == 2);
  CHECK(proj[0] == 3.0);
  CHECK(proj[1] == -3.0);
  CHECK(mu == 0.0);

  auto [proj2, mu2] = projections({0, 0, 1}, {0, 1, 0}, patch);
  CHECK(proj2[0] == 2.0);
  CHECK(proj2[1] == 5.0);
  CHECK(mu2 == 3.5);

  // the mean is folded in as a magnitude, so flipping the normal changes nothing
  auto [proj3, mu3] = projections({0, 0, 1}, {0, -1, 0}, patch);
  CHECK(proj3[0] == -2.0);
  CHECK(mu3 == 3.5);
}

TEST_CASE("a coplanar patch drives the tangential loss to zero") {
  Rng eng(41, "plane");
  for (int it = 0; it < 200; ++it) {
    const Vec3 n = testutil::random_unit(eng);
    const Point3 o{eng.uniform(-1, 1), eng.uniform(-1, 1), eng.uniform(-1, 1)};
    const Vec3 u = any_perpendicular(n);
    const Vec3 v = cross(n, u);
    Patch patch;
    for (int i = 0; i < 16; ++i)
      patch.points.push_back(o + u * eng.uniform(-1, 1) + v * eng.uniform(-1, 1));

    // the step origin sits on the plane itself; either orientation qualifies
    const Vec3 n_step = (it % 2 == 0) ? n : n * -1.0;
    const MarchTrace tr = trace_of({step_at(o, n_step, 0.5)});
    CHECK(loss_tan(tr, patch) < 1e-12);
  }
}

TEST_CASE("exact projections drive the marching loss to zero") {
  Rng eng(43, "ms");
  for (int it = 0; it < 200; ++it) {
    Patch patch;
    for (int i = 0; i < 8; ++i)
      patch.points.push_back({eng.uniform(1, 3), eng.uniform(-1, 1), eng.uniform(-1, 1)});
    const Point3 o{eng.uniform(-0.1, 0.1), eng.uniform(-0.1, 0.1), eng.uniform(-0.1, 0.1)};

    int ihat = 0;
    for (int i = 1; i < 8; ++i)
      if ((patch.points[i] - o).squared_norm() < (patch.points[ihat] - o).squared_norm())
        ihat = i;
    Vec3 n = testutil::random_unit(eng);
    if (dot(n, patch.points[ihat] - o) < 0.0) n = n * -1.0;
    const double t = dot(n, patch.points[ihat] - o);
    if (t == 0.0) continue;

    const MarchTrace tr = trace_of({step_at(o, n, t)});
    CHECK(loss_ms(tr, patch) == 0.0);
  }
}

TEST_CASE("nearest-point ties resolve to the lowest index") {
  Patch patch;
  patch.points = {{1, 0, 0}, {-1, 0, 0}, {0, 0, 2}};
  // both unit-distance points tie; index 0 wins, its projection is 1
  const MarchTrace tr = trace_of({step_at({0, 0, 0}, {1, 0, 0}, 1.0)});
  CHECK(loss_ms(tr, patch) == 0.0);
  const MarchTrace tr2 = trace_of({step_at({0, 0, 0}, {1, 0, 0}, 3.0)});
  CHECK(loss_ms(tr2, patch) == 2.0);
}

TEST_CASE("the offset penalty is one sided") {
  CHECK(loss_eps(0.5) == 0.0);
  CHECK(loss_eps(0.0) == 0.0);
  CHECK(loss_eps(-0.25) == 0.25);
  std::mt19937_64 eng(47);
  std::uniform_real_distribution<double> pos(0.0, 10.0);
  for (int i = 0; i < 100; ++i) CHECK(loss_eps(pos(eng)) == 0.0);
}

TEST_CASE("zero-length steps are masked but keep their slot in the average") {
  Patch patch;
  std::mt19937_64 eng(53);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  for (int i = 0; i < 6; ++i) patch.points.push_back({coord(eng), coord(eng), coord(eng) + 3.0});

  const MarchStep live = step_at({0.1, 0.0, 0.2}, Vec3{0.2, 0.1, 1.0}.normalized(), 0.7);
  const MarchTrace one = trace_of({live});
  const MarchTrace two = trace_of({step_at({0, 0, 0}, {0, 0, 1}, 0.0), live});

  CHECK(loss_ms(one, patch) > 0.0);
  CHECK(testutil::bits_equal(loss_ms(two, patch), loss_ms(one, patch) / 2.0));
  CHECK(testutil::bits_equal(loss_tan(two, patch), loss_tan(one, patch) / 2.0));

  const MarchTrace none = trace_of({});
  CHECK(loss_tan(none, patch) == 0.0);
  CHECK(loss_ms(none, patch) == 0.0);
}

TEST_CASE("batch totals follow the stated combination") {
  Patch patch;
  patch.points = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}};
  std::vector<MarchTrace> traces;
  traces.push_back(trace_of({step_at({0, 0, 0}, {0, 0, 1}, 0.4)}, 0.1));
  traces.push_back(trace_of({step_at({0.2, 0, 0}, {1, 0, 0}, 0.3)}, -0.2));
  const std::vector<Patch> patches{patch, patch};
  const std::vector<double> targets{0.6, 0.2};

  LossWeights w;
  w.w_ms = 0.25;
  w.w_tan = 0.75;
  const LossBreakdown out = loss_total(traces, patches, targets, w);

  const double d0 = traces[0].t_hat - 0.6;
  const double d1 = traces[1].t_hat - 0.2;
  CHECK(out.l_mae == doctest::Approx((std::fabs(d0) + std::fabs(d1)) / 2.0).epsilon(1e-15));
  CHECK(out.l_rmse == doctest::Approx(std::sqrt((d0 * d0 + d1 * d1) / 2.0)).epsilon(1e-15));
  CHECK(out.l_eps == doctest::Approx(0.1).epsilon(1e-15));  // only the negative offset counts
  CHECK(out.total ==
        doctest::Approx(out.l_mae + out.l_rmse + 0.25 * out.l_ms + 0.75 * out.l_tan + out.l_eps)
            .epsilon(1e-15));
  CHECK(out.finite());

  // squared error identity holds for any batch
  CHECK(out.l_rmse * out.l_rmse * 2.0 == doctest::Approx(d0 * d0 + d1 * d1).epsilon(1e-12));
}

TEST_CASE("a single-sample batch makes the two depth terms coincide") {
  Patch patch;
  patch.points = {{0, 0, 1}, {0, 1, 0}};
  const std::vector<MarchTrace> traces{trace_of({}, 0.37)};
  const std::vector<Patch> patches{patch};
  const std::vector<double> targets{0.9};
  const LossBreakdown out = loss_total(traces, patches, targets, {});
  CHECK(out.l_mae == doctest::Approx(std::fabs(0.37 - 0.9)).epsilon(1e-15));
  CHECK(out.l_rmse == doctest::Approx(out.l_mae).epsilon(1e-12));
  CHECK(out.l_rmse >= 0.0);
}

TEST_CASE("perfect predictions with clean offsets cost nothing") {
  Patch patch;
  patch.points = {{2, 0, 0}, {0, 2, 0}};
  std::vector<MarchTrace> traces;
  traces.push_back(trace_of({}, 0.5));
  traces.back().t_hat = 0.5;
  const std::vector<Patch> patches{patch};
  const std::vector<double> targets{0.5};
  const LossBreakdown out = loss_total(traces, patches, targets, {});
  CHECK(out.total == 0.0);
}

TEST_CASE("batch size mismatches are rejected") {
  Patch patch;
  patch.points = {{1, 0, 0}};
  const std::vector<MarchTrace> traces{trace_of({})};
  const std::vector<Patch> patches{patch, patch};
  const std::vector<double> targets{0.5};
  CHECK_THROWS_AS((void)loss_total(traces, patches, targets, {}), std::invalid_argument);
  CHECK_THROWS_AS((void)loss_total({}, {}, {}, LossWeights{}), std::invalid_argument);
}

TEST_CASE("the graph losses agree with the plain evaluation") {
  const NetConfig cfg;
  ad::ParamStore ps = make_network_params(cfg, 37);
  const LossWeights w;

  std::vector<QuerySample> samples;
  for (std::uint64_t s = 0; s < 3; ++s) samples.push_back(make_sample(cfg, 60 + s));
  const std::vector<double> targets{0.8, 1.1, 0.95};

  std::vector<MarchTrace> traces;
  std::vector<Patch> patches;
  ad::Tape tape;
  std::vector<MarchGraph> graphs;
  for (const QuerySample& qs : samples) {
    traces.push_back(march(ps, cfg, qs.patch, qs.ray.direction));
    patches.push_back(qs.patch);
    graphs.push_back(march_graph(tape, ps, cfg, qs.patch, qs.ray.direction));
  }

  const LossBreakdown plain = loss_total(traces, patches, targets, w);
  const BatchLossGraph graph = loss_total_graph(tape, graphs, targets, w);
  CHECK(graph.values.l_mae == doctest::Approx(plain.l_mae).epsilon(1e-12));
  CHECK(graph.values.l_rmse == doctest::Approx(plain.l_rmse).epsilon(1e-12));
  CHECK(graph.values.l_ms == doctest::Approx(plain.l_ms).epsilon(1e-12));
  CHECK(graph.values.l_tan == doctest::Approx(plain.l_tan).epsilon(1e-12));
  CHECK(graph.values.l_eps == doctest::Approx(plain.l_eps).epsilon(1e-12));
  CHECK(graph.values.total == doctest::Approx(plain.total).epsilon(1e-12));
}

TEST_CASE("per-sample seeding reproduces the whole-batch gradient") {
  const NetConfig cfg;
  ad::ParamStore ps = make_network_params(cfg, 41);
  LossWeights w;
  w.w_ms = 0.5;
  w.w_tan = 0.5;
  const std::size_t B = 2;

  std::vector<QuerySample> samples;
  for (std::uint64_t s = 0; s < B; ++s) samples.push_back(make_sample(cfg, 70 + s));
  const std::vector<double> targets{0.85, 1.2};

  // reference: one tape holding the whole batch
  ps.zero_grads();
  {
    ad::Tape tape;
    std::vector<MarchGraph> graphs;
    for (const QuerySample& qs : samples) {
      graphs.push_back(march_graph(tape, ps, cfg, qs.patch, qs.ray.direction));
    }
    const BatchLossGraph g = loss_total_graph(tape, graphs, targets, w);
    tape.backward(g.total);
  }
  std::vector<std::vector<double>> want;
  for (std::size_t i = 0; i < ps.size(); ++i) want.push_back(ps.tensor(i).grad);

  // candidate: forward pass for the batch statistics, then one seeded
  // backward per sample
  std::vector<double> preds(B);
  for (std::size_t i = 0; i < B; ++i) preds[i] = march(ps, cfg, samples[i].patch, samples[i].ray.direction).t_hat;
  double se = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double d = preds[i] - targets[i];
    se += d * d;
  }
  const double rmse = std::sqrt(se / static_cast<double>(B));

  ps.zero_grads();
  for (std::size_t i = 0; i < B; ++i) {
    ad::Tape tape;
    const MarchGraph mg = march_graph(tape, ps, cfg, samples[i].patch, samples[i].ray.direction);
    const SampleLossGraph s = sample_loss_graph(tape, mg);
    const double diff = tape.scalar(s.t_hat) - targets[i];
    const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    const double bn = static_cast<double>(B);
    const double seed_hat = (sgn + (rmse > 0.0 ? diff / rmse : 0.0)) / bn;
    const std::pair<ad::Var, double> seeds[] = {
        {s.t_hat, seed_hat}, {s.l_ms, w.w_ms / bn}, {s.l_tan, w.w_tan / bn}, {s.l_eps, 1.0 / bn}};
    tape.backward_multi(seeds);
  }

  for (std::size_t i = 0; i < ps.size(); ++i) {
    REQUIRE(ps.tensor(i).grad.size() == want[i].size());
    for (std::size_t j = 0; j < want[i].size(); ++j) {
      const double scale = std::max(1.0, std::fabs(want[i][j]));
      CHECK(std::fabs(ps.tensor(i).grad[j] - want[i][j]) / scale < 1e-9);
    }
  }
}
