#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "puray/kdtree.hpp"
#include "puray/losses.hpp"
#include "puray/metrics.hpp"
#include "puray/network.hpp"
#include "puray/rng.hpp"
#include "puray/sampling.hpp"

namespace {

using namespace puray;

PointCloud sphere_cloud(std::size_t n, std::uint64_t seed) {
  PointCloud cloud;
  Rng rng(seed, "bench");
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 v = rng.normal3();
    cloud.points.push_back(Point3{0, 0, 0} + v / v.norm());
  }
  return cloud;
}

void BM_KdTreeBuild(benchmark::State& state) {
  const PointCloud cloud = sphere_cloud(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    KdTree tree(cloud.points);
    benchmark::DoNotOptimize(tree.size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KdTreeBuild)->Arg(1024)->Arg(4096)->Arg(16384);

void BM_KnnQuery(benchmark::State& state) {
  const PointCloud cloud = sphere_cloud(16384, 2);
  const KdTree tree(cloud.points);
  std::vector<KdTree::Hit> hits;
  std::size_t i = 0;
  for (auto _ : state) {
    tree.knn(cloud.points[i], static_cast<int>(state.range(0)), false, hits);
    benchmark::DoNotOptimize(hits.data());
    i = (i + 1) % cloud.size();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_KnnQuery)->Arg(1)->Arg(16)->Arg(64);

void BM_FarthestPointSampling(benchmark::State& state) {
  const PointCloud cloud = sphere_cloud(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    auto idx = farthest_point_sampling(cloud.points, 128, 0);
    benchmark::DoNotOptimize(idx.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FarthestPointSampling)->Arg(1024)->Arg(4096);

QuerySample bench_sample(const PointCloud& cloud, int k) {
  const Point3 q = cloud.points[7] * 1.05;
  return build_query_sample(cloud, q, {Point3{0, 0, 0}}, k);
}

void BM_MarchForward(benchmark::State& state) {
  NetConfig net;
  net.M = static_cast<int>(state.range(0));
  ad::ParamStore params = make_network_params(net, 5);
  const PointCloud cloud = sphere_cloud(1024, 4);
  const QuerySample qs = bench_sample(cloud, net.k);
  for (auto _ : state) {
    const MarchTrace tr = march(params, net, qs.patch, qs.ray.direction);
    benchmark::DoNotOptimize(tr.t_hat);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_MarchForward)->Arg(0)->Arg(2)->Arg(6);

void BM_BatchBackward(benchmark::State& state) {
  NetConfig net;
  net.M = static_cast<int>(state.range(0));
  ad::ParamStore params = make_network_params(net, 6);
  const PointCloud cloud = sphere_cloud(1024, 7);
  Rng rng(8, "targets");
  std::vector<QuerySample> samples;
  std::vector<double> targets;
  for (int i = 0; i < 64; ++i) {
    const Point3 q = cloud.points[static_cast<std::size_t>(i)] * 1.05;
    samples.push_back(build_query_sample(cloud, q, {Point3{0, 0, 0}}, net.k));
    targets.push_back(rng.uniform(0.2, 1.0));
  }
  const LossWeights w{0.5, 0.5};
  for (auto _ : state) {
    ad::Tape tape;
    std::vector<MarchGraph> graphs;
    graphs.reserve(samples.size());
    for (const QuerySample& qs : samples)
      graphs.push_back(march_graph(tape, params, net, qs.patch, qs.ray.direction));
    const BatchLossGraph loss = loss_total_graph(tape, graphs, targets, w);
    params.zero_grads();
    tape.backward(loss.total);
    benchmark::DoNotOptimize(loss.values.total);
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_BatchBackward)->Arg(0)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_Chamfer(benchmark::State& state) {
  const PointCloud a = sphere_cloud(static_cast<std::size_t>(state.range(0)), 9);
  const PointCloud b = sphere_cloud(static_cast<std::size_t>(state.range(0)), 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(chamfer(a, b));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Chamfer)->Arg(2048)->Arg(8192)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
