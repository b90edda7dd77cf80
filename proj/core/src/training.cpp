#include "puray/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "puray/kdtree.hpp"
#include "puray/rng.hpp"

namespace puray {

namespace {

void try_add_sample(QuerySet& out, const KdTree& tree, const Point3& query, int k,
                    bool exclude_query) {
  QuerySample qs;
  try {
    qs = build_query_sample(tree, query, out.origins, k, exclude_query);
  } catch (const std::domain_error&) {
    ++out.skipped_coincident;
    return;
  }
  const double target = (query - qs.patch.origin_world).norm() / qs.patch.scale;
  if (target > 1.0) {
    ++out.skipped_out_of_range;
    return;
  }
  out.samples.push_back({std::move(qs), target});
}

}  // namespace

QuerySet make_queries_supervised(const PointCloud& S, const PointCloud& GT,
                                 const std::vector<Point3>& origins, int k) {
  QuerySet out;
  out.origins = origins;
  KdTree tree(S.points);
  for (const Point3& q : GT.points) try_add_sample(out, tree, q, k, false);
  return out;
}

QuerySet make_queries_selfsup(const PointCloud& S, const std::vector<Point3>& origins, int k,
                              bool include_query_in_patch) {
  QuerySet out;
  out.origins = origins;
  KdTree tree(S.points);
  for (const Point3& q : S.points) try_add_sample(out, tree, q, k, !include_query_in_patch);
  return out;
}

std::string train_log_csv(const std::vector<EpochRow>& rows) {
  std::string out = "epoch,lr,l_mae,l_rmse,l_ms,l_tan,l_eps,total,val_mae,val_rmse\n";
  char buf[320];
  for (const EpochRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch,
                  r.lr, r.l_mae, r.l_rmse, r.l_ms, r.l_tan, r.l_eps, r.total, r.val_mae,
                  r.val_rmse);
    out += buf;
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const QuerySet& data, const CheckpointHook& hook) {
  if (data.samples.empty()) throw std::invalid_argument("train: empty query set");
  if (cfg.epochs < 0) throw std::invalid_argument("train: negative epoch count");
  for (const TrainSample& ts : data.samples)
    if (static_cast<int>(ts.qs.patch.points.size()) != cfg.net.k)
      throw std::invalid_argument("train: sample patch size does not match net.k");

  TrainResult res;
  res.params = make_network_params(cfg.net, cfg.seed);
  ad::AdamConfig acfg;
  acfg.lr0 = cfg.lr0;
  acfg.decay = cfg.lr_decay;
  ad::AdamState adam(res.params, acfg);

  const std::size_t n = data.samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  {
    Rng split_rng(cfg.seed, "split");
    std::shuffle(order.begin(), order.end(), split_rng.engine());
  }
  std::size_t val_n = static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(n));
  if (val_n >= n) val_n = n - 1;
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + val_n);
  const std::vector<std::size_t> train_idx(order.begin() + val_n, order.end());
  const std::size_t tn = train_idx.size();
  // Batch size keys off the full query count, validation split included.
  const std::size_t batch = std::max<std::size_t>(1, n / 64);

  ad::Tape tape;
  struct Fwd {
    double t_hat, ms, tan, eps;
  };
  auto forward_sample = [&](const QuerySample& qs) -> Fwd {
    tape.reset();
    MarchGraph g = march_graph(tape, res.params, cfg.net, qs.patch, qs.ray.direction);
    SampleLossGraph s = sample_loss_graph(tape, g);
    return {tape.scalar(s.t_hat), tape.scalar(s.l_ms), tape.scalar(s.l_tan),
            tape.scalar(s.l_eps)};
  };
  auto forward_t_hat = [&](const QuerySample& qs) -> double {
    tape.reset();
    return tape.scalar(march_graph(tape, res.params, cfg.net, qs.patch, qs.ray.direction).t_hat);
  };
  auto val_metrics = [&](EpochRow& row) {
    if (val_idx.empty()) {
      row.val_mae = row.val_rmse = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    double asum = 0.0, ssum = 0.0;
    for (std::size_t i : val_idx) {
      const double diff = forward_t_hat(data.samples[i].qs) - data.samples[i].target;
      asum += std::fabs(diff);
      ssum += diff * diff;
    }
    const double vn = static_cast<double>(val_idx.size());
    row.val_mae = asum / vn;
    row.val_rmse = std::sqrt(ssum / vn);
  };
  auto finish_row = [&](EpochRow& row, double abs_sum, double sq_sum, double ms_sum,
                        double tan_sum, double eps_sum) {
    const double d = static_cast<double>(tn);
    row.l_mae = abs_sum / d;
    row.l_rmse = std::sqrt(sq_sum / d);
    row.l_ms = ms_sum / d;
    row.l_tan = tan_sum / d;
    row.l_eps = eps_sum / d;
    row.total = row.l_mae + row.l_rmse + cfg.weights.w_ms * row.l_ms +
                cfg.weights.w_tan * row.l_tan + row.l_eps;
    val_metrics(row);
  };

  {
    EpochRow row;
    row.epoch = 0;
    row.lr = adam.lr();
    double a = 0, s = 0, m = 0, t = 0, e = 0;
    for (std::size_t i : train_idx) {
      const Fwd f = forward_sample(data.samples[i].qs);
      const double diff = f.t_hat - data.samples[i].target;
      a += std::fabs(diff);
      s += diff * diff;
      m += f.ms;
      t += f.tan;
      e += f.eps;
    }
    finish_row(row, a, s, m, t, e);
    res.log.push_back(row);
  }
  if (hook) hook(0, res.params, adam);

  ad::ParamStore good = res.params;
  int good_epoch = 0;
  std::vector<QuerySample> rotated(tn);
  std::vector<Fwd> p1;
  std::vector<std::size_t> perm(tn);
  std::iota(perm.begin(), perm.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rot_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)), "rot");
    for (std::size_t j = 0; j < tn; ++j)
      rotated[j] = random_rotation(data.samples[train_idx[j]].qs, rot_rng);
    {
      Rng shuf_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)), "shuffle");
      std::shuffle(perm.begin(), perm.end(), shuf_rng.engine());
    }

    const double lr_used = adam.lr();
    double e_abs = 0, e_sq = 0, e_ms = 0, e_tan = 0, e_eps = 0;
    bool aborted = false;
    for (std::size_t b0 = 0; b0 < tn && !aborted; b0 += batch) {
      const std::size_t bs = std::min(batch, tn - b0);
      const double bn = static_cast<double>(bs);
      p1.resize(bs);
      double mae = 0.0, se = 0.0, bms = 0.0, btan = 0.0, beps = 0.0;
      for (std::size_t j = 0; j < bs; ++j) {
        const std::size_t idx = perm[b0 + j];
        p1[j] = forward_sample(rotated[idx]);
        const double diff = p1[j].t_hat - data.samples[train_idx[idx]].target;
        mae += std::fabs(diff);
        se += diff * diff;
        bms += p1[j].ms;
        btan += p1[j].tan;
        beps += p1[j].eps;
      }
      e_abs += mae;
      e_sq += se;
      e_ms += bms;
      e_tan += btan;
      e_eps += beps;
      mae /= bn;
      const double rmse = std::sqrt(se / bn);
      const double total = mae + rmse + cfg.weights.w_ms * bms / bn +
                           cfg.weights.w_tan * btan / bn + beps / bn;
      if (!std::isfinite(total)) {
        aborted = true;
        break;
      }

      // Second pass rebuilds each sample's graph and seeds it with the batch
      // statistics, matching the gradients of the joint batch loss.
      res.params.zero_grads();
      for (std::size_t j = 0; j < bs; ++j) {
        const std::size_t idx = perm[b0 + j];
        tape.reset();
        MarchGraph g =
            march_graph(tape, res.params, cfg.net, rotated[idx].patch, rotated[idx].ray.direction);
        SampleLossGraph s = sample_loss_graph(tape, g);
        const double diff = p1[j].t_hat - data.samples[train_idx[idx]].target;
        const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        const double seed_t_hat = (sgn + (rmse > 0.0 ? diff / rmse : 0.0)) / bn;
        const std::pair<ad::Var, double> seeds[4] = {{s.t_hat, seed_t_hat},
                                                     {s.l_ms, cfg.weights.w_ms / bn},
                                                     {s.l_tan, cfg.weights.w_tan / bn},
                                                     {s.l_eps, 1.0 / bn}};
        tape.backward_multi(seeds);
      }
      adam.step();
    }

    if (aborted) {
      res.params = good;
      res.aborted_nan = true;
      break;
    }
    adam.epoch_decay();

    EpochRow row;
    row.epoch = epoch;
    row.lr = lr_used;
    finish_row(row, e_abs, e_sq, e_ms, e_tan, e_eps);
    res.log.push_back(row);
    if (hook) hook(epoch, res.params, adam);
    good = res.params;
    good_epoch = epoch;
  }

  res.last_epoch = good_epoch;
  return res;
}

}  // namespace puray
