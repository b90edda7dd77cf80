#include "puray/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace puray {

namespace {

int nearest_patch_index(const Point3& o_m, const Patch& patch) {
  int best = 0;
  double best_d2 = (patch.points[0] - o_m).squared_norm();
  for (std::size_t i = 1; i < patch.points.size(); ++i) {
    const double d2 = (patch.points[i] - o_m).squared_norm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

std::pair<std::vector<double>, double> projections(const Point3& o_m, const Vec3& n_m,
                                                   const Patch& patch) {
  std::vector<double> proj(patch.points.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < patch.points.size(); ++i) {
    proj[i] = dot(n_m, patch.points[i] - o_m);
    sum += proj[i];
  }
  const double mu = std::fabs(sum / static_cast<double>(patch.points.size()));
  return {std::move(proj), mu};
}

double loss_tan(const MarchTrace& trace, const Patch& patch) {
  if (trace.steps.empty()) return 0.0;
  const std::size_t k = patch.points.size();
  double acc = 0.0;
  for (const MarchStep& st : trace.steps) {
    if (st.t == 0.0) continue;
    auto [proj, mu] = projections(st.origin, st.n, patch);
    double d2_sum = 0.0;
    std::vector<double> d2(k);
    for (std::size_t i = 0; i < k; ++i) {
      d2[i] = (patch.points[i] - st.origin).squared_norm();
      d2_sum += d2[i];
    }
    const double mean_d2 = d2_sum / static_cast<double>(k);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double w = mean_d2 > 0.0 ? std::exp(-d2[i] / (2.0 * mean_d2)) : 1.0;
      const double r = (proj[i] - mu) * w;
      num += r * r;
      den += w;
    }
    acc += std::sqrt(num / den);
  }
  return acc / static_cast<double>(trace.steps.size());
}

double loss_ms(const MarchTrace& trace, const Patch& patch) {
  if (trace.steps.empty()) return 0.0;
  double acc = 0.0;
  for (const MarchStep& st : trace.steps) {
    if (st.t == 0.0) continue;
    const int ihat = nearest_patch_index(st.origin, patch);
    const double proj_hat = dot(st.n, patch.points[ihat] - st.origin);
    acc += std::fabs(st.t - proj_hat);
  }
  return acc / static_cast<double>(trace.steps.size());
}

double loss_eps(double eps) { return eps < 0.0 ? -eps : 0.0; }

LossBreakdown loss_total(std::span<const MarchTrace> traces, std::span<const Patch> patches,
                         std::span<const double> targets, const LossWeights& w) {
  const std::size_t B = traces.size();
  if (B == 0 || patches.size() != B || targets.size() != B)
    throw std::invalid_argument("loss_total: batch size mismatch");
  LossBreakdown out;
  double se = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double diff = traces[i].t_hat - targets[i];
    out.l_mae += std::fabs(diff);
    se += diff * diff;
    out.l_ms += loss_ms(traces[i], patches[i]);
    out.l_tan += loss_tan(traces[i], patches[i]);
    out.l_eps += loss_eps(traces[i].eps);
  }
  const double bn = static_cast<double>(B);
  out.l_mae /= bn;
  out.l_rmse = std::sqrt(se / bn);
  out.l_ms /= bn;
  out.l_tan /= bn;
  out.l_eps /= bn;
  out.total = out.l_mae + out.l_rmse + w.w_ms * out.l_ms + w.w_tan * out.l_tan + out.l_eps;
  return out;
}

SampleLossGraph sample_loss_graph(ad::Tape& tape, const MarchGraph& graph) {
  using ad::Var;
  const int k = tape.shape(graph.patch.P).d[0];
  SampleLossGraph out;
  out.t_hat = graph.t_hat;
  out.l_eps = tape.relu(tape.neg(graph.eps));

  Var ms_sum{}, tan_sum{};
  bool any = false;
  for (const MarchGraphStep& st : graph.steps) {
    if (tape.scalar(st.t) == 0.0) continue;  // default normal, masked
    Var n_col = tape.reshape(st.n, ad::make_shape({3, 1}));
    Var proj = tape.reshape(tape.matmul(st.rel, n_col), ad::make_shape({k}));
    Var mu = tape.abs(tape.mean_all(proj));
    Var d2 = tape.sum_last(tape.mul(st.rel, st.rel));
    Var wgt = tape.exp(tape.neg(tape.div(d2, tape.scale(tape.mean_all(d2), 2.0))));
    Var resid = tape.mul(tape.sub(proj, mu), wgt);
    Var step_tan =
        tape.sqrt(tape.div(tape.sum_all(tape.mul(resid, resid)), tape.sum_all(wgt)));

    // select with the same sequential arithmetic as the plain path so near
    // ties resolve identically; no gradient flows through the choice
    auto relv = tape.value(st.rel);
    int ihat = 0;
    double best_d2 = 0.0;
    for (int i = 0; i < k; ++i) {
      const double* r = &relv[3 * static_cast<std::size_t>(i)];
      const double d2p = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
      if (i == 0 || d2p < best_d2) {
        best_d2 = d2p;
        ihat = i;
      }
    }
    const int rows[1] = {ihat};
    Var proj_hat = tape.gather_rows(proj, rows);
    Var step_ms = tape.abs(tape.sub(st.t, proj_hat));

    ms_sum = any ? tape.add(ms_sum, step_ms) : step_ms;
    tan_sum = any ? tape.add(tan_sum, step_tan) : step_tan;
    any = true;
  }
  if (any) {
    const double inv = 1.0 / static_cast<double>(graph.steps.size());
    out.l_ms = tape.scale(ms_sum, inv);
    out.l_tan = tape.scale(tan_sum, inv);
  } else {
    out.l_ms = tape.scalar_const(0.0);
    out.l_tan = tape.scalar_const(0.0);
  }
  return out;
}

BatchLossGraph loss_total_graph(ad::Tape& tape, std::span<const MarchGraph> graphs,
                                std::span<const double> targets, const LossWeights& w) {
  using ad::Var;
  const std::size_t B = graphs.size();
  if (B == 0 || targets.size() != B)
    throw std::invalid_argument("loss_total_graph: batch size mismatch");

  Var preds{}, ms{}, tan{}, eps{};
  for (std::size_t i = 0; i < B; ++i) {
    SampleLossGraph s = sample_loss_graph(tape, graphs[i]);
    preds = i ? tape.concat_last(preds, s.t_hat) : s.t_hat;
    ms = i ? tape.concat_last(ms, s.l_ms) : s.l_ms;
    tan = i ? tape.concat_last(tan, s.l_tan) : s.l_tan;
    eps = i ? tape.concat_last(eps, s.l_eps) : s.l_eps;
  }
  Var tgt = tape.constant(ad::make_shape({static_cast<int>(B)}), targets);
  Var diff = tape.sub(preds, tgt);
  Var l_mae = tape.mean_all(tape.abs(diff));
  Var l_rmse = tape.sqrt(tape.mean_all(tape.mul(diff, diff)));
  Var l_ms = tape.mean_all(ms);
  Var l_tan = tape.mean_all(tan);
  Var l_eps = tape.mean_all(eps);

  BatchLossGraph out;
  out.total = tape.add(
      tape.add(l_mae, l_rmse),
      tape.add(tape.add(tape.scale(l_ms, w.w_ms), tape.scale(l_tan, w.w_tan)), l_eps));
  out.values.l_mae = tape.scalar(l_mae);
  out.values.l_rmse = tape.scalar(l_rmse);
  out.values.l_ms = tape.scalar(l_ms);
  out.values.l_tan = tape.scalar(l_tan);
  out.values.l_eps = tape.scalar(l_eps);
  out.values.total = tape.scalar(out.total);
  return out;
}

}  // namespace puray
