#include "puray/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "puray/rng.hpp"

namespace puray {

namespace {

using ad::Tape;
using ad::Var;

void init_linear(ad::ParamStore& ps, Rng& rng, const std::string& name, int out, int in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  ad::Tensor& w = ps.add(name + ".weight", {out, in});
  for (double& x : w.data) x = rng.uniform(-bound, bound);
  ad::Tensor& b = ps.add(name + ".bias", {out});
  for (double& x : b.data) x = rng.uniform(-bound, bound);
}

Var linear_named(Tape& t, ad::ParamStore& ps, const std::string& name, Var x) {
  return t.linear(x, t.param(ps.at(name + ".weight")), t.param(ps.at(name + ".bias")));
}

// Shared point encoder, applied to patch rows and to marching origins alike.
Var mlp_f(Tape& t, ad::ParamStore& ps, Var x) {
  Var h = t.relu(linear_named(t, ps, "mlp_f.l1", x));
  return linear_named(t, ps, "mlp_f.l2", h);
}

Var mlp_head(Tape& t, ad::ParamStore& ps, const std::string& prefix, int depth, Var x) {
  Var h = x;
  for (int i = 1; i <= depth; ++i)
    h = t.relu(linear_named(t, ps, prefix + ".l" + std::to_string(i), h));
  return linear_named(t, ps, prefix + ".out", h);
}

struct CrossAttendOut {
  Var F;    // (1,c)
  Var rel;  // (k,3)
};

CrossAttendOut cross_attend_at(Tape& t, ad::ParamStore& ps, const PatchGraph& pg, Var origin) {
  Var q = mlp_f(t, ps, origin);
  Var rel = t.sub(pg.P, t.reshape(origin, ad::make_shape({3})));
  Var delta = linear_named(t, ps, "ca.pos", rel);
  Var f = t.vector_attention(q, pg.Kc, pg.Vc, delta);
  return {f, rel};
}

void check_patch(const NetConfig& cfg, const Patch& patch) {
  if (static_cast<int>(patch.points.size()) != cfg.k)
    throw std::invalid_argument("march: patch size does not match configured k");
}

}  // namespace

ad::ParamStore make_network_params(const NetConfig& cfg, std::uint64_t seed) {
  ad::ParamStore ps;
  Rng rng(seed, "init");
  const int c = cfg.c, h = cfg.hidden;
  init_linear(ps, rng, "mlp_f.l1", c, 3);
  init_linear(ps, rng, "mlp_f.l2", c, c);
  init_linear(ps, rng, "sa.query", c, c);
  init_linear(ps, rng, "sa.key", c, c);
  init_linear(ps, rng, "sa.value", c, c);
  init_linear(ps, rng, "sa.pos", c, 3);
  init_linear(ps, rng, "ca.key", c, c);
  init_linear(ps, rng, "ca.value", c, c);
  init_linear(ps, rng, "ca.pos", c, 3);
  for (int i = 1; i <= cfg.depth; ++i)
    init_linear(ps, rng, "mlp_i.l" + std::to_string(i), h, i == 1 ? c : h);
  init_linear(ps, rng, "mlp_i.out", 3, h);
  for (int i = 1; i <= cfg.depth; ++i)
    init_linear(ps, rng, "mlp_eps.l" + std::to_string(i), h, i == 1 ? c + 3 : h);
  init_linear(ps, rng, "mlp_eps.out", 1, h);
  return ps;
}

std::size_t network_param_count(const NetConfig& cfg) {
  const std::size_t c = cfg.c, h = cfg.hidden, depth = cfg.depth;
  auto lin = [](std::size_t out, std::size_t in) { return out * in + out; };
  std::size_t n = lin(c, 3) + lin(c, c);                        // mlp_f
  n += 3 * lin(c, c) + lin(c, 3);                               // sa
  n += 2 * lin(c, c) + lin(c, 3);                               // ca
  n += lin(h, c) + (depth - 1) * lin(h, h) + lin(3, h);         // mlp_i
  n += lin(h, c + 3) + (depth - 1) * lin(h, h) + lin(1, h);     // mlp_eps
  return n;
}

PatchGraph encode_patch_graph(Tape& tape, ad::ParamStore& params, const NetConfig& cfg,
                              const Patch& patch) {
  check_patch(cfg, patch);
  const int k = cfg.k;
  thread_local std::vector<double> pd, rd;
  pd.resize(static_cast<std::size_t>(k) * 3);
  rd.resize(static_cast<std::size_t>(k) * k * 3);
  for (int i = 0; i < k; ++i) {
    pd[3 * i + 0] = patch.points[i].x;
    pd[3 * i + 1] = patch.points[i].y;
    pd[3 * i + 2] = patch.points[i].z;
  }
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const Vec3 r = patch.points[i] - patch.points[j];
      double* dst = rd.data() + (static_cast<std::size_t>(i) * k + j) * 3;
      dst[0] = r.x;
      dst[1] = r.y;
      dst[2] = r.z;
    }

  PatchGraph pg;
  pg.P = tape.constant(ad::make_shape({k, 3}), pd);
  Var f0 = mlp_f(tape, params, pg.P);
  Var q = linear_named(tape, params, "sa.query", f0);
  Var key = linear_named(tape, params, "sa.key", f0);
  Var val = linear_named(tape, params, "sa.value", f0);
  Var rel = tape.constant(ad::make_shape({k * k, 3}), rd);
  Var delta = tape.reshape(linear_named(tape, params, "sa.pos", rel),
                           ad::make_shape({k, k, cfg.c}));
  Var attended = tape.vector_attention(q, key, val, delta);
  pg.F_P = tape.add(attended, f0);
  pg.Kc = linear_named(tape, params, "ca.key", pg.F_P);
  pg.Vc = linear_named(tape, params, "ca.value", pg.F_P);
  return pg;
}

MarchGraph march_graph(Tape& tape, ad::ParamStore& params, const NetConfig& cfg,
                       const Patch& patch, const Vec3& d) {
  MarchGraph g;
  g.patch = encode_patch_graph(tape, params, cfg, patch);

  const double dir_data[3] = {d.x, d.y, d.z};
  const double zero3[3] = {0.0, 0.0, 0.0};
  Var dir = tape.constant(ad::make_shape({1, 3}), dir_data);
  Var origin = tape.constant(ad::make_shape({1, 3}), zero3);
  Var t_tilde = tape.scalar_const(0.0);

  g.steps.reserve(static_cast<std::size_t>(cfg.M));
  for (int m = 0; m < cfg.M; ++m) {
    CrossAttendOut ca = cross_attend_at(tape, params, g.patch, origin);
    Var xyz = mlp_head(tape, params, "mlp_i", cfg.depth, ca.F);
    Var t = tape.norm2_last(xyz);
    Var n = tape.unit_last_or_default(xyz, Vec3{0.0, 0.0, 1.0});
    g.steps.push_back({origin, ca.rel, xyz, t, n});
    t_tilde = tape.add(t_tilde, t);
    origin = tape.mul(dir, t_tilde);
    if (tape.scalar(t_tilde) > cfg.max_depth) {
      g.truncated = true;
      break;
    }
  }

  CrossAttendOut fin = cross_attend_at(tape, params, g.patch, origin);
  Var eps_in = tape.concat_last(fin.F, dir);
  Var eps = tape.reshape(mlp_head(tape, params, "mlp_eps", cfg.depth, eps_in),
                         ad::make_shape({1}));
  g.final_origin = origin;
  g.final_rel = fin.rel;
  g.t_tilde = t_tilde;
  g.eps = eps;
  g.t_hat = tape.add(t_tilde, eps);
  return g;
}

MarchTrace extract_trace(const Tape& tape, const MarchGraph& graph, const Patch& patch) {
  const std::size_t k = patch.points.size();
  MarchTrace tr;
  tr.truncated = graph.truncated;
  tr.t_tilde = tape.scalar(graph.t_tilde);
  tr.eps = tape.scalar(graph.eps);
  tr.t_hat = tape.scalar(graph.t_hat);
  auto fo = tape.value(graph.final_origin);
  tr.final_origin = {fo[0], fo[1], fo[2]};
  tr.steps.reserve(graph.steps.size());
  for (const auto& gs : graph.steps) {
    MarchStep st;
    auto ov = tape.value(gs.origin);
    auto xv = tape.value(gs.xyz);
    auto nv = tape.value(gs.n);
    st.origin = {ov[0], ov[1], ov[2]};
    st.nearest = {xv[0], xv[1], xv[2]};
    st.t = tape.scalar(gs.t);
    st.n = {nv[0], nv[1], nv[2]};
    st.proj.resize(k);
    st.weights.resize(k);
    double d2_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const Vec3 rel = patch.points[i] - st.origin;
      st.proj[i] = st.n.dot(rel);
      st.weights[i] = rel.squared_norm();  // d2 for now
      d2_sum += st.weights[i];
    }
    const double mean_d2 = d2_sum / static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i)
      st.weights[i] = mean_d2 > 0.0 ? std::exp(-st.weights[i] / (2.0 * mean_d2)) : 1.0;
    tr.steps.push_back(std::move(st));
  }
  return tr;
}

namespace {

Tape& plain_tape() {
  thread_local Tape tape;
  return tape;
}

}  // namespace

std::vector<double> encode_patch(ad::ParamStore& params, const NetConfig& cfg,
                                 const Patch& patch) {
  Tape& tape = plain_tape();
  tape.reset();
  PatchGraph pg = encode_patch_graph(tape, params, cfg, patch);
  auto v = tape.value(pg.F_P);
  return {v.begin(), v.end()};
}

std::vector<double> cross_attend(ad::ParamStore& params, const NetConfig& cfg,
                                 std::span<const double> F_P, const Patch& patch,
                                 const Point3& o_m) {
  if (F_P.size() != static_cast<std::size_t>(cfg.k) * cfg.c)
    throw std::invalid_argument("cross_attend: F_P size does not match k*c");
  check_patch(cfg, patch);
  Tape& tape = plain_tape();
  tape.reset();

  thread_local std::vector<double> pd;
  pd.resize(static_cast<std::size_t>(cfg.k) * 3);
  for (int i = 0; i < cfg.k; ++i) {
    pd[3 * i + 0] = patch.points[i].x;
    pd[3 * i + 1] = patch.points[i].y;
    pd[3 * i + 2] = patch.points[i].z;
  }
  PatchGraph pg;
  pg.P = tape.constant(ad::make_shape({cfg.k, 3}), pd);
  pg.F_P = tape.constant(ad::make_shape({cfg.k, cfg.c}), F_P);
  pg.Kc = linear_named(tape, params, "ca.key", pg.F_P);
  pg.Vc = linear_named(tape, params, "ca.value", pg.F_P);

  const double od[3] = {o_m.x, o_m.y, o_m.z};
  Var origin = tape.constant(ad::make_shape({1, 3}), od);
  CrossAttendOut out = cross_attend_at(tape, params, pg, origin);
  auto v = tape.value(out.F);
  return {v.begin(), v.end()};
}

Vec3 udf_nearest(ad::ParamStore& params, const NetConfig& cfg, std::span<const double> F_m) {
  if (F_m.size() != static_cast<std::size_t>(cfg.c))
    throw std::invalid_argument("udf_nearest: feature size does not match c");
  Tape& tape = plain_tape();
  tape.reset();
  Var f = tape.constant(ad::make_shape({1, cfg.c}), F_m);
  Var xyz = mlp_head(tape, params, "mlp_i", cfg.depth, f);
  auto v = tape.value(xyz);
  return {v[0], v[1], v[2]};
}

double offset_head(ad::ParamStore& params, const NetConfig& cfg, std::span<const double> F_final,
                   const Vec3& d) {
  if (F_final.size() != static_cast<std::size_t>(cfg.c))
    throw std::invalid_argument("offset_head: feature size does not match c");
  Tape& tape = plain_tape();
  tape.reset();
  Var f = tape.constant(ad::make_shape({1, cfg.c}), F_final);
  const double dd[3] = {d.x, d.y, d.z};
  Var dir = tape.constant(ad::make_shape({1, 3}), dd);
  Var eps = mlp_head(tape, params, "mlp_eps", cfg.depth, tape.concat_last(f, dir));
  return tape.value(eps)[0];
}

MarchTrace march(ad::ParamStore& params, const NetConfig& cfg, const Patch& patch,
                 const Vec3& d) {
  Tape& tape = plain_tape();
  tape.reset();
  MarchGraph g = march_graph(tape, params, cfg, patch, d);
  return extract_trace(tape, g, patch);
}

MarchTrace march_with_udf(const std::function<Vec3(const Point3&)>& nearest_offset, const Vec3& d,
                          int M, double max_depth) {
  MarchTrace tr;
  Point3 o{0.0, 0.0, 0.0};
  double t_tilde = 0.0;
  tr.steps.reserve(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    const Vec3 v = nearest_offset(o);
    const double t = v.norm();
    MarchStep st;
    st.origin = o;
    st.nearest = v;
    st.t = t;
    st.n = t > 0.0 ? (1.0 / t) * v : Vec3{0.0, 0.0, 1.0};
    tr.steps.push_back(std::move(st));
    t_tilde += t;
    o = {d.x * t_tilde, d.y * t_tilde, d.z * t_tilde};
    if (t_tilde > max_depth) {
      tr.truncated = true;
      break;
    }
  }
  tr.t_tilde = t_tilde;
  tr.eps = 0.0;
  tr.t_hat = t_tilde;
  tr.final_origin = o;
  return tr;
}

}  // namespace puray
