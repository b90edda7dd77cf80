#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "puray/geometry.hpp"
#include "puray/param_store.hpp"
#include "puray/sampling.hpp"
#include "puray/tape.hpp"

namespace puray {

struct NetConfig {
  int k = 16;      // patch size
  int c = 32;      // feature width
  int M = 6;       // marching steps
  int hidden = 32; // MLP_I / MLP_eps hidden width
  int depth = 3;   // MLP_I / MLP_eps hidden layer count
  double max_depth = 2.0;  // cumulative-depth truncation bound
};

struct MarchStep {
  Point3 origin;                // o_m
  Vec3 nearest;                 // implicit nearest-point offset (x_m, y_m, z_m)
  double t = 0.0;               // ||nearest||
  Vec3 n{0.0, 0.0, 1.0};        // unit(nearest), (0,0,1) at t == 0
  std::vector<double> proj;     // per patch point, n . (p_i - o_m)
  std::vector<double> weights;  // per patch point, exp(-d2 / (2 mean d2))
};

struct MarchTrace {
  std::vector<MarchStep> steps;
  double t_tilde = 0.0;
  double eps = 0.0;
  double t_hat = 0.0;
  bool truncated = false;
  Point3 final_origin;  // origin of the offset-head evaluation
};

// Parameter tensors in fixed creation order; the order defines checkpoint and
// optimizer-state layout.
ad::ParamStore make_network_params(const NetConfig& cfg, std::uint64_t seed);
std::size_t network_param_count(const NetConfig& cfg);

// ---- graph API (training path) ----

struct PatchGraph {
  ad::Var P;    // (k,3) patch constant
  ad::Var F_P;  // (k,c) encoded features
  ad::Var Kc;   // (k,c) cross-attention keys
  ad::Var Vc;   // (k,c) cross-attention values
};

struct MarchGraphStep {
  ad::Var origin;  // (1,3)
  ad::Var rel;     // (k,3) patch - origin
  ad::Var xyz;     // (1,3) implicit nearest offset
  ad::Var t;       // (1)
  ad::Var n;       // (1,3)
};

struct MarchGraph {
  PatchGraph patch;
  std::vector<MarchGraphStep> steps;
  ad::Var final_origin;  // (1,3)
  ad::Var final_rel;     // (k,3)
  ad::Var t_tilde;       // (1)
  ad::Var eps;           // (1)
  ad::Var t_hat;         // (1)
  bool truncated = false;
};

PatchGraph encode_patch_graph(ad::Tape& tape, ad::ParamStore& params, const NetConfig& cfg,
                              const Patch& patch);
MarchGraph march_graph(ad::Tape& tape, ad::ParamStore& params, const NetConfig& cfg,
                       const Patch& patch, const Vec3& d);
// Fills per-step projection/weight diagnostics from graph values.
MarchTrace extract_trace(const ad::Tape& tape, const MarchGraph& graph, const Patch& patch);

// ---- plain API ----

// k*c row-major features of the self-attended patch.
std::vector<double> encode_patch(ad::ParamStore& params, const NetConfig& cfg, const Patch& patch);
// One cross-attention read-out at origin o_m against precomputed F_P.
std::vector<double> cross_attend(ad::ParamStore& params, const NetConfig& cfg,
                                 std::span<const double> F_P, const Patch& patch,
                                 const Point3& o_m);
Vec3 udf_nearest(ad::ParamStore& params, const NetConfig& cfg, std::span<const double> F_m);
double offset_head(ad::ParamStore& params, const NetConfig& cfg, std::span<const double> F_final,
                   const Vec3& d);
MarchTrace march(ad::ParamStore& params, const NetConfig& cfg, const Patch& patch, const Vec3& d);

// Marching skeleton with an arbitrary nearest-offset field substituted for
// the network; the offset head is zero. Used with analytic oracles.
MarchTrace march_with_udf(const std::function<Vec3(const Point3&)>& nearest_offset, const Vec3& d,
                          int M, double max_depth = 2.0);

}  // namespace puray
