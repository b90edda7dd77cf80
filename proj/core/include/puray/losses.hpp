#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "puray/geometry.hpp"
#include "puray/network.hpp"
#include "puray/tape.hpp"

namespace puray {

struct LossWeights {
  double w_ms = 0.1;
  double w_tan = 0.1;
};

struct LossBreakdown {
  double l_mae = 0.0;
  double l_rmse = 0.0;
  double l_ms = 0.0;
  double l_tan = 0.0;
  double l_eps = 0.0;
  double total = 0.0;

  bool finite() const {
    return std::isfinite(l_mae) && std::isfinite(l_rmse) && std::isfinite(l_ms) &&
           std::isfinite(l_tan) && std::isfinite(l_eps) && std::isfinite(total);
  }
};

// Signed projections of patch points onto the step normal, and the magnitude
// of their mean.
std::pair<std::vector<double>, double> projections(const Point3& o_m, const Vec3& n_m,
                                                   const Patch& patch);

// Distance-weighted RMS of the centred projections, averaged over executed
// steps. Steps whose predicted distance is zero carry the default normal and
// contribute nothing.
double loss_tan(const MarchTrace& trace, const Patch& patch);
// |t_m - proj of the nearest patch point|, averaged over executed steps;
// nearest by squared distance to o_m, ties to the lowest index.
double loss_ms(const MarchTrace& trace, const Patch& patch);
// Penalises negative offsets only.
double loss_eps(double eps);

// l_mae + l_rmse + w_ms*l_ms + w_tan*l_tan + l_eps over a batch of traces.
LossBreakdown loss_total(std::span<const MarchTrace> traces, std::span<const Patch> patches,
                         std::span<const double> targets, const LossWeights& w);

// ---- graph builders (training path) ----

struct SampleLossGraph {
  ad::Var t_hat;  // (1)
  ad::Var l_ms;   // (1)
  ad::Var l_tan;  // (1)
  ad::Var l_eps;  // (1)
};

SampleLossGraph sample_loss_graph(ad::Tape& tape, const MarchGraph& graph);

struct BatchLossGraph {
  ad::Var total;
  LossBreakdown values;
};

// Whole-batch loss on one tape; the training loop instead seeds per-sample
// graphs directly, this path backs gradient checks and equivalence tests.
BatchLossGraph loss_total_graph(ad::Tape& tape, std::span<const MarchGraph> graphs,
                                std::span<const double> targets, const LossWeights& w);

}  // namespace puray
