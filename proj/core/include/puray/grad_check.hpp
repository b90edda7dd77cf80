#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "puray/param_store.hpp"
#include "puray/tape.hpp"

namespace puray::ad {

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped_kinks = 0;
  };
  std::vector<Entry> entries;
  double max_rel_err = 0.0;
  int total_checked = 0;
  int total_skipped = 0;
  bool passed = false;
};

// fn builds the loss graph on the given tape and returns the scalar loss Var.
// Analytic gradients are compared against central differences; components
// whose one-sided slopes disagree (a kink crossed within the step) are
// skipped per the sub-gradient convention. samples_per_tensor = 0 checks
// every component.
GradCheckReport grad_check(const std::function<Var(Tape&, ParamStore&)>& fn, ParamStore& params,
                           double h = 1e-5, double tol = 1e-4, int samples_per_tensor = 0,
                           std::uint64_t seed = 0x5eed);

}  // namespace puray::ad
