#include "puray/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace puray::ad {

namespace {

double eval(const std::function<Var(Tape&, ParamStore&)>& fn, Tape& tape, ParamStore& params) {
  tape.reset();
  const Var loss = fn(tape, params);
  return tape.scalar(loss);
}

}  // namespace

GradCheckReport grad_check(const std::function<Var(Tape&, ParamStore&)>& fn, ParamStore& params,
                           double h, double tol, int samples_per_tensor, std::uint64_t seed) {
  GradCheckReport report;
  Tape tape;

  params.zero_grads();
  tape.reset();
  const Var loss = fn(tape, params);
  const double f0 = tape.scalar(loss);
  tape.backward(loss);

  // Snapshot analytic gradients before the probing passes overwrite them.
  std::vector<std::vector<double>> analytic(params.size());
  for (std::size_t pi = 0; pi < params.size(); ++pi) analytic[pi] = params.tensor(pi).grad;

  std::mt19937_64 pick(seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = params.tensor(pi);
    GradCheckReport::Entry entry;
    entry.name = params.name(pi);

    const std::int64_t count = t.count();
    std::vector<std::int64_t> components;
    if (samples_per_tensor <= 0 || samples_per_tensor >= count) {
      components.resize(count);
      for (std::int64_t i = 0; i < count; ++i) components[i] = i;
    } else {
      for (int i = 0; i < samples_per_tensor; ++i) {
        components.push_back(static_cast<std::int64_t>(pick() % count));
      }
      std::sort(components.begin(), components.end());
      components.erase(std::unique(components.begin(), components.end()), components.end());
    }

    for (std::int64_t ci : components) {
      const double orig = t.data[ci];
      t.data[ci] = orig + h;
      const double fp = eval(fn, tape, params);
      t.data[ci] = orig - h;
      const double fm = eval(fn, tape, params);
      t.data[ci] = orig;

      const double right = (fp - f0) / h;
      const double left = (f0 - fm) / h;
      const double slope_gap = std::fabs(right - left);
      if (slope_gap > 0.1 * std::max({std::fabs(right), std::fabs(left), 1e-3})) {
        ++entry.skipped_kinks;
        continue;
      }

      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[pi][ci];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      const double rel = std::fabs(a - numeric) / denom;
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.checked;
    }

    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.total_checked += entry.checked;
    report.total_skipped += entry.skipped_kinks;
    report.entries.push_back(std::move(entry));
  }

  report.passed = report.max_rel_err < tol && report.total_checked > 0;
  return report;
}

}  // namespace puray::ad
