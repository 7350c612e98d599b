#pragma once

#include <functional>
#include <vector>

#include "dpdl/losses.hpp"
#include "dpdl/scoring.hpp"

namespace dpdl::test {

// Parameters to perturb and the analytic derivative for each, in lockstep.
struct GradProbe {
  std::vector<double*> params;
  std::vector<double> analytic;

  void add(MgpParams& p, const MgpGradient& g);
  void add(LinearHead& h, const HeadGrad& g);
  void add(std::vector<std::vector<double>>& xs, const std::vector<std::vector<double>>& g);
};

struct FdReport {
  double worst_absolute = 0.0;
  // max |fd - an| / max(|fd|, |an|) over entries of magnitude >= 1e-3
  double worst_relative = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
};

// Central differences with step h * max(1, |theta|). An entry passes when
// |fd - an| <= rel * max(|fd|, |an|) or |fd - an| <= abs_floor.
FdReport central_difference_check(const std::function<double()>& f, const GradProbe& probe,
                                  double rel = 1e-4, double abs_floor = 1e-6, double h = 1e-6);

}  // namespace dpdl::test
