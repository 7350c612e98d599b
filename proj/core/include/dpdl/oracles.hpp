#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dpdl/numeric.hpp"
#include "dpdl/prototypes.hpp"

namespace dpdl {

// Brute-force numerical references for the closed forms in bridge.hpp. They
// integrate the defining integrals on grids and never call into the bridge
// module. Restricted to D <= 2.

// Trapezoid rule in log space: log ∫_lo^hi exp(log_f(y)) dy on n nodes.
double log_trapezoid(const std::function<double(double)>& log_f, double lo, double hi,
                     std::size_t nodes);

struct GridSpec {
  std::size_t min_nodes = 4096;  // per axis
  double half_width_sds = 10.0;  // padding in prototype standard deviations
  // Upper bound on node spacing relative to the narrowest prototype standard
  // deviation; only increases the node count.
  double max_step_sds = 0.125;
};

// Integration box per axis: the hull of all mu_c and tilted means
// mu_c + sigma_c x / eps, padded by half_width_sds sqrt(sigma_c).
struct AxisRange {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t nodes = 0;
};
std::vector<AxisRange> partition_oracle_ranges(const Mgp& mgp, std::span<const double> x,
                                               const GridSpec& spec);

// log ∫ exp(<x, y>/eps) phi_1(y) dy by trapezoid quadrature.
double quadrature_oracle_log_partition(const Mgp& mgp, std::span<const double> x,
                                       const GridSpec& spec = {});

// Density of the conditional plan obtained by normalizing
// exp(x y / eps) phi_1(y) numerically on `grid` (1-D, uniform grid).
std::vector<double> grid_normalized_conditional_density(const Mgp& mgp, double x,
                                                        std::span<const double> grid);

// log ∫ N(y; x, eps(1-t)) exp(y^2/(2 eps)) phi_1(y) dy for D = 1 on a fixed
// uniform grid [lo, hi] with `nodes` points. Keeping the grid fixed lets
// finite differences in x cancel the quadrature error.
double quadrature_oracle_log_bridge_potential(const Mgp& mgp, double x, double t, double lo,
                                              double hi, std::size_t nodes);

struct SinkhornResult {
  Matrix plan;           // rows: source points, cols: target points
  double residual = 0;   // L1 violation of the row marginal
  std::size_t iterations = 0;
  bool converged = false;
};

// Log-domain Sinkhorn for entropic OT with cost |z0 - z1|^2 / 2 and uniform
// marginals. Columns are exact after every sweep; stops when the L1 violation
// of the row marginal drops below tolerance or
// after max_iters; non-convergence is reported, not thrown.
SinkhornResult sinkhorn_eot_oracle(std::span<const std::vector<double>> source,
                                   std::span<const std::vector<double>> target, double epsilon,
                                   std::size_t max_iters, double tolerance = 1e-10);

}  // namespace dpdl
