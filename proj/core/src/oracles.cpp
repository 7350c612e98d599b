#include "dpdl/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dpdl/error.hpp"

namespace dpdl {
namespace {

std::vector<double> trapezoid_log_weights(double lo, double hi, std::size_t nodes) {
  const double h = (hi - lo) / static_cast<double>(nodes - 1);
  std::vector<double> w(nodes, std::log(h));
  w.front() = w.back() = std::log(0.5 * h);
  return w;
}

double node(double lo, double hi, std::size_t nodes, std::size_t i) {
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(nodes - 1);
}

}  // namespace

double log_trapezoid(const std::function<double(double)>& log_f, double lo, double hi,
                     std::size_t nodes) {
  if (nodes < 2 || !(hi > lo)) throw ValidationError("log_trapezoid: need hi > lo and >= 2 nodes");
  const auto w = trapezoid_log_weights(lo, hi, nodes);
  std::vector<double> terms(nodes);
  for (std::size_t i = 0; i < nodes; ++i) terms[i] = w[i] + log_f(node(lo, hi, nodes, i));
  return log_sum_exp(terms);
}

std::vector<AxisRange> partition_oracle_ranges(const Mgp& mgp, std::span<const double> x,
                                               const GridSpec& spec) {
  std::vector<AxisRange> ranges(mgp.dim());
  for (std::size_t d = 0; d < mgp.dim(); ++d) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double min_sd = lo;
    for (std::size_t c = 0; c < mgp.components(); ++c) {
      const double sd = std::sqrt(mgp.sigma(c, d));
      const double tilted = mgp.mu(c, d) + mgp.sigma(c, d) * x[d] / mgp.epsilon;
      lo = std::min({lo, mgp.mu(c, d) - spec.half_width_sds * sd, tilted - spec.half_width_sds * sd});
      hi = std::max({hi, mgp.mu(c, d) + spec.half_width_sds * sd, tilted + spec.half_width_sds * sd});
      min_sd = std::min(min_sd, sd);
    }
    const double needed = std::ceil((hi - lo) / (spec.max_step_sds * min_sd)) + 1.0;
    ranges[d] = {lo, hi, std::max(spec.min_nodes, static_cast<std::size_t>(needed))};
  }
  return ranges;
}

double quadrature_oracle_log_partition(const Mgp& mgp, std::span<const double> x,
                                       const GridSpec& spec) {
  if (x.size() != mgp.dim()) throw ValidationError("quadrature oracle: dimension mismatch");
  if (mgp.dim() > 2) throw UnsupportedError("quadrature oracle supports D <= 2 only");
  const auto ranges = partition_oracle_ranges(mgp, x, spec);
  const double eps = mgp.epsilon;
  if (mgp.dim() == 1) {
    return log_trapezoid(
        [&](double y) {
          const double yy[1] = {y};
          return x[0] * y / eps + mgp.log_density(yy);
        },
        ranges[0].lo, ranges[0].hi, ranges[0].nodes);
  }
  const auto& r0 = ranges[0];
  const auto& r1 = ranges[1];
  const auto w0 = trapezoid_log_weights(r0.lo, r0.hi, r0.nodes);
  const auto w1 = trapezoid_log_weights(r1.lo, r1.hi, r1.nodes);
  std::vector<double> outer(r0.nodes);
  std::vector<double> inner(r1.nodes);
  for (std::size_t i = 0; i < r0.nodes; ++i) {
    const double y0 = node(r0.lo, r0.hi, r0.nodes, i);
    for (std::size_t j = 0; j < r1.nodes; ++j) {
      const double yy[2] = {y0, node(r1.lo, r1.hi, r1.nodes, j)};
      inner[j] = w1[j] + (x[0] * yy[0] + x[1] * yy[1]) / eps + mgp.log_density(yy);
    }
    outer[i] = w0[i] + log_sum_exp(inner);
  }
  return log_sum_exp(outer);
}

std::vector<double> grid_normalized_conditional_density(const Mgp& mgp, double x,
                                                        std::span<const double> grid) {
  if (mgp.dim() != 1) throw UnsupportedError("grid-normalized density is 1-D only");
  if (grid.size() < 2) throw ValidationError("grid-normalized density: grid too small");
  const std::size_t n = grid.size();
  std::vector<double> logf(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double yy[1] = {grid[i]};
    logf[i] = x * grid[i] / mgp.epsilon + mgp.log_density(yy);
  }
  const auto w = trapezoid_log_weights(grid.front(), grid.back(), n);
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) terms[i] = w[i] + logf[i];
  const double log_z = log_sum_exp(terms);
  std::vector<double> dens(n);
  for (std::size_t i = 0; i < n; ++i) dens[i] = std::exp(logf[i] - log_z);
  return dens;
}

double quadrature_oracle_log_bridge_potential(const Mgp& mgp, double x, double t, double lo,
                                              double hi, std::size_t nodes) {
  if (mgp.dim() != 1) throw UnsupportedError("bridge potential oracle is 1-D only");
  if (!(t >= 0.0 && t < 1.0)) throw DomainError("bridge potential oracle: t must be in [0, 1)");
  const double eps = mgp.epsilon;
  const double s = eps * (1.0 - t);
  return log_trapezoid(
      [&](double y) {
        const double yy[1] = {y};
        const double diff = y - x;
        return -0.5 * (kLog2Pi + std::log(s)) - diff * diff / (2.0 * s) + y * y / (2.0 * eps) +
               mgp.log_density(yy);
      },
      lo, hi, nodes);
}

SinkhornResult sinkhorn_eot_oracle(std::span<const std::vector<double>> source,
                                   std::span<const std::vector<double>> target, double epsilon,
                                   std::size_t max_iters, double tolerance) {
  if (source.empty() || target.empty()) throw ValidationError("sinkhorn: empty point set");
  if (!(epsilon > 0)) throw ValidationError("sinkhorn: epsilon must be > 0");
  const std::size_t n = source.size(), m = target.size();
  for (const auto& p : source)
    if (p.size() != source[0].size() || !all_finite(p)) throw ValidationError("sinkhorn: bad source");
  for (const auto& p : target)
    if (p.size() != source[0].size() || !all_finite(p)) throw ValidationError("sinkhorn: bad target");

  Matrix cost(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) cost(i, j) = 0.5 * squared_distance(source[i], target[j]);

  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  std::vector<double> f(n, 0.0), g(m, 0.0), buf(std::max(n, m));
  SinkhornResult res;
  res.plan = Matrix(n, m);

  auto row_residual = [&] {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += std::exp((f[i] + g[j] - cost(i, j)) / epsilon);
      r += std::abs(s - std::exp(log_a));
    }
    return r;
  };

  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - cost(i, j)) / epsilon;
      f[i] = epsilon * (log_a - log_sum_exp(std::span<const double>(buf.data(), m)));
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - cost(i, j)) / epsilon;
      g[j] = epsilon * (log_b - log_sum_exp(std::span<const double>(buf.data(), n)));
    }
    res.iterations = it + 1;
    // Column marginals are exact after the g update; check the rows.
    if ((it + 1) % 5 == 0 || it + 1 == max_iters) {
      res.residual = row_residual();
      if (res.residual < tolerance) {
        res.converged = true;
        break;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) res.plan(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / epsilon);
  return res;
}

}  // namespace dpdl
