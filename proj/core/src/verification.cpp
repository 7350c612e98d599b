#include "dpdl/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "dpdl/bridge.hpp"
#include "dpdl/losses.hpp"
#include "dpdl/oracles.hpp"
#include "dpdl/rng.hpp"
#include "dpdl/scoring.hpp"

namespace dpdl {

namespace {

class Reporter {
 public:
  explicit Reporter(std::ostream& out) : out_(out) {}

  void check(const std::string& name, double error, double tolerance) {
    const bool ok = error <= tolerance;  // NaN fails
    char buf[64];
    std::snprintf(buf, sizeof buf, "err %.3e tol %.1e", error, tolerance);
    out_ << (ok ? "ok    " : "FAIL  ") << name << "  " << buf << "\n";
    all_ok_ = all_ok_ && ok;
  }
  bool all_ok() const { return all_ok_; }

 private:
  std::ostream& out_;
  bool all_ok_ = true;
};

MgpParams random_params(Rng& rng, std::size_t C, std::size_t D, double eps) {
  MgpParams p;
  p.epsilon = eps;
  p.logits.resize(C);
  p.means = Matrix(C, D);
  p.log_variances = Matrix(C, D);
  for (auto& v : p.logits) v = rng.uniform(-1.0, 1.0);
  for (auto& v : p.means.data) v = rng.uniform(-2.0, 2.0);
  for (auto& v : p.log_variances.data) v = rng.uniform(-1.0, 0.5);
  return p;
}

// ---------------------------------------------------------------------------
// bridge
// ---------------------------------------------------------------------------

double worst_partition_error(Rng& rng, std::size_t instances) {
  const std::size_t Cs[] = {1, 2, 4};
  const double epss[] = {0.001, 0.01, 1.0};
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const double eps = epss[i % 3];
    const Mgp mgp = mgp_realize(random_params(rng, Cs[(i / 3) % 3], 1, eps));
    const std::vector<double> x{rng.uniform(-1.0, 1.0) * std::sqrt(eps)};
    const double ref = quadrature_oracle_log_partition(mgp, x);
    worst = std::max(worst, std::abs(log_partition(mgp, x) - ref) / std::abs(ref));
  }
  return worst;
}

double worst_plan_density_error(Rng& rng, std::size_t instances) {
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const double eps = i % 2 ? 1.0 : 0.1;
    const Mgp mgp = mgp_realize(random_params(rng, 1 + i % 3, 1, eps));
    const std::vector<double> x{rng.uniform(-0.5, 0.5) * eps};
    const auto range = partition_oracle_ranges(mgp, x, GridSpec{})[0];
    std::vector<double> grid(range.nodes);
    for (std::size_t k = 0; k < grid.size(); ++k)
      grid[k] = range.lo + (range.hi - range.lo) * static_cast<double>(k) / static_cast<double>(grid.size() - 1);
    const auto ref = grid_normalized_conditional_density(mgp, x[0], grid);
    const auto cond = conditional_plan(mgp, x);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double y[1] = {grid[k]};
      worst = std::max(worst, std::abs(std::exp(cond.log_density(y)) - ref[k]));
    }
  }
  return worst;
}

// Fixed grid for the bridge potential around all component posteriors at x.
void bridge_grid(const Mgp& mgp, double x, double t, double& lo, double& hi, std::size_t& nodes) {
  const double s = mgp.epsilon * (1.0 - t);
  lo = INFINITY;
  hi = -INFINITY;
  double min_sd = INFINITY;
  for (std::size_t c = 0; c < mgp.components(); ++c) {
    const double sig = mgp.sigma(c, 0), mu = mgp.mu(c, 0);
    const double delta = t * sig + s;
    const double mean = (x * sig + mu * s) / delta;
    const double sd = std::sqrt(s * sig / delta);
    lo = std::min(lo, mean - 12.0 * sd);
    hi = std::max(hi, mean + 12.0 * sd);
    min_sd = std::min(min_sd, sd);
  }
  nodes = std::max<std::size_t>(4001, static_cast<std::size_t>((hi - lo) / (0.05 * min_sd)) + 1);
}

double worst_drift_error(Rng& rng, std::size_t instances) {
  const double ts[] = {0.0, 0.25, 0.5, 0.9};
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const double eps = i % 2 ? 1.0 : 0.1;
    const Mgp mgp = mgp_realize(random_params(rng, 1 + i % 3, 1, eps));
    const double x = rng.uniform(-1.0, 1.0);
    for (double t : ts) {
      double lo, hi;
      std::size_t nodes;
      bridge_grid(mgp, x, t, lo, hi, nodes);
      const double h = 1e-4 * std::sqrt(eps);
      const double fd = (quadrature_oracle_log_bridge_potential(mgp, x + h, t, lo, hi, nodes) -
                         quadrature_oracle_log_bridge_potential(mgp, x - h, t, lo, hi, nodes)) /
                        (2.0 * h);
      const double ref = eps * fd;
      const double xs[1] = {x};
      const double g = drift(mgp, xs, t)[0];
      worst = std::max(worst, std::abs(g - ref) / std::max(std::abs(ref), 1e-6));
    }
  }
  return worst;
}

double worst_terminal_at_zero(Rng& rng, std::size_t instances) {
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const Mgp mgp = mgp_realize(random_params(rng, 3, 2, 0.5));
    const std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto a = bridge_terminal_conditional(mgp, x, 0.0);
    const auto b = conditional_plan(mgp, x);
    for (std::size_t c = 0; c < a.components(); ++c) worst = std::max(worst, std::abs(a.weights[c] - b.weights[c]));
    for (std::size_t k = 0; k < a.means.data.size(); ++k) {
      worst = std::max(worst, std::abs(a.means.data[k] - b.means.data[k]));
      worst = std::max(worst, std::abs(a.variances.data[k] - b.variances.data[k]));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// Central differences over every entry behind `params`; `analytic` in the
// same order. Returns the worst error scaled by max(|fd|, |an|), with an
// absolute floor tied to the gradient's magnitude.
double fd_error(const std::function<double()>& f, const std::vector<double*>& params,
                const std::vector<double>& analytic) {
  double scale = 0.0;
  for (double g : analytic) scale = std::max(scale, std::abs(g));
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& p = *params[i];
    const double saved = p;
    const double h = 1e-6 * std::max(1.0, std::abs(saved));
    p = saved + h;
    const double up = f();
    p = saved - h;
    const double down = f();
    p = saved;
    const double fd = (up - down) / (2.0 * h);
    const double err = std::abs(fd - analytic[i]);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-3 * (1.0 + scale)});
    worst = std::max(worst, err / denom);
  }
  return worst;
}

void collect(MgpParams& p, const MgpGradient& g, std::vector<double*>& ptrs, std::vector<double>& an) {
  for (std::size_t i = 0; i < p.logits.size(); ++i) ptrs.push_back(&p.logits[i]), an.push_back(g.logits[i]);
  for (std::size_t i = 0; i < p.means.data.size(); ++i)
    ptrs.push_back(&p.means.data[i]), an.push_back(g.means.data[i]);
  for (std::size_t i = 0; i < p.log_variances.data.size(); ++i)
    ptrs.push_back(&p.log_variances.data[i]), an.push_back(g.log_variances.data[i]);
}

void collect(LinearHead& h, const HeadGrad& g, std::vector<double*>& ptrs, std::vector<double>& an) {
  for (std::size_t i = 0; i < h.weights.size(); ++i) ptrs.push_back(&h.weights[i]), an.push_back(g.weights[i]);
  ptrs.push_back(&h.bias);
  an.push_back(g.bias);
}

std::vector<std::vector<double>> random_batch(Rng& rng, std::size_t n, std::size_t D, double scale) {
  std::vector<std::vector<double>> b(n, std::vector<double>(D));
  for (auto& x : b)
    for (auto& v : x) v = scale * rng.normal();
  return b;
}

using DplFn = LossValueWithGrads (*)(const MgpParams&, std::span<const std::vector<double>>);

double worst_dpl_error(Rng& rng, DplFn loss, std::size_t instances) {
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const double eps = i % 2 ? 1.0 : 0.25;
    MgpParams p = random_params(rng, 1 + i % 4, 1 + i % 3, eps);
    auto batch = random_batch(rng, 1 + i % 5, p.dim(), 0.5 * eps);
    const auto g = loss(p, batch);
    std::vector<double*> ptrs;
    std::vector<double> an;
    collect(p, g.mgp, ptrs, an);
    for (std::size_t n = 0; n < batch.size(); ++n)
      for (std::size_t d = 0; d < batch[n].size(); ++d) ptrs.push_back(&batch[n][d]), an.push_back(g.features[n][d]);
    worst = std::max(worst, fd_error([&] { return loss(p, batch).value; }, ptrs, an));
  }
  return worst;
}

double worst_dfl_error(Rng& rng, std::size_t instances) {
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t U = 2 + i % 5, D = 2 + i % 4;
    std::vector<std::vector<double>> feats;
    for (auto& x : random_batch(rng, U, D, 1.0)) feats.push_back(unitize(x));
    const double kappa = i % 2 ? 10.0 : 1.0;
    const auto g = loss_dfl(feats, kappa);
    // Differentiate along tangent directions so the iterate stays on the sphere.
    for (std::size_t n = 0; n < U; ++n) {
      std::vector<double> dir(D);
      for (auto& v : dir) v = rng.normal();
      const double proj = dot(dir, feats[n]);
      for (std::size_t d = 0; d < D; ++d) dir[d] -= proj * feats[n][d];
      const double an = dot(g.features[n], dir);
      const auto at = [&](double h) {
        auto moved = feats;
        for (std::size_t d = 0; d < D; ++d) moved[n][d] += h * dir[d];
        moved[n] = unitize(moved[n]);
        return loss_dfl(moved, kappa).value;
      };
      const double h = 1e-6;
      const double fd = (at(h) - at(-h)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3}));
    }
  }
  return worst;
}

FeatureMap random_map(Rng& rng, const GridDims& dims, double scale) {
  FeatureMap fm;
  fm.dims = dims;
  fm.values.resize(dims.size());
  for (auto& v : fm.values) v = scale * rng.normal();
  return fm;
}

double worst_head_error(Rng& rng, std::size_t instances, int which) {
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const GridDims dims{2, 2, static_cast<std::uint32_t>(2 + i % 2)};
    const double eps = i % 2 ? 1.0 : 0.5;
    MgpParams p = random_params(rng, 1 + i % 3, dims.size(), eps);
    ScoringHeads heads(dims.channels);
    heads.topk_fraction = 0.5;
    heads.residual_scale = i % 3 == 0 ? ResidualScale::variance : ResidualScale::std_dev;
    for (LinearHead* h : {&heads.anomaly, &heads.normal, &heads.residual}) {
      for (auto& w : h->weights) w = rng.normal();
      h->bias = rng.normal();
    }
    const FeatureMap fm = random_map(rng, dims, 0.3 * eps);
    const double y = static_cast<double>(i % 2);
    const auto value = [&] {
      switch (which) {
        case 0: return head_loss_anomaly(heads, fm, y);
        case 1: return head_loss_normal(heads, fm, y);
        default: return head_loss_residual(heads, p, fm, y);
      }
    };
    const HeadLoss g = value();
    std::vector<double*> ptrs;
    std::vector<double> an;
    LinearHead& h = which == 0 ? heads.anomaly : which == 1 ? heads.normal : heads.residual;
    collect(h, g.head, ptrs, an);
    if (which == 2) collect(p, g.mgp, ptrs, an);
    worst = std::max(worst, fd_error([&] { return value().value; }, ptrs, an));
  }
  return worst;
}

}  // namespace

bool verify_bridge(std::ostream& out) {
  Reporter rep(out);
  Rng rng(20240611);
  rep.check("log_partition vs quadrature (relative, 50 instances)", worst_partition_error(rng, 50), 1e-6);
  rep.check("conditional plan density vs grid normalization (20 instances)",
            worst_plan_density_error(rng, 20), 1e-8);
  rep.check("drift vs eps * d/dx quadrature log-potential (relative)", worst_drift_error(rng, 6), 1e-5);
  rep.check("terminal conditional at t=0 equals conditional plan", worst_terminal_at_zero(rng, 10), 1e-12);
  return rep.all_ok();
}

bool verify_losses(std::ostream& out) {
  Reporter rep(out);
  Rng rng(7);
  rep.check("L_DPLn gradient (central differences, 20 instances)", worst_dpl_error(rng, loss_dpl_normal, 20), 1e-4);
  rep.check("L_DPLa gradient (central differences, 20 instances)", worst_dpl_error(rng, loss_dpl_anomaly, 20), 1e-4);
  rep.check("L_DFL tangent gradient (20 instances)", worst_dfl_error(rng, 20), 1e-4);
  rep.check("L_Ma gradient (20 instances)", worst_head_error(rng, 20, 0), 1e-4);
  rep.check("L_Mn gradient (20 instances)", worst_head_error(rng, 20, 1), 1e-4);
  rep.check("L_Mr gradient (20 instances)", worst_head_error(rng, 20, 2), 1e-4);
  return rep.all_ok();
}

}  // namespace dpdl
