#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dpdl/numeric.hpp"
#include "dpdl/prototypes.hpp"
#include "dpdl/rng.hpp"

namespace dpdl {

// Gaussian mixture with diagonal covariances.
struct DiagGmm {
  std::vector<double> weights;  // sum to 1
  Matrix means;                 // C x D
  Matrix variances;             // C x D, positive

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.cols; }

  double log_density(std::span<const double> y) const;
  std::vector<double> mean() const;
  // Per-coordinate variance of the mixture (law of total variance).
  std::vector<double> marginal_variance() const;
  std::vector<double> sample(Rng& rng) const;
};

// Conditional plan pi(. | x) of the bridge: a mixture with
//   w_c(x)  ∝ alpha_c exp(mu_c.x / eps + x.(sigma_c ⊙ x) / (2 eps^2))
//   mean_c  = mu_c + sigma_c ⊙ x / eps
//   var_c   = sigma_c
struct CondGmm : DiagGmm {
  std::vector<double> x;
  std::vector<double> log_unnormalized_weights;
};

// log ϖ(x) = log ∫ exp(<x, y>/eps) phi_1(y) dy
double log_partition(const Mgp& mgp, std::span<const double> x);

CondGmm conditional_plan(const Mgp& mgp, std::span<const double> x);

enum class EndpointMode { deterministic, stochastic };

// Bridge endpoint psi(x). deterministic: posterior mixture mean
// sum_c w_c mean_c. stochastic: one draw from the conditional plan.
std::vector<double> sample_endpoint(const CondGmm& cond, EndpointMode mode, Rng* rng = nullptr);

// argmax_c N(psi; mu_c, sigma_c) without the mixture weights; ties go to the
// lowest index.
std::size_t posterior_mode_index(const Mgp& mgp, std::span<const double> psi);

// Distribution of the terminal point y = x_1 given x_t = x on the bridge:
// ∝ N(y; x, eps(1-t) I) v(y) with v(y) = exp(|y|^2/(2 eps)) phi_1(y).
// Per component and coordinate the precision is t/(eps(1-t)) + 1/sigma and
// the mean (x sigma + mu eps(1-t)) / (t sigma + eps(1-t)). At t = 0 this is
// exactly conditional_plan(x). Requires 0 <= t < 1.
DiagGmm bridge_terminal_conditional(const Mgp& mgp, std::span<const double> x, double t);

// log ∫ N(y; x, eps(1-t) I) v(y) dy in closed form. Requires 0 <= t < 1.
double log_bridge_potential(const Mgp& mgp, std::span<const double> x, double t);

// g(x, t) = eps ∇_x log ∫ N(y; x, eps(1-t) I) v(y) dy
//         = sum_c r_c(x, t) (x + eps (mu_c - x) / sigma_c) / (t + eps(1-t) / sigma_c)
// where r_c are the bridge_terminal_conditional weights. Equivalently
// (E[x_1 | x_t = x] - x) / (1 - t). Throws DomainError for t >= 1 or t < 0.
std::vector<double> drift(const Mgp& mgp, std::span<const double> x, double t);

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
};

// Euler-Maruyama for dx = g(x, t) dt + sqrt(eps) dW on the grid t_k = k/n.
// The last step is an exact draw from bridge_terminal_conditional at
// t_{n-1}, so the path ends at t = 1 without stepping through the drift's
// stiff region.
Trajectory simulate_sde(const Mgp& mgp, std::span<const double> x0, std::size_t n_steps, Rng& rng);

}  // namespace dpdl
