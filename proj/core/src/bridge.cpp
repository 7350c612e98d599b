#include "dpdl/bridge.hpp"

#include <cmath>
#include <string>

#include "dpdl/error.hpp"

namespace dpdl {
namespace {

void check_dim(const Mgp& mgp, std::span<const double> x, const char* what) {
  if (x.size() != mgp.dim())
    throw ValidationError(std::string(what) + ": vector has dimension " + std::to_string(x.size()) +
                          ", prototypes have " + std::to_string(mgp.dim()));
}

void check_time(double t, const char* what) {
  if (!(t >= 0.0 && t < 1.0))
    throw DomainError(std::string(what) + ": t must lie in [0, 1), got " + std::to_string(t));
}

// log alpha_c + mu_c.x / eps + x.(sigma_c ⊙ x) / (2 eps^2)
std::vector<double> tilted_log_weights(const Mgp& mgp, std::span<const double> x) {
  const double eps = mgp.epsilon;
  std::vector<double> lw(mgp.components());
  for (std::size_t c = 0; c < mgp.components(); ++c) {
    const auto mu = mgp.mu.row(c);
    const auto sig = mgp.sigma.row(c);
    double lin = 0.0, quad = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      lin += mu[d] * x[d];
      quad += sig[d] * x[d] * x[d];
    }
    lw[c] = mgp.log_alpha[c] + lin / eps + quad / (2.0 * eps * eps);
  }
  return lw;
}

// log alpha_c + log ∫ N(y; x, s) exp(|y|^2/(2 eps)) N(y; mu_c, sigma_c) dy with
// s = eps(1-t). Per coordinate, with delta = t sigma + s, the integral is
//   -log(2 pi delta)/2 + [x^2 (sigma - eps) + 2 eps x mu - eps t mu^2] / (2 eps delta)
// which has no cancellation as s -> 0. The product Gaussian has mean
// (x sigma + mu s)/delta and variance s sigma/delta.
std::vector<double> bridge_log_weights(const Mgp& mgp, std::span<const double> x, double t,
                                       Matrix* means, Matrix* variances) {
  const double eps = mgp.epsilon;
  const double s = eps * (1.0 - t);
  const std::size_t C = mgp.components(), D = mgp.dim();
  std::vector<double> lw(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto mu = mgp.mu.row(c);
    const auto sig = mgp.sigma.row(c);
    double acc = mgp.log_alpha[c];
    for (std::size_t d = 0; d < D; ++d) {
      const double delta = t * sig[d] + s;
      const double q = x[d] * x[d] * (sig[d] - eps) + 2.0 * eps * x[d] * mu[d] - eps * t * mu[d] * mu[d];
      acc += -0.5 * (kLog2Pi + std::log(delta)) + q / (2.0 * eps * delta);
      if (means) (*means)(c, d) = (x[d] * sig[d] + mu[d] * s) / delta;
      if (variances) (*variances)(c, d) = s * sig[d] / delta;
    }
    lw[c] = acc;
  }
  return lw;
}

}  // namespace

double DiagGmm::log_density(std::span<const double> y) const {
  std::vector<double> terms(components());
  for (std::size_t c = 0; c < components(); ++c) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim(); ++d) {
      const double diff = y[d] - means(c, d);
      s += kLog2Pi + std::log(variances(c, d)) + diff * diff / variances(c, d);
    }
    terms[c] = std::log(weights[c]) - 0.5 * s;
  }
  return log_sum_exp(terms);
}

std::vector<double> DiagGmm::mean() const {
  std::vector<double> m(dim(), 0.0);
  for (std::size_t c = 0; c < components(); ++c)
    for (std::size_t d = 0; d < dim(); ++d) m[d] += weights[c] * means(c, d);
  return m;
}

std::vector<double> DiagGmm::marginal_variance() const {
  const auto m = mean();
  std::vector<double> v(dim(), 0.0);
  for (std::size_t c = 0; c < components(); ++c)
    for (std::size_t d = 0; d < dim(); ++d) {
      const double diff = means(c, d) - m[d];
      v[d] += weights[c] * (variances(c, d) + diff * diff);
    }
  return v;
}

std::vector<double> DiagGmm::sample(Rng& rng) const {
  const double u = rng.uniform();
  std::size_t c = components() - 1;
  double acc = 0.0;
  for (std::size_t k = 0; k < components(); ++k) {
    acc += weights[k];
    if (u < acc) {
      c = k;
      break;
    }
  }
  std::vector<double> y(dim());
  for (std::size_t d = 0; d < dim(); ++d)
    y[d] = means(c, d) + std::sqrt(variances(c, d)) * rng.normal();
  return y;
}

double log_partition(const Mgp& mgp, std::span<const double> x) {
  check_dim(mgp, x, "log_partition");
  return log_sum_exp(tilted_log_weights(mgp, x));
}

CondGmm conditional_plan(const Mgp& mgp, std::span<const double> x) {
  check_dim(mgp, x, "conditional_plan");
  CondGmm cond;
  cond.x.assign(x.begin(), x.end());
  cond.log_unnormalized_weights = tilted_log_weights(mgp, x);
  cond.weights = softmax(cond.log_unnormalized_weights);
  cond.means = mgp.mu;
  for (std::size_t c = 0; c < mgp.components(); ++c)
    for (std::size_t d = 0; d < mgp.dim(); ++d)
      cond.means(c, d) += mgp.sigma(c, d) * x[d] / mgp.epsilon;
  cond.variances = mgp.sigma;
  return cond;
}

std::vector<double> sample_endpoint(const CondGmm& cond, EndpointMode mode, Rng* rng) {
  if (mode == EndpointMode::deterministic) return cond.mean();
  if (!rng) throw ValidationError("sample_endpoint: stochastic mode needs an Rng");
  return cond.sample(*rng);
}

std::size_t posterior_mode_index(const Mgp& mgp, std::span<const double> psi) {
  check_dim(mgp, psi, "posterior_mode_index");
  std::vector<double> ld(mgp.components());
  for (std::size_t c = 0; c < mgp.components(); ++c) ld[c] = mgp.component_log_density(c, psi);
  return argmax(ld);
}

DiagGmm bridge_terminal_conditional(const Mgp& mgp, std::span<const double> x, double t) {
  check_dim(mgp, x, "bridge_terminal_conditional");
  check_time(t, "bridge_terminal_conditional");
  DiagGmm g;
  g.means = Matrix(mgp.components(), mgp.dim());
  g.variances = Matrix(mgp.components(), mgp.dim());
  g.weights = softmax(bridge_log_weights(mgp, x, t, &g.means, &g.variances));
  return g;
}

double log_bridge_potential(const Mgp& mgp, std::span<const double> x, double t) {
  check_dim(mgp, x, "log_bridge_potential");
  check_time(t, "log_bridge_potential");
  return log_sum_exp(bridge_log_weights(mgp, x, t, nullptr, nullptr));
}

std::vector<double> drift(const Mgp& mgp, std::span<const double> x, double t) {
  check_dim(mgp, x, "drift");
  check_time(t, "drift");
  const double eps = mgp.epsilon;
  const double s = eps * (1.0 - t);
  const auto r = softmax(bridge_log_weights(mgp, x, t, nullptr, nullptr));
  std::vector<double> g(x.size(), 0.0);
  for (std::size_t c = 0; c < mgp.components(); ++c)
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double sig = mgp.sigma(c, d);
      g[d] += r[c] * (x[d] * sig + eps * (mgp.mu(c, d) - x[d])) / (t * sig + s);
    }
  return g;
}

Trajectory simulate_sde(const Mgp& mgp, std::span<const double> x0, std::size_t n_steps, Rng& rng) {
  check_dim(mgp, x0, "simulate_sde");
  if (n_steps < 2) throw ValidationError("simulate_sde: n_steps must be >= 2");
  Trajectory tr;
  tr.times.reserve(n_steps + 1);
  tr.states.reserve(n_steps + 1);
  const double dt = 1.0 / static_cast<double>(n_steps);
  const double noise = std::sqrt(mgp.epsilon * dt);
  std::vector<double> x(x0.begin(), x0.end());
  tr.times.push_back(0.0);
  tr.states.push_back(x);
  for (std::size_t k = 0; k + 1 < n_steps; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n_steps);
    const auto g = drift(mgp, x, t);
    for (std::size_t d = 0; d < x.size(); ++d) x[d] += g[d] * dt + noise * rng.normal();
    tr.times.push_back(static_cast<double>(k + 1) / static_cast<double>(n_steps));
    tr.states.push_back(x);
  }
  const double t_last = static_cast<double>(n_steps - 1) / static_cast<double>(n_steps);
  tr.states.push_back(bridge_terminal_conditional(mgp, x, t_last).sample(rng));
  tr.times.push_back(1.0);
  return tr;
}

}  // namespace dpdl
