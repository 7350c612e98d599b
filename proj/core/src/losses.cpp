#include "dpdl/losses.hpp"

#include <cmath>
#include <string>

#include "dpdl/bridge.hpp"
#include "dpdl/error.hpp"

namespace dpdl {

MgpGradient MgpGradient::zeros_like(const MgpParams& p) {
  MgpGradient g;
  g.logits.assign(p.logits.size(), 0.0);
  g.means = Matrix(p.means.rows, p.means.cols);
  g.log_variances = Matrix(p.log_variances.rows, p.log_variances.cols);
  return g;
}

void MgpGradient::add(const MgpGradient& other, double scale) {
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += scale * other.logits[i];
  for (std::size_t i = 0; i < means.data.size(); ++i) means.data[i] += scale * other.means.data[i];
  for (std::size_t i = 0; i < log_variances.data.size(); ++i)
    log_variances.data[i] += scale * other.log_variances.data[i];
}

bool MgpGradient::all_finite() const {
  return dpdl::all_finite(logits) && dpdl::all_finite(means.data) &&
         dpdl::all_finite(log_variances.data);
}

namespace {

void check_batch(const MgpParams& params, std::span<const std::vector<double>> batch,
                 const char* what) {
  if (batch.empty()) throw ValidationError(std::string(what) + ": empty batch");
  for (const auto& x : batch)
    if (x.size() != params.dim())
      throw ValidationError(std::string(what) + ": feature dimension " + std::to_string(x.size()) +
                            " != prototype dimension " + std::to_string(params.dim()));
}

// Adds scale * ∇ log ϖ(x) to grad (raw parameters) and to feature_grad.
double add_log_partition(const Mgp& mgp, std::span<const double> x, double scale,
                         MgpGradient& grad, std::vector<double>& feature_grad) {
  const auto cond = conditional_plan(mgp, x);
  const double value = log_sum_exp(cond.log_unnormalized_weights);
  const double eps = mgp.epsilon;
  feature_grad.assign(x.size(), 0.0);
  for (std::size_t c = 0; c < mgp.components(); ++c) {
    const double w = cond.weights[c];
    grad.logits[c] += scale * (w - mgp.alpha[c]);
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double sig = mgp.sigma(c, d);
      grad.means(c, d) += scale * w * x[d] / eps;
      grad.log_variances(c, d) += scale * w * x[d] * x[d] * sig / (2.0 * eps * eps);
      feature_grad[d] += scale * w * (mgp.mu(c, d) / eps + x[d] * sig / (eps * eps));
    }
  }
  return value;
}

// Adds scale * ∇ sum_k log phi_1(mu_k) and returns the sum.
double add_prototype_self_likelihood(const Mgp& mgp, double scale, MgpGradient& grad) {
  const std::size_t C = mgp.components(), D = mgp.dim();
  std::vector<double> terms(C);
  double total = 0.0;
  for (std::size_t k = 0; k < C; ++k) {
    const auto mu_k = mgp.mu.row(k);
    for (std::size_t c = 0; c < C; ++c) terms[c] = mgp.log_alpha[c] + mgp.component_log_density(c, mu_k);
    total += log_sum_exp(terms);
    const auto q = softmax(terms);
    for (std::size_t c = 0; c < C; ++c) {
      grad.logits[c] += scale * (q[c] - mgp.alpha[c]);
      for (std::size_t d = 0; d < D; ++d) {
        const double sig = mgp.sigma(c, d);
        const double diff = mu_k[d] - mgp.mu(c, d);
        grad.log_variances(c, d) += scale * q[c] * 0.5 * (diff * diff / sig - 1.0);
        grad.means(k, d) -= scale * q[c] * diff / sig;
        grad.means(c, d) += scale * q[c] * diff / sig;
      }
    }
  }
  return total;
}

// sign_partition * mean log ϖ(batch) + sign_prior * mean_c log phi_1(mu_c)
LossValueWithGrads dpl_loss(const MgpParams& params, std::span<const std::vector<double>> batch,
                            double sign_partition, double sign_prior) {
  const Mgp mgp = mgp_realize(params);
  LossValueWithGrads out;
  out.mgp = MgpGradient::zeros_like(params);
  out.features.resize(batch.size());
  const double n = static_cast<double>(batch.size());
  const double C = static_cast<double>(mgp.components());
  double partition = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    partition += add_log_partition(mgp, batch[i], sign_partition / n, out.mgp, out.features[i]);
  const double prior = add_prototype_self_likelihood(mgp, sign_prior / C, out.mgp);
  out.value = sign_partition * partition / n + sign_prior * prior / C;
  return out;
}

}  // namespace

LossValueWithGrads loss_dpl_normal(const MgpParams& params,
                                   std::span<const std::vector<double>> batch) {
  check_batch(params, batch, "loss_dpl_normal");
  return dpl_loss(params, batch, +1.0, -1.0);
}

LossValueWithGrads loss_dpl_anomaly(const MgpParams& params,
                                    std::span<const std::vector<double>> batch) {
  check_batch(params, batch, "loss_dpl_anomaly");
  return dpl_loss(params, batch, -1.0, +1.0);
}

std::vector<double> unitize(std::span<const double> x) {
  const double n = norm2(x);
  if (!(n > 0) || !std::isfinite(n)) throw ValidationError("unitize: zero or non-finite vector");
  std::vector<double> out(x.begin(), x.end());
  for (auto& v : out) v /= n;
  return out;
}

LossValueWithGrads loss_dfl(std::span<const std::vector<double>> unit_features, double kappa) {
  const std::size_t U = unit_features.size();
  if (U < 2) throw ValidationError("loss_dfl: need at least two features");
  const std::size_t D = unit_features[0].size();
  for (const auto& x : unit_features) {
    if (x.size() != D) throw ValidationError("loss_dfl: features differ in dimension");
    if (std::abs(norm2(x) - 1.0) > 1e-9) throw ValidationError("loss_dfl: input is not unit-norm");
  }

  Matrix p(U, U);  // p(i, j): softmax over j != i of kappa <x_i, x_j>
  std::vector<double> e(U - 1);
  LossValueWithGrads out;
  const double log_pairs = std::log(static_cast<double>(U - 1));
  double total = 0.0;
  for (std::size_t i = 0; i < U; ++i) {
    for (std::size_t j = 0, k = 0; j < U; ++j)
      if (j != i) e[k++] = kappa * dot(unit_features[i], unit_features[j]);
    const double lse = log_sum_exp(e);
    total += lse - log_pairs;
    for (std::size_t j = 0, k = 0; j < U; ++j)
      if (j != i) p(i, j) = std::exp(e[k++] - lse);
  }
  out.value = total / static_cast<double>(U);

  out.features.assign(U, std::vector<double>(D, 0.0));
  const double scale = kappa / static_cast<double>(U);
  for (std::size_t i = 0; i < U; ++i) {
    auto& g = out.features[i];
    for (std::size_t j = 0; j < U; ++j) {
      if (j == i) continue;
      const double coef = scale * (p(i, j) + p(j, i));
      for (std::size_t d = 0; d < D; ++d) g[d] += coef * unit_features[j][d];
    }
    const double radial = dot(g, unit_features[i]);
    for (std::size_t d = 0; d < D; ++d) g[d] -= radial * unit_features[i][d];
  }
  return out;
}

}  // namespace dpdl
