#include "dpdl/optimizer.hpp"

#include <cmath>

#include "dpdl/error.hpp"

namespace dpdl {

void optimizer_step(std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads, OptimizerState& state,
                    const AdamWHyper& hyper) {
  if (params.size() != grads.size()) throw ValidationError("optimizer_step: tensor count mismatch");
  for (std::size_t t = 0; t < params.size(); ++t)
    if (params[t].size() != grads[t].size())
      throw ValidationError("optimizer_step: parameter/gradient shape mismatch");

  if (state.first_moment.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size())
    throw ValidationError("optimizer_step: state does not match parameter list");
  for (std::size_t t = 0; t < params.size(); ++t)
    if (state.first_moment[t].size() != params[t].size())
      throw ValidationError("optimizer_step: state shape mismatch");

  ++state.step;
  const double step = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, step);
  const double bc2 = 1.0 - std::pow(hyper.beta2, step);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = state.first_moment[t];
    auto& v = state.second_moment[t];
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double g = grads[t][i];
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      double& theta = params[t][i];
      theta -= hyper.learning_rate *
               (m_hat / (std::sqrt(v_hat) + hyper.eps_hat) + hyper.weight_decay * theta);
    }
  }
}

double clip_global_norm(std::span<const std::span<double>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const double s = max_norm / norm;
    for (const auto& g : grads)
      for (double& v : g) v *= s;
  }
  return norm;
}

}  // namespace dpdl
