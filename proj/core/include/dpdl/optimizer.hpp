#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dpdl {

struct AdamWHyper {
  double learning_rate = 2e-4;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

// First/second moment accumulators, one vector per parameter tensor.
struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

// One AdamW update over a list of tensors:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps_hat) + wd theta)
// State is allocated on the first call; later calls must pass tensors of the
// same shapes (ValidationError otherwise).
void optimizer_step(std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads, OptimizerState& state,
                    const AdamWHyper& hyper);

// Scales all gradients in place so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(std::span<const std::span<double>> grads, double max_norm);

}  // namespace dpdl
