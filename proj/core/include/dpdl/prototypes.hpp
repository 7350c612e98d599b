#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dpdl/numeric.hpp"

namespace dpdl {

// Unconstrained parameters of the multi-Gaussian prototypes (MGP):
//   alpha = softmax(logits), mu = means, sigma = exp(log_variances).
// sigma holds diagonal variances, not standard deviations.
struct MgpParams {
  std::vector<double> logits;  // C
  Matrix means;                // C x D
  Matrix log_variances;        // C x D
  double epsilon = 1e-3;       // bridge volatility

  std::size_t components() const { return logits.size(); }
  std::size_t dim() const { return means.cols; }

  void validate() const;
  friend bool operator==(const MgpParams&, const MgpParams&) = default;
};

// Realized (constrained) prototypes. Immutable by convention.
struct Mgp {
  std::vector<double> alpha;
  std::vector<double> log_alpha;
  Matrix mu;
  Matrix sigma;
  Matrix log_sigma;
  double epsilon = 1e-3;

  std::size_t components() const { return alpha.size(); }
  std::size_t dim() const { return mu.cols; }

  // log N(y; mu_c, diag sigma_c)
  double component_log_density(std::size_t c, std::span<const double> y) const;
  // log phi_1(y) = log sum_c alpha_c N(y; mu_c, sigma_c)
  double log_density(std::span<const double> y) const;
};

Mgp mgp_realize(const MgpParams& params);

struct PrototypeInit {
  Matrix codebook;                       // C x D
  std::vector<std::size_t> assignment;   // nearest codeword per input
  double quantization_error = 0.0;       // mean squared distance to codeword
  std::vector<double> error_history;     // error after each Lloyd iteration
};

// k-means++ seeding followed by Lloyd iterations (assign to nearest codeword
// in L2, move codewords to centroids). An empty cluster is re-seeded with the
// input farthest from its current codeword. Stops early when assignments stop
// changing. error_history is non-increasing.
PrototypeInit vq_init(std::span<const std::vector<double>> features, std::size_t components,
                      std::size_t max_iters, std::uint64_t seed);

// means = codebook, log-variances 0 (sigma = 1), logits 0 (uniform alpha).
MgpParams mgp_new(const PrototypeInit& init, double epsilon);

}  // namespace dpdl
