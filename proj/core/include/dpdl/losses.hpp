#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dpdl/numeric.hpp"
#include "dpdl/prototypes.hpp"

namespace dpdl {

// Gradient with the shapes of MgpParams (epsilon is not learned).
struct MgpGradient {
  std::vector<double> logits;
  Matrix means;
  Matrix log_variances;

  static MgpGradient zeros_like(const MgpParams& p);
  void add(const MgpGradient& other, double scale = 1.0);
  bool all_finite() const;
};

struct LossValueWithGrads {
  double value = 0.0;
  MgpGradient mgp;  // empty for the dispersion loss
  std::vector<std::vector<double>> features;  // d loss / d input, per sample
};

// (1/N) sum_i log ϖ(x_i) - (1/C) sum_c log phi_1(mu_c), with analytic
// gradients for the raw parameters and for each x_i.
LossValueWithGrads loss_dpl_normal(const MgpParams& params,
                                   std::span<const std::vector<double>> batch);

// (1/C) sum_c log phi_1(mu_c) - (1/M) sum_i log ϖ(x_i).
LossValueWithGrads loss_dpl_anomaly(const MgpParams& params,
                                    std::span<const std::vector<double>> batch);

// x / |x|_2. Throws ValidationError for the zero vector.
std::vector<double> unitize(std::span<const double> x);

// Dispersion loss on unit vectors:
//   (1/U) sum_i log[ (1/(U-1)) sum_{j != i} exp(kappa <x_i, x_j>) ].
// Feature gradients are projected onto the tangent space of the sphere.
LossValueWithGrads loss_dfl(std::span<const std::vector<double>> unit_features, double kappa);

}  // namespace dpdl
