#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dpdl/bridge.hpp"
#include "dpdl/feature_store.hpp"
#include "dpdl/losses.hpp"
#include "dpdl/prototypes.hpp"

namespace dpdl {

// theta^T v + b applied to one d-dimensional cell vector.
struct LinearHead {
  std::vector<double> weights;
  double bias = 0.0;

  explicit LinearHead(std::size_t dim = 0) : weights(dim, 0.0) {}
  double operator()(std::span<const double> v) const { return dot(weights, v) + bias; }

  friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

// How the residual (psi - mu_c*) is standardized: by sqrt(sigma_c*) or by
// sigma_c* itself.
enum class ResidualScale { std_dev, variance };

ResidualScale parse_residual_scale(const std::string& text);
std::string to_string(ResidualScale s);

struct ScoringHeads {
  LinearHead anomaly;   // per-cell scorer, top-K pooled
  LinearHead normal;    // scores the mean cell vector; high means normal
  LinearHead residual;  // per-cell scorer on the residual grid, top-K pooled
  double topk_fraction = 0.10;
  ResidualScale residual_scale = ResidualScale::std_dev;

  explicit ScoringHeads(std::size_t channels = 0)
      : anomaly(channels), normal(channels), residual(channels) {}

  void validate() const;
  friend bool operator==(const ScoringHeads&, const ScoringHeads&) = default;
};

// Logit of every spatial cell, row-major over (H', W').
std::vector<double> pixel_scores(const LinearHead& head, const GridDims& dims,
                                 std::span<const double> grid);
std::vector<double> pixel_scores(const LinearHead& head, const FeatureMap& fm);

std::size_t topk_count(std::size_t n, double fraction);

// Mean of the K = max(1, floor(fraction n)) largest scores.
double topk_mean(std::span<const double> scores, double fraction);

// Indices of the K largest scores; ties go to the lowest index.
std::vector<std::size_t> topk_indices(std::span<const double> scores, double fraction);

std::vector<double> mean_cell(const FeatureMap& fm);

struct HeadGrad {
  std::vector<double> weights;
  double bias = 0.0;
};

struct HeadLoss {
  double value = 0.0;
  HeadGrad head;
  MgpGradient mgp;  // residual head only
};

// BCE(top-K mean of per-cell anomaly logits, y). Only the selected cells
// receive gradient.
HeadLoss head_loss_anomaly(const ScoringHeads& heads, const FeatureMap& fm, double y);

// BCE(normal head on the mean cell vector, 1 - y): the normal head is trained
// as a normality classifier so that it can be subtracted at inference.
HeadLoss head_loss_normal(const ScoringHeads& heads, const FeatureMap& fm, double y);

// Residual grid r = (psi(x) - mu_c*) / scale(sigma_c*), reshaped to H'xW'xd.
struct ResidualGrid {
  std::vector<double> values;
  std::vector<double> psi;
  std::size_t mode_index = 0;
};
ResidualGrid residual_grid(const Mgp& mgp, const FeatureMap& fm, ResidualScale scale);

// BCE(top-K mean of per-cell residual logits, y) with gradients for the
// residual head and for the raw prototype parameters through psi (posterior
// mean endpoint), mu_c* and sigma_c*. The mode index c* is piecewise constant.
// With endpoint = stochastic, psi is one reparameterized draw
// mean_c + sqrt(var_c) z for c ~ w, and gradients flow through mean_c and
// var_c of the drawn component only.
HeadLoss head_loss_residual(const ScoringHeads& heads, const MgpParams& params,
                            const FeatureMap& fm, double y,
                            EndpointMode endpoint = EndpointMode::deterministic,
                            Rng* rng = nullptr);

// Image-level score: topk(S_a) + topk(S_r) - S_n(mean cell).
double anomaly_score(const Mgp& mgp, const ScoringHeads& heads, const FeatureMap& fm);

}  // namespace dpdl
