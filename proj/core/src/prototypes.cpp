#include "dpdl/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpdl/error.hpp"
#include "dpdl/rng.hpp"

namespace dpdl {

void MgpParams::validate() const {
  const std::size_t C = logits.size();
  if (C == 0) throw ValidationError("MGP: need at least one component");
  if (means.rows != C || log_variances.rows != C || means.cols != log_variances.cols)
    throw ValidationError("MGP: parameter shapes disagree");
  if (means.cols == 0) throw ValidationError("MGP: dimension must be >= 1");
  if (!(epsilon > 0) || !std::isfinite(epsilon)) throw ValidationError("MGP: epsilon must be > 0");
  if (!all_finite(logits) || !all_finite(means.data) || !all_finite(log_variances.data))
    throw ValidationError("MGP: non-finite parameters");
}

Mgp mgp_realize(const MgpParams& params) {
  params.validate();
  Mgp m;
  const double lse = log_sum_exp(params.logits);
  m.log_alpha.resize(params.logits.size());
  m.alpha.resize(params.logits.size());
  for (std::size_t c = 0; c < params.logits.size(); ++c) {
    m.log_alpha[c] = params.logits[c] - lse;
    m.alpha[c] = std::exp(m.log_alpha[c]);
  }
  m.mu = params.means;
  m.log_sigma = params.log_variances;
  m.sigma = Matrix(params.log_variances.rows, params.log_variances.cols);
  for (std::size_t i = 0; i < m.sigma.data.size(); ++i)
    m.sigma.data[i] = std::exp(params.log_variances.data[i]);
  m.epsilon = params.epsilon;
  return m;
}

double Mgp::component_log_density(std::size_t c, std::span<const double> y) const {
  const auto mu_c = mu.row(c);
  const auto sig_c = sigma.row(c);
  const auto lsig_c = log_sigma.row(c);
  double s = 0.0;
  for (std::size_t d = 0; d < y.size(); ++d) {
    const double diff = y[d] - mu_c[d];
    s += kLog2Pi + lsig_c[d] + diff * diff / sig_c[d];
  }
  return -0.5 * s;
}

double Mgp::log_density(std::span<const double> y) const {
  std::vector<double> terms(components());
  for (std::size_t c = 0; c < components(); ++c)
    terms[c] = log_alpha[c] + component_log_density(c, y);
  return log_sum_exp(terms);
}

PrototypeInit vq_init(std::span<const std::vector<double>> features, std::size_t components,
                      std::size_t max_iters, std::uint64_t seed) {
  const std::size_t n = features.size();
  if (components == 0) throw ValidationError("vq_init: C must be >= 1");
  if (n < components)
    throw ValidationError("vq_init: " + std::to_string(n) + " features for C = " +
                          std::to_string(components));
  if (max_iters == 0) throw ValidationError("vq_init: max_iters must be >= 1");
  const std::size_t D = features[0].size();
  for (const auto& f : features)
    if (f.size() != D) throw ValidationError("vq_init: features differ in dimension");

  Rng rng(seed);
  Matrix code(components, D);

  // k-means++ seeding
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.index(n);
  std::copy(features[first].begin(), features[first].end(), code.row(0).begin());
  for (std::size_t c = 1; c < components; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(features[i], code.row(c - 1)));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > target && nearest[i] > 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);
    }
    std::copy(features[pick].begin(), features[pick].end(), code.row(c).begin());
  }

  PrototypeInit init;
  init.assignment.assign(n, 0);
  std::vector<double> dist(n);
  auto assign = [&] {
    bool changed = false;
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(features[i], code.row(0));
      for (std::size_t c = 1; c < components; ++c) {
        const double d = squared_distance(features[i], code.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      changed = changed || best != init.assignment[i];
      init.assignment[i] = best;
      dist[i] = best_d;
      err += best_d;
    }
    return std::pair{changed, err / static_cast<double>(n)};
  };

  init.quantization_error = assign().second;
  init.error_history.push_back(init.quantization_error);
  for (std::size_t it = 0; it < max_iters; ++it) {
    // centroid update
    Matrix sum(components, D);
    std::vector<std::size_t> count(components, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = sum.row(init.assignment[i]);
      for (std::size_t d = 0; d < D; ++d) row[d] += features[i][d];
      ++count[init.assignment[i]];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < components; ++c) {
      if (count[c] > 0) {
        auto row = code.row(c);
        for (std::size_t d = 0; d < D; ++d) row[d] = sum(c, d) / static_cast<double>(count[c]);
      } else {
        // empty cluster: move it onto the worst-served input
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i)
          if (!taken[i] && dist[i] > far_d) {
            far_d = dist[i];
            far = i;
          }
        taken[far] = true;
        dist[far] = 0.0;
        std::copy(features[far].begin(), features[far].end(), code.row(c).begin());
      }
    }
    const auto [changed, err] = assign();
    init.error_history.push_back(err);
    init.quantization_error = err;
    if (!changed) break;
  }
  init.codebook = std::move(code);
  return init;
}

MgpParams mgp_new(const PrototypeInit& init, double epsilon) {
  if (!(epsilon > 0) || !std::isfinite(epsilon))
    throw ValidationError("mgp_new: epsilon must be > 0");
  if (init.codebook.rows == 0 || init.codebook.cols == 0)
    throw ValidationError("mgp_new: empty codebook");
  MgpParams p;
  p.logits.assign(init.codebook.rows, 0.0);
  p.means = init.codebook;
  p.log_variances = Matrix(init.codebook.rows, init.codebook.cols, 0.0);
  p.epsilon = epsilon;
  p.validate();
  return p;
}

}  // namespace dpdl
