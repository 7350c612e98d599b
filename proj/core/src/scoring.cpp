#include "dpdl/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpdl/error.hpp"

namespace dpdl {

ResidualScale parse_residual_scale(const std::string& text) {
  if (text == "std") return ResidualScale::std_dev;
  if (text == "var") return ResidualScale::variance;
  throw ValidationError("unknown residual scale `" + text + "` (expected std|var)");
}

std::string to_string(ResidualScale s) { return s == ResidualScale::std_dev ? "std" : "var"; }

void ScoringHeads::validate() const {
  const std::size_t d = anomaly.weights.size();
  if (d == 0 || normal.weights.size() != d || residual.weights.size() != d)
    throw ValidationError("scoring heads: weight vectors must share a non-zero length");
  if (!(topk_fraction > 0.0 && topk_fraction <= 1.0))
    throw ValidationError("scoring heads: topk_fraction must be in (0, 1]");
  for (const auto* h : {&anomaly, &normal, &residual})
    if (!all_finite(h->weights) || !std::isfinite(h->bias))
      throw ValidationError("scoring heads: non-finite parameters");
}

std::vector<double> pixel_scores(const LinearHead& head, const GridDims& dims,
                                 std::span<const double> grid) {
  if (head.weights.size() != dims.channels || grid.size() != dims.size())
    throw ValidationError("pixel_scores: head/grid dimension mismatch");
  std::vector<double> out(dims.cells());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = head(grid.subspan(i * dims.channels, dims.channels));
  return out;
}

std::vector<double> pixel_scores(const LinearHead& head, const FeatureMap& fm) {
  return pixel_scores(head, fm.dims, fm.values);
}

std::size_t topk_count(std::size_t n, double fraction) {
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

std::vector<std::size_t> topk_indices(std::span<const double> scores, double fraction) {
  if (scores.empty()) throw ValidationError("topk: empty score grid");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("topk: fraction must be in (0, 1]");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t k = topk_count(scores.size(), fraction);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

double topk_mean(std::span<const double> scores, double fraction) {
  const auto idx = topk_indices(scores, fraction);
  double s = 0.0;
  for (auto i : idx) s += scores[i];
  return s / static_cast<double>(idx.size());
}

std::vector<double> mean_cell(const FeatureMap& fm) {
  std::vector<double> m(fm.dims.channels, 0.0);
  for (std::size_t i = 0; i < fm.dims.cells(); ++i) {
    const auto c = fm.cell(i);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += c[k];
  }
  for (auto& v : m) v /= static_cast<double>(fm.dims.cells());
  return m;
}

namespace {

// BCE over the top-K pooled per-cell logits of `grid`; fills the head
// gradient and, if requested, d loss / d grid.
double pooled_bce(const LinearHead& head, const GridDims& dims, std::span<const double> grid,
                  double fraction, double y, HeadGrad& hg, std::vector<double>* grid_grad) {
  const auto scores = pixel_scores(head, dims, grid);
  const auto top = topk_indices(scores, fraction);
  double z = 0.0;
  for (auto i : top) z += scores[i];
  const double k = static_cast<double>(top.size());
  z /= k;
  const double dz = sigmoid(z) - y;
  const std::size_t ch = dims.channels;
  hg.weights.assign(ch, 0.0);
  hg.bias = dz;
  if (grid_grad) grid_grad->assign(grid.size(), 0.0);
  for (auto i : top) {
    for (std::size_t c = 0; c < ch; ++c) {
      hg.weights[c] += dz / k * grid[i * ch + c];
      if (grid_grad) (*grid_grad)[i * ch + c] = dz / k * head.weights[c];
    }
  }
  return bce_with_logits(z, y);
}

double scale_power(ResidualScale s) { return s == ResidualScale::std_dev ? 0.5 : 1.0; }

}  // namespace

HeadLoss head_loss_anomaly(const ScoringHeads& heads, const FeatureMap& fm, double y) {
  HeadLoss out;
  out.value = pooled_bce(heads.anomaly, fm.dims, fm.values, heads.topk_fraction, y, out.head, nullptr);
  return out;
}

HeadLoss head_loss_normal(const ScoringHeads& heads, const FeatureMap& fm, double y) {
  const auto v = mean_cell(fm);
  if (v.size() != heads.normal.weights.size())
    throw ValidationError("head_loss_normal: channel mismatch");
  const double z = heads.normal(v);
  const double target = 1.0 - y;
  const double dz = sigmoid(z) - target;
  HeadLoss out;
  out.value = bce_with_logits(z, target);
  out.head.weights.resize(v.size());
  for (std::size_t c = 0; c < v.size(); ++c) out.head.weights[c] = dz * v[c];
  out.head.bias = dz;
  return out;
}

ResidualGrid residual_grid(const Mgp& mgp, const FeatureMap& fm, ResidualScale scale) {
  const auto cond = conditional_plan(mgp, fm.flat());
  ResidualGrid out;
  out.psi = sample_endpoint(cond, EndpointMode::deterministic);
  out.mode_index = posterior_mode_index(mgp, out.psi);
  const double p = scale_power(scale);
  out.values.resize(out.psi.size());
  for (std::size_t d = 0; d < out.psi.size(); ++d)
    out.values[d] = (out.psi[d] - mgp.mu(out.mode_index, d)) /
                    std::exp(p * mgp.log_sigma(out.mode_index, d));
  return out;
}

HeadLoss head_loss_residual(const ScoringHeads& heads, const MgpParams& params,
                            const FeatureMap& fm, double y, EndpointMode endpoint, Rng* rng) {
  const Mgp mgp = mgp_realize(params);
  const auto x = fm.flat();
  const auto cond = conditional_plan(mgp, x);
  const std::size_t C = mgp.components(), D = mgp.dim();
  const double eps = mgp.epsilon;

  std::vector<double> psi;
  std::size_t drawn = 0;
  std::vector<double> z;
  if (endpoint == EndpointMode::deterministic) {
    psi = cond.mean();
  } else {
    if (!rng) throw ValidationError("head_loss_residual: stochastic endpoint needs an Rng");
    const double u = rng->uniform();
    double acc = 0.0;
    drawn = C - 1;
    for (std::size_t c = 0; c < C; ++c) {
      acc += cond.weights[c];
      if (u < acc) {
        drawn = c;
        break;
      }
    }
    z.resize(D);
    psi.resize(D);
    for (std::size_t d = 0; d < D; ++d) {
      z[d] = rng->normal();
      psi[d] = cond.means(drawn, d) + std::sqrt(cond.variances(drawn, d)) * z[d];
    }
  }
  const std::size_t k = posterior_mode_index(mgp, psi);
  const double p = scale_power(heads.residual_scale);
  std::vector<double> r(D), inv_scale(D);
  for (std::size_t d = 0; d < D; ++d) {
    inv_scale[d] = std::exp(-p * mgp.log_sigma(k, d));
    r[d] = (psi[d] - mgp.mu(k, d)) * inv_scale[d];
  }

  HeadLoss out;
  std::vector<double> dr;
  out.value = pooled_bce(heads.residual, fm.dims, r, heads.topk_fraction, y, out.head, &dr);

  out.mgp = MgpGradient::zeros_like(params);
  auto& g = out.mgp;
  std::vector<double> dpsi(D);
  for (std::size_t d = 0; d < D; ++d) {
    dpsi[d] = dr[d] * inv_scale[d];
    g.means(k, d) -= dpsi[d];
    g.log_variances(k, d) -= p * dr[d] * r[d];
  }
  if (endpoint == EndpointMode::deterministic) {
    // psi = sum_c w_c mean_c, mean_c = mu_c + sigma_c x / eps
    std::vector<double> beta(C, 0.0);
    double beta_bar = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t d = 0; d < D; ++d) beta[c] += dpsi[d] * cond.means(c, d);
      beta_bar += cond.weights[c] * beta[c];
    }
    for (std::size_t c = 0; c < C; ++c) {
      const double w = cond.weights[c];
      const double gamma = w * (beta[c] - beta_bar);
      g.logits[c] += gamma;
      for (std::size_t d = 0; d < D; ++d) {
        const double sig = mgp.sigma(c, d);
        g.means(c, d) += w * dpsi[d] + gamma * x[d] / eps;
        g.log_variances(c, d) +=
            w * dpsi[d] * sig * x[d] / eps + gamma * x[d] * x[d] * sig / (2.0 * eps * eps);
      }
    }
  } else {
    for (std::size_t d = 0; d < D; ++d) {
      const double sig = mgp.sigma(drawn, d);
      g.means(drawn, d) += dpsi[d];
      g.log_variances(drawn, d) += dpsi[d] * (sig * x[d] / eps + 0.5 * std::sqrt(sig) * z[d]);
    }
  }
  return out;
}

double anomaly_score(const Mgp& mgp, const ScoringHeads& heads, const FeatureMap& fm) {
  const double s_a = topk_mean(pixel_scores(heads.anomaly, fm), heads.topk_fraction);
  const auto res = residual_grid(mgp, fm, heads.residual_scale);
  const double s_r = topk_mean(pixel_scores(heads.residual, fm.dims, res.values), heads.topk_fraction);
  const double s_n = heads.normal(mean_cell(fm));
  return s_a + s_r - s_n;
}

}  // namespace dpdl
