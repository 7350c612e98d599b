#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace dpdl::test {

double sort_topk_mean(std::vector<double> scores, double fraction) {
  std::sort(scores.begin(), scores.end(), std::greater<>());
  std::size_t k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(scores.size())));
  k = std::max<std::size_t>(k, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += scores[i];
  return s / static_cast<double>(k);
}

double pairwise_auc(std::span<const double> scores, std::span<const Label> labels) {
  double credit = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < scores.size(); ++a) {
    if (labels[a] != Label::anomaly) continue;
    for (std::size_t n = 0; n < scores.size(); ++n) {
      if (labels[n] != Label::normal) continue;
      ++pairs;
      if (scores[a] > scores[n]) credit += 1.0;
      else if (scores[a] == scores[n]) credit += 0.5;
    }
  }
  return credit / static_cast<double>(pairs);
}

std::vector<double> loop_pixel_scores(const LinearHead& head, const FeatureMap& fm) {
  std::vector<double> out;
  for (std::uint32_t h = 0; h < fm.dims.height; ++h)
    for (std::uint32_t w = 0; w < fm.dims.width; ++w) {
      double s = head.bias;
      for (std::uint32_t c = 0; c < fm.dims.channels; ++c) s += head.weights[c] * fm.at(h, w, c);
      out.push_back(s);
    }
  return out;
}

double normal_log_pdf(double y, double mean, double var) {
  const double pi = std::acos(-1.0);
  return -0.5 * std::log(2.0 * pi * var) - (y - mean) * (y - mean) / (2.0 * var);
}

double mixture_log_pdf(const Mgp& mgp, std::span<const double> y) {
  double m = -INFINITY;
  std::vector<double> terms;
  for (std::size_t c = 0; c < mgp.components(); ++c) {
    double t = std::log(mgp.alpha[c]);
    for (std::size_t d = 0; d < y.size(); ++d) t += normal_log_pdf(y[d], mgp.mu(c, d), mgp.sigma(c, d));
    terms.push_back(t);
    m = std::max(m, t);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

double simpson_log_integral(const std::function<double(double)>& log_f, double lo, double hi,
                            std::size_t nodes) {
  if (nodes % 2 == 0) ++nodes;
  const double h = (hi - lo) / static_cast<double>(nodes - 1);
  std::vector<double> v(nodes);
  double m = -INFINITY;
  for (std::size_t i = 0; i < nodes; ++i) {
    v[i] = log_f(lo + h * static_cast<double>(i));
    m = std::max(m, v[i]);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < nodes; ++i) {
    const double w = (i == 0 || i + 1 == nodes) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * std::exp(v[i] - m);
  }
  return m + std::log(s * h / 3.0);
}

MgpParams random_params(Rng& rng, std::size_t C, std::size_t D, double eps, ParamRanges r) {
  MgpParams p;
  p.epsilon = eps;
  p.logits.resize(C);
  p.means = Matrix(C, D);
  p.log_variances = Matrix(C, D);
  for (auto& v : p.logits) v = rng.uniform(-r.logit, r.logit);
  for (auto& v : p.means.data) v = rng.uniform(-r.mean, r.mean);
  for (auto& v : p.log_variances.data) v = rng.uniform(r.log_var_lo, r.log_var_hi);
  return p;
}

FeatureMap random_map(Rng& rng, const GridDims& dims, double scale, Label label) {
  FeatureMap fm;
  fm.dims = dims;
  fm.label = label;
  fm.values.resize(dims.size());
  for (auto& v : fm.values) v = scale * rng.normal();
  return fm;
}

std::vector<std::vector<double>> random_vectors(Rng& rng, std::size_t n, std::size_t d, double scale) {
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (auto& x : out)
    for (auto& v : x) v = scale * rng.normal();
  return out;
}

Dataset small_dataset(std::uint64_t seed, std::uint32_t clusters, std::uint32_t per_cluster,
                      std::uint32_t anomaly_classes, std::uint32_t per_class) {
  SynthConfig cfg;
  cfg.n_normal_clusters = clusters;
  cfg.normal_per_cluster = per_cluster;
  cfg.n_anomaly_classes = anomaly_classes;
  cfg.anomaly_per_class = per_class;
  cfg.dims = {2, 2, 3};
  cfg.anomaly_shift = 4.0;
  cfg.anomaly_patch_fraction = 0.25;
  return synth_generate(cfg, seed);
}

}  // namespace dpdl::test
