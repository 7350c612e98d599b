#include "dpdl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "dpdl/error.hpp"
#include "dpdl/parallel.hpp"

namespace dpdl {

double auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auc: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l == Label::anomaly;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auc: both classes must be present");
  for (double s : scores)
    if (std::isnan(s)) throw ValidationError("auc: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Sum of midranks of the positives; ranks doubled so they stay integral.
  std::uint64_t rank_sum2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t midrank2 = i + j + 1;  // 2 * mean of 1-based ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == Label::anomaly) rank_sum2 += midrank2;
    i = j;
  }
  const std::uint64_t u2 = rank_sum2 - std::uint64_t{n_pos} * (n_pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::pair<double, double> mean_and_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double x : v) sum += x;
  double mean = sum / static_cast<double>(v.size());
  // One correction pass; identical values then give mean == value and std 0.
  double resid = 0.0;
  for (double x : v) resid += x - mean;
  mean += resid / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::vector<double> nearest_prototype_scores(const Dataset& dataset, const SplitPlan& split,
                                             std::span<const std::size_t> items,
                                             std::size_t components, std::size_t vq_iters,
                                             std::uint64_t seed) {
  std::vector<std::vector<double>> normals;
  normals.reserve(split.train_normal_ids.size());
  for (auto i : split.train_normal_ids) normals.push_back(dataset.items[i].values);
  const auto init = vq_init(normals, components, vq_iters, seed);
  std::vector<double> out;
  out.reserve(items.size());
  for (auto i : items) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < init.codebook.rows; ++c)
      best = std::min(best, squared_distance(dataset.items[i].values, init.codebook.row(c)));
    out.push_back(best);
  }
  return out;
}

std::vector<double> score_items(const Checkpoint& model, const Dataset& dataset,
                                std::span<const std::size_t> items) {
  if (model.dims != dataset.dims) throw ValidationError("score: checkpoint dims differ from dataset");
  const Mgp mgp = mgp_realize(model.mgp);
  std::vector<double> out(items.size());
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (items[k] >= dataset.size()) throw ValidationError("score: item index out of range");
    out[k] = anomaly_score(mgp, model.heads, dataset.items[items[k]]);
  }
  return out;
}

namespace {

std::uint64_t train_seed_for(std::uint64_t split_seed) { return derive_seed(split_seed, 0x7261696e); }

}  // namespace

Report run_experiment(const Dataset& dataset, Protocol protocol, std::size_t anomaly_budget,
                      std::size_t n_runs, std::uint64_t base_seed, const TrainConfig& config,
                      std::vector<RunResult>* runs) {
  if (n_runs == 0) throw ValidationError("run_experiment: n_runs must be >= 1");
  config.validate();
  std::vector<RunResult> results(n_runs);
  parallel_for(n_runs, [&](std::size_t k) {
    RunResult& r = results[k];
    r.split_seed = base_seed + k;
    const SplitPlan split = make_splits(dataset, protocol, anomaly_budget, r.split_seed);
    TrainConfig cfg = config;
    cfg.protocol = protocol;
    cfg.M = anomaly_budget;
    cfg.seed = train_seed_for(r.split_seed);
    r.checkpoint = train(dataset, split, cfg).checkpoint;

    std::vector<Label> labels;
    for (auto i : split.test_ids) labels.push_back(dataset.items[i].label);
    r.auc = auc(score_items(r.checkpoint, dataset, split.test_ids), labels);
    // Same codebook as the model's initialization.
    r.baseline_auc = auc(nearest_prototype_scores(dataset, split, split.test_ids, cfg.C,
                                                  cfg.vq_iters, derive_seed(cfg.seed, 1)),
                         labels);
  });

  Report rep;
  rep.dataset_name = dataset.name;
  rep.protocol = protocol;
  rep.anomaly_budget = anomaly_budget;
  for (const auto& r : results) {
    rep.seeds.push_back(r.split_seed);
    rep.aucs.push_back(r.auc);
    rep.baseline_aucs.push_back(r.baseline_auc);
  }
  std::tie(rep.mean, rep.std) = mean_and_std(rep.aucs);
  std::tie(rep.baseline_mean, rep.baseline_std) = mean_and_std(rep.baseline_aucs);
  if (runs) *runs = std::move(results);
  return rep;
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string f4(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string report_text(const Report& r) {
  std::ostringstream os;
  os << "dataset: " << r.dataset_name << "\n"
     << "protocol: " << to_string(r.protocol) << "\n"
     << "anomaly budget (M): " << r.anomaly_budget << "\n"
     << "runs: " << r.aucs.size() << "\n";
  for (std::size_t k = 0; k < r.aucs.size(); ++k)
    os << "  run " << k << "  seed " << r.seeds[k] << "  auc " << f4(r.aucs[k]) << "  baseline "
       << f4(r.baseline_aucs[k]) << "\n";
  os << "auc: " << f4(r.mean) << " +/- " << f4(r.std) << "\n"
     << "nearest-prototype baseline: " << f4(r.baseline_mean) << " +/- " << f4(r.baseline_std) << "\n";
  return os.str();
}

std::string report_csv(const Report& r) {
  std::ostringstream os;
  os << "run,seed,protocol,m,auc,baseline_auc\n";
  for (std::size_t k = 0; k < r.aucs.size(); ++k)
    os << k << ',' << r.seeds[k] << ',' << to_string(r.protocol) << ',' << r.anomaly_budget << ','
       << g17(r.aucs[k]) << ',' << g17(r.baseline_aucs[k]) << '\n';
  os << "mean,," << to_string(r.protocol) << ',' << r.anomaly_budget << ',' << g17(r.mean) << ','
     << g17(r.baseline_mean) << '\n';
  os << "std,," << to_string(r.protocol) << ',' << r.anomaly_budget << ',' << g17(r.std) << ','
     << g17(r.baseline_std) << '\n';
  return os.str();
}

}  // namespace dpdl
