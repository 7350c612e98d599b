#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpdl/feature_store.hpp"
#include "dpdl/training.hpp"

namespace dpdl {

// Mann-Whitney AUC: fraction of (anomaly, normal) pairs ranked correctly,
// ties counted 1/2. Rank-based O(n log n). Throws UndefinedMetricError when
// only one class is present.
double auc(std::span<const double> scores, std::span<const Label> labels);

struct RunResult {
  std::uint64_t split_seed = 0;
  double auc = 0.0;
  double baseline_auc = 0.0;
  Checkpoint checkpoint;
};

struct Report {
  std::string dataset_name;
  Protocol protocol = Protocol::general;
  std::size_t anomaly_budget = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> aucs;
  std::vector<double> baseline_aucs;
  double mean = 0.0;
  double std = 0.0;  // sample std (n-1); 0 when there is one run
  double baseline_mean = 0.0;
  double baseline_std = 0.0;
  double runtime_seconds = 0.0;  // not written to report files
};

// mean and n-1 standard deviation; std is 0 for fewer than two values.
std::pair<double, double> mean_and_std(std::span<const double> values);

// Nearest-prototype distance: min_c |x - e_c|^2 over a VQ codebook fitted on
// the train normals with the same C and seed as training.
std::vector<double> nearest_prototype_scores(const Dataset& dataset, const SplitPlan& split,
                                             std::span<const std::size_t> items,
                                             std::size_t components, std::size_t vq_iters,
                                             std::uint64_t seed);

std::vector<double> score_items(const Checkpoint& model, const Dataset& dataset,
                                std::span<const std::size_t> items);

// Run k uses split seed base_seed + k and a training seed derived from it;
// train, score the test split, compute AUC (and the baseline AUC on the same
// split). Runs execute in parallel and are assembled in run order.
Report run_experiment(const Dataset& dataset, Protocol protocol, std::size_t anomaly_budget,
                      std::size_t n_runs, std::uint64_t base_seed, const TrainConfig& config,
                      std::vector<RunResult>* runs = nullptr);

std::string report_text(const Report& report);
std::string report_csv(const Report& report);

}  // namespace dpdl
