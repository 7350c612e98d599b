#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dpdl/feature_store.hpp"
#include "dpdl/optimizer.hpp"
#include "dpdl/prototypes.hpp"
#include "dpdl/rng.hpp"
#include "dpdl/scoring.hpp"

namespace dpdl {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t iters_per_epoch = 20;
  std::size_t batch_size = 32;
  double learning_rate = 2e-4;
  double weight_decay = 1e-5;
  double lambda = 0.01;
  double kappa = 10.0;
  double epsilon = 1e-3;
  std::size_t C = 32;
  double topk_fraction = 0.10;
  std::size_t M = 10;
  Protocol protocol = Protocol::general;
  std::uint64_t seed = 0;
  ResidualScale residual_scale = ResidualScale::std_dev;
  double pseudo_anomaly_rate = 0.25;
  // Not part of the method's hyperparameters: ablation and reproducibility
  // switches.
  std::size_t vq_iters = 50;
  double grad_clip = 10.0;
  // Log-variances are projected into this box after every step. Both loss
  // terms of the prototype pair are unbounded in sigma (normals pull it to 0,
  // anomalies push it to infinity).
  double log_variance_min = -4.0;
  double log_variance_max = 4.0;
  bool freeze_heads = false;
  bool stochastic_endpoint = false;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Keys are the field names above. Unknown keys are a FormatError.
TrainConfig train_config_from_map(const std::map<std::string, std::string>& kv,
                                  TrainConfig base = {});
TrainConfig train_config_from_file(const std::string& path);
std::string train_config_to_text(const TrainConfig& config);

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainConfig config;
  GridDims dims;
  MgpParams mgp;
  ScoringHeads heads;
  OptimizerState optimizer;
  std::string rng_state;
  std::uint32_t epoch = 0;  // completed epochs

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

// Mean of each loss term over the iterations of one epoch.
struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double l_ma = 0, l_mn = 0, l_mr = 0, l_dpl_n = 0, l_dpl_a = 0, l_dfl = 0, total = 0;
};

std::string training_log_csv(const std::vector<EpochLog>& log);

// Loss terms of one batch. total = l_ma + l_mn + l_mr + l_dpl_n + l_dpl_a
// + lambda * l_dfl. Absent terms (no anomalies) are 0 and skipped.
struct BatchLoss {
  double l_ma = 0, l_mn = 0, l_mr = 0, l_dpl_n = 0, l_dpl_a = 0, l_dfl = 0, total = 0;
  bool has_anomalies = false;
};

struct Batch {
  std::vector<FeatureMap> normals;
  std::vector<FeatureMap> anomalies;  // observed
  std::vector<FeatureMap> pseudo;     // CutMix
};

// Gradients of the total objective for every learnable tensor.
struct ModelGradient {
  MgpGradient mgp;
  HeadGrad anomaly, normal, residual;
};

// Evaluates the six terms and their gradients on one batch. The dispersion
// term acts on fixed input features and contributes to the value only.
BatchLoss batch_objective(const MgpParams& mgp, const ScoringHeads& heads, const Batch& batch,
                          const TrainConfig& config, ModelGradient* grad, Rng* rng = nullptr);

// Draws one training batch: batch_size normals without replacement (all of
// them if fewer), every observed anomaly when there are at most 10 (else 10
// drawn without replacement), and round(pseudo_anomaly_rate * batch_size)
// CutMix samples on random train normals with donors from the whole train pool.
Batch draw_batch(const Dataset& dataset, const SplitPlan& split, const TrainConfig& config,
                 Rng& rng);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

struct TrainOptions {
  std::optional<Checkpoint> resume;       // continue from a saved state
  std::optional<std::size_t> stop_after;  // stop once this many epochs are done
};

// VQ initialization on the train normals, then epochs x iters AdamW steps on
// the total objective with global-norm clipping. Deterministic in
// (dataset, split, config). Throws NumericError naming the first non-finite
// loss term.
TrainResult train(const Dataset& dataset, const SplitPlan& split, const TrainConfig& config,
                  const TrainOptions& options = {});

}  // namespace dpdl
