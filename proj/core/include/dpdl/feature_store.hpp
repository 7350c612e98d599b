#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpdl/rng.hpp"

namespace dpdl {

enum class Label : std::uint8_t { normal = 0, anomaly = 1 };

inline double label_value(Label l) { return l == Label::anomaly ? 1.0 : 0.0; }

// Spatial extent (H', W') and channel count d of a feature grid.
struct GridDims {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;

  std::size_t cells() const { return std::size_t{height} * width; }
  std::size_t size() const { return cells() * channels; }

  friend bool operator==(const GridDims&, const GridDims&) = default;
};

// Class id given to CutMix outputs; real anomaly classes start at 1.
inline constexpr std::uint32_t kPseudoAnomalyClass = 0xFFFFFFFFu;

// One sample's H'xW'xd feature grid stored row-major (height, width, channel),
// so values is already the flattened D-vector.
struct FeatureMap {
  GridDims dims;
  std::vector<double> values;
  Label label = Label::normal;
  std::uint32_t class_id = 0;
  std::string source_id;

  std::span<const double> flat() const { return values; }
  std::span<const double> cell(std::size_t i) const {
    return {values.data() + i * dims.channels, dims.channels};
  }
  double at(std::size_t h, std::size_t w, std::size_t c) const {
    return values[(h * dims.width + w) * dims.channels + c];
  }

  bool is_anomaly() const { return label == Label::anomaly; }
  void validate() const;
};

struct Dataset {
  std::vector<FeatureMap> items;
  GridDims dims;
  std::string name;
  std::uint64_t seed = 0;

  // Non-empty, at least one normal, consistent dims, finite values.
  void validate() const;
  std::size_t size() const { return items.size(); }
};

// ---------------------------------------------------------------------------
// DPDLFEAT binary format (little-endian):
//   "DPDLFEAT" | u32 version=1 | u64 N | u32 H' | u32 W' | u32 d
//   N records: u32 class_id | u8 label | 3 zero bytes | H'*W'*d float32
// Values are stored as float32; a dataset whose values are float32-exact
// round-trips bit-identically. source_id is not stored: read_feature_file
// assigns each item its decimal record index.
// ---------------------------------------------------------------------------
inline constexpr std::size_t kFeatureHeaderBytes = 32;
inline constexpr std::size_t kFeatureRecordHeaderBytes = 8;

Dataset read_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const Dataset& dataset);

std::vector<std::uint8_t> encode_feature_file(const Dataset& dataset);
Dataset decode_feature_file(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Synthetic surrogate for backbone features.
//
// Normal items come from a mixture of axis-aligned Gaussians over the whole
// grid: cluster means ~ cluster_scale * N(0, 1) entrywise, item = mean +
// noise * N(0, 1). Anomaly class k (class_id k+1) starts from normal cluster
// k mod n_normal_clusters and adds a fixed displacement on a class-specific
// rectangle of cells covering about anomaly_patch_fraction of the grid; the
// displacement in each affected cell is anomaly_shift * noise * u_k where u_k
// is a unit direction with non-negative entries (defect features are
// activations, not cancellations). The first n_noisy_channels channels of
// every cell carry noise * noisy_channel_scale instead of noise: channels with
// large normal variation that say nothing about defects. Values are rounded
// to float32 so the dataset survives a DPDLFEAT round-trip unchanged.
// ---------------------------------------------------------------------------
struct SynthConfig {
  std::uint32_t n_normal_clusters = 2;
  std::uint32_t n_anomaly_classes = 3;
  std::uint32_t normal_per_cluster = 200;
  std::uint32_t anomaly_per_class = 20;
  GridDims dims{4, 4, 8};
  double cluster_scale = 1.0;
  double noise = 1.0;
  double anomaly_shift = 10.0;
  double anomaly_patch_fraction = 1.0;
  std::uint32_t n_noisy_channels = 0;
  double noisy_channel_scale = 1.0;
  std::string name = "synthetic";

  void validate() const;
};

SynthConfig synth_config_from_file(const std::string& path);
SynthConfig synth_config_from_text(const std::string& text);

Dataset synth_generate(const SynthConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Sampling protocols
// ---------------------------------------------------------------------------
enum class Protocol { general, hard };

Protocol parse_protocol(const std::string& text);
std::string to_string(Protocol p);

struct SplitPlan {
  std::vector<std::size_t> train_normal_ids;
  std::vector<std::size_t> train_anomaly_ids;
  std::vector<std::size_t> test_ids;
  Protocol protocol = Protocol::general;
  std::size_t anomaly_budget = 0;  // M
  std::vector<std::uint32_t> held_out_classes;  // hard protocol only
  std::uint64_t seed = 0;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

// Normals are shuffled and split 3:1 with floor(n/4) going to test. General:
// M anomalies drawn without replacement across all anomaly items. Hard: one
// anomaly class is picked uniformly and M items drawn from it; every other
// anomaly class goes to test and is listed in held_out_classes. Anomalies not
// used for training are test items (hard: only those outside the picked class).
// M = 0 is allowed (no training anomalies).
SplitPlan make_splits(const Dataset& dataset, Protocol protocol, std::size_t anomaly_budget,
                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// CutMix on the feature grid
// ---------------------------------------------------------------------------
struct CutRect {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
};

// Rectangle with area close to area_fraction * cells and a random position.
// Side lengths are rounded from sqrt(area_fraction) * side and clamped to the
// grid; fraction 0 gives an empty rectangle and 1 the full grid.
CutRect sample_cut_rect(const GridDims& dims, double area_fraction, Rng& rng);

// base with `rect` replaced by donor's cells; label anomaly, pseudo class id.
FeatureMap cutmix_with_rect(const FeatureMap& base, const FeatureMap& donor, const CutRect& rect);

// Area fraction ~ U(0.02, 0.4), uniformly placed rectangle.
FeatureMap cutmix_pseudo_anomaly(const FeatureMap& base, const FeatureMap& donor, Rng& rng);

}  // namespace dpdl
