#include "dpdl/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include "byte_io.hpp"
#include "dpdl/error.hpp"
#include "dpdl/key_value.hpp"
#include "dpdl/numeric.hpp"

namespace dpdl {
namespace {

constexpr char kMagic[8] = {'D', 'P', 'D', 'L', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

using detail::ByteReader;
using detail::ByteWriter;

void check_dims(const GridDims& d) {
  if (d.height == 0 || d.width == 0 || d.channels == 0)
    throw ValidationError("feature grid dims must be >= 1 (got " + std::to_string(d.height) + "x" +
                          std::to_string(d.width) + "x" + std::to_string(d.channels) + ")");
}

}  // namespace

void FeatureMap::validate() const {
  check_dims(dims);
  if (values.size() != dims.size())
    throw ValidationError("feature map has " + std::to_string(values.size()) +
                          " values, dims require " + std::to_string(dims.size()));
  if (!all_finite(values)) throw ValidationError("feature map contains non-finite values");
}

void Dataset::validate() const {
  if (items.empty()) throw ValidationError("dataset is empty");
  check_dims(dims);
  bool has_normal = false;
  for (const auto& it : items) {
    if (it.dims != dims) throw ValidationError("dataset items have inconsistent dims");
    it.validate();
    has_normal = has_normal || !it.is_anomaly();
  }
  if (!has_normal) throw ValidationError("dataset has no normal items");
}

std::vector<std::uint8_t> encode_feature_file(const Dataset& dataset) {
  dataset.validate();
  ByteWriter w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint64_t>(dataset.items.size());
  w.put<std::uint32_t>(dataset.dims.height);
  w.put<std::uint32_t>(dataset.dims.width);
  w.put<std::uint32_t>(dataset.dims.channels);
  for (const auto& it : dataset.items) {
    w.put<std::uint32_t>(it.class_id);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(it.label));
    w.put<std::uint8_t>(0);
    w.put<std::uint8_t>(0);
    w.put<std::uint8_t>(0);
    for (double v : it.values) w.put<float>(static_cast<float>(v));
  }
  return w.take();
}

Dataset decode_feature_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("DPDLFEAT: bad magic");
  ByteReader r(bytes, "DPDLFEAT");
  r.skip(sizeof kMagic);
  if (r.remaining() < kFeatureHeaderBytes - sizeof kMagic)
    throw CorruptionError("DPDLFEAT: truncated header");
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion)
    throw FormatError("DPDLFEAT: unsupported version " + std::to_string(version));
  const auto n = r.get<std::uint64_t>();
  Dataset ds;
  ds.dims.height = r.get<std::uint32_t>();
  ds.dims.width = r.get<std::uint32_t>();
  ds.dims.channels = r.get<std::uint32_t>();
  check_dims(ds.dims);

  const std::size_t per_item = ds.dims.size();
  const std::size_t record = kFeatureRecordHeaderBytes + per_item * sizeof(float);
  if (n == 0) throw ValidationError("DPDLFEAT: dataset is empty");
  if (r.remaining() / record < n) throw CorruptionError("DPDLFEAT: truncated payload");
  if (r.remaining() != n * record) throw CorruptionError("DPDLFEAT: trailing bytes after payload");

  ds.items.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    FeatureMap fm;
    fm.dims = ds.dims;
    fm.class_id = r.get<std::uint32_t>();
    const auto label = r.get<std::uint8_t>();
    if (label > 1) throw FormatError("DPDLFEAT: invalid label byte in record " + std::to_string(i));
    fm.label = static_cast<Label>(label);
    r.skip(3);
    fm.values.resize(per_item);
    for (std::size_t k = 0; k < per_item; ++k) fm.values[k] = r.get<float>();
    fm.source_id = std::to_string(i);
    ds.items.push_back(std::move(fm));
  }
  ds.validate();
  return ds;
}

Dataset read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  Dataset ds = decode_feature_file(bytes);
  ds.name = path;
  return ds;
}

void write_feature_file(const std::string& path, const Dataset& dataset) {
  const auto bytes = encode_feature_file(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  if (n_normal_clusters == 0 || n_anomaly_classes == 0 || normal_per_cluster == 0 ||
      anomaly_per_class == 0)
    throw ValidationError("synth: cluster, class and per-class counts must be >= 1");
  check_dims(dims);
  if (!(noise > 0) || !(cluster_scale >= 0) || !(anomaly_shift >= 0))
    throw ValidationError("synth: noise must be > 0, scales >= 0");
  if (!(anomaly_patch_fraction > 0 && anomaly_patch_fraction <= 1))
    throw ValidationError("synth: anomaly_patch_fraction must be in (0, 1]");
  if (n_noisy_channels > dims.channels)
    throw ValidationError("synth: n_noisy_channels exceeds the channel count");
  if (!(noisy_channel_scale > 0)) throw ValidationError("synth: noisy_channel_scale must be > 0");
}

SynthConfig synth_config_from_text(const std::string& text) {
  SynthConfig c;
  for (const auto& [k, v] : parse_key_value(text)) {
    auto u32 = [&] {
      const long long x = parse_int(k, v);
      if (x < 0 || x > 0xFFFFFFFFll) throw FormatError("`" + k + "` out of range");
      return static_cast<std::uint32_t>(x);
    };
    if (k == "n_normal_clusters") c.n_normal_clusters = u32();
    else if (k == "n_anomaly_classes") c.n_anomaly_classes = u32();
    else if (k == "normal_per_cluster") c.normal_per_cluster = u32();
    else if (k == "anomaly_per_class") c.anomaly_per_class = u32();
    else if (k == "height") c.dims.height = u32();
    else if (k == "width") c.dims.width = u32();
    else if (k == "channels") c.dims.channels = u32();
    else if (k == "cluster_scale") c.cluster_scale = parse_double(k, v);
    else if (k == "noise") c.noise = parse_double(k, v);
    else if (k == "anomaly_shift") c.anomaly_shift = parse_double(k, v);
    else if (k == "anomaly_patch_fraction") c.anomaly_patch_fraction = parse_double(k, v);
    else if (k == "n_noisy_channels") c.n_noisy_channels = u32();
    else if (k == "noisy_channel_scale") c.noisy_channel_scale = parse_double(k, v);
    else if (k == "name") c.name = v;
    else throw FormatError("synth config: unknown key `" + k + "`");
  }
  c.validate();
  return c;
}

SynthConfig synth_config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return synth_config_from_text(text);
}

Dataset synth_generate(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const GridDims dims = config.dims;
  const std::size_t D = dims.size();
  const auto f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };

  std::vector<std::vector<double>> cluster_means(config.n_normal_clusters, std::vector<double>(D));
  for (auto& m : cluster_means)
    for (auto& v : m) v = config.cluster_scale * rng.normal();

  struct AnomalyClass {
    std::size_t base;
    std::vector<double> displacement;
  };
  std::vector<AnomalyClass> classes;
  const double side_scale = std::sqrt(config.anomaly_patch_fraction);
  for (std::uint32_t k = 0; k < config.n_anomaly_classes; ++k) {
    AnomalyClass ac{k % config.n_normal_clusters, std::vector<double>(D, 0.0)};
    std::vector<double> dir(dims.channels);
    for (auto& v : dir) v = std::abs(rng.normal());
    const double n = norm2(dir);
    for (auto& v : dir) v /= (n > 0 ? n : 1.0);
    const auto rows = std::clamp<std::uint32_t>(
        static_cast<std::uint32_t>(std::lround(side_scale * dims.height)), 1, dims.height);
    const auto cols = std::clamp<std::uint32_t>(
        static_cast<std::uint32_t>(std::lround(side_scale * dims.width)), 1, dims.width);
    const auto r0 = static_cast<std::uint32_t>(rng.index(dims.height - rows + 1));
    const auto c0 = static_cast<std::uint32_t>(rng.index(dims.width - cols + 1));
    for (std::uint32_t h = r0; h < r0 + rows; ++h)
      for (std::uint32_t w = c0; w < c0 + cols; ++w)
        for (std::uint32_t ch = 0; ch < dims.channels; ++ch)
          ac.displacement[(std::size_t{h} * dims.width + w) * dims.channels + ch] =
              config.anomaly_shift * config.noise * dir[ch];
    classes.push_back(std::move(ac));
  }

  Dataset ds;
  ds.dims = dims;
  ds.name = config.name;
  ds.seed = seed;
  auto emit = [&](const std::vector<double>& mean, const std::vector<double>* shift, Label label,
                  std::uint32_t class_id) {
    FeatureMap fm;
    fm.dims = dims;
    fm.label = label;
    fm.class_id = class_id;
    fm.values.resize(D);
    for (std::size_t i = 0; i < D; ++i) {
      const double scale = i % dims.channels < config.n_noisy_channels
                               ? config.noise * config.noisy_channel_scale
                               : config.noise;
      fm.values[i] = f32(mean[i] + (shift ? (*shift)[i] : 0.0) + scale * rng.normal());
    }
    fm.source_id = std::to_string(ds.items.size());
    ds.items.push_back(std::move(fm));
  };
  for (std::uint32_t c = 0; c < config.n_normal_clusters; ++c)
    for (std::uint32_t i = 0; i < config.normal_per_cluster; ++i)
      emit(cluster_means[c], nullptr, Label::normal, 0);
  for (std::uint32_t k = 0; k < config.n_anomaly_classes; ++k)
    for (std::uint32_t i = 0; i < config.anomaly_per_class; ++i)
      emit(cluster_means[classes[k].base], &classes[k].displacement, Label::anomaly, k + 1);
  return ds;
}

// ---------------------------------------------------------------------------

Protocol parse_protocol(const std::string& text) {
  if (text == "general") return Protocol::general;
  if (text == "hard") return Protocol::hard;
  throw ValidationError("unknown protocol `" + text + "` (expected general|hard)");
}

std::string to_string(Protocol p) { return p == Protocol::general ? "general" : "hard"; }

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

}  // namespace

SplitPlan make_splits(const Dataset& dataset, Protocol protocol, std::size_t anomaly_budget,
                      std::uint64_t seed) {
  dataset.validate();
  Rng rng(seed);
  SplitPlan plan;
  plan.protocol = protocol;
  plan.anomaly_budget = anomaly_budget;
  plan.seed = seed;

  std::vector<std::size_t> normals, anomalies;
  for (std::size_t i = 0; i < dataset.items.size(); ++i)
    (dataset.items[i].is_anomaly() ? anomalies : normals).push_back(i);

  shuffle(normals, rng);
  const std::size_t n_test = normals.size() / 4;
  plan.test_ids.assign(normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(n_test));
  plan.train_normal_ids.assign(normals.begin() + static_cast<std::ptrdiff_t>(n_test), normals.end());

  if (protocol == Protocol::general) {
    if (anomalies.size() < anomaly_budget)
      throw ValidationError("dataset has " + std::to_string(anomalies.size()) +
                            " anomalies, fewer than M = " + std::to_string(anomaly_budget));
    shuffle(anomalies, rng);
    plan.train_anomaly_ids.assign(anomalies.begin(),
                                  anomalies.begin() + static_cast<std::ptrdiff_t>(anomaly_budget));
    plan.test_ids.insert(plan.test_ids.end(),
                         anomalies.begin() + static_cast<std::ptrdiff_t>(anomaly_budget),
                         anomalies.end());
  } else {
    std::set<std::uint32_t> class_set;
    for (auto i : anomalies) class_set.insert(dataset.items[i].class_id);
    if (class_set.size() < 2)
      throw ProtocolError("hard protocol needs >= 2 anomaly classes, dataset has " +
                          std::to_string(class_set.size()));
    const std::vector<std::uint32_t> classes(class_set.begin(), class_set.end());
    const std::uint32_t picked = classes[rng.index(classes.size())];
    std::vector<std::size_t> in_class;
    for (auto i : anomalies)
      if (dataset.items[i].class_id == picked) in_class.push_back(i);
    if (in_class.size() < anomaly_budget)
      throw ValidationError("anomaly class " + std::to_string(picked) + " has " +
                            std::to_string(in_class.size()) + " items, fewer than M = " +
                            std::to_string(anomaly_budget));
    shuffle(in_class, rng);
    plan.train_anomaly_ids.assign(in_class.begin(),
                                  in_class.begin() + static_cast<std::ptrdiff_t>(anomaly_budget));
    for (auto c : classes)
      if (c != picked) plan.held_out_classes.push_back(c);
    for (auto i : anomalies)
      if (dataset.items[i].class_id != picked) plan.test_ids.push_back(i);
  }
  std::sort(plan.test_ids.begin(), plan.test_ids.end());
  return plan;
}

// ---------------------------------------------------------------------------

CutRect sample_cut_rect(const GridDims& dims, double area_fraction, Rng& rng) {
  const double side = std::sqrt(std::clamp(area_fraction, 0.0, 1.0));
  CutRect r;
  r.rows = std::min<std::uint32_t>(static_cast<std::uint32_t>(std::lround(side * dims.height)),
                                   dims.height);
  r.cols = std::min<std::uint32_t>(static_cast<std::uint32_t>(std::lround(side * dims.width)),
                                   dims.width);
  r.row = static_cast<std::uint32_t>(rng.index(dims.height - r.rows + 1));
  r.col = static_cast<std::uint32_t>(rng.index(dims.width - r.cols + 1));
  return r;
}

FeatureMap cutmix_with_rect(const FeatureMap& base, const FeatureMap& donor, const CutRect& rect) {
  if (base.dims != donor.dims) throw ValidationError("cutmix: base and donor dims differ");
  if (base.is_anomaly()) throw ValidationError("cutmix: base must be a normal item");
  if (rect.row + rect.rows > base.dims.height || rect.col + rect.cols > base.dims.width)
    throw ValidationError("cutmix: rectangle outside the grid");
  FeatureMap out = base;
  const std::size_t ch = base.dims.channels;
  for (std::uint32_t h = rect.row; h < rect.row + rect.rows; ++h)
    for (std::uint32_t w = rect.col; w < rect.col + rect.cols; ++w) {
      const std::size_t off = (std::size_t{h} * base.dims.width + w) * ch;
      std::copy_n(donor.values.begin() + static_cast<std::ptrdiff_t>(off), ch,
                  out.values.begin() + static_cast<std::ptrdiff_t>(off));
    }
  out.label = Label::anomaly;
  out.class_id = kPseudoAnomalyClass;
  out.source_id = base.source_id + "+cutmix:" + donor.source_id;
  return out;
}

FeatureMap cutmix_pseudo_anomaly(const FeatureMap& base, const FeatureMap& donor, Rng& rng) {
  if (base.dims != donor.dims) throw ValidationError("cutmix: base and donor dims differ");
  const double fraction = rng.uniform(0.02, 0.4);
  return cutmix_with_rect(base, donor, sample_cut_rect(base.dims, fraction, rng));
}

}  // namespace dpdl
