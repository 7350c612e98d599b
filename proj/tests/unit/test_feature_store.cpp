#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "dpdl/error.hpp"
#include "dpdl/feature_store.hpp"
#include "dpdl/prototypes.hpp"
#include "reference.hpp"

using namespace dpdl;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("dpdl_fs_" + name)).string();
}

Dataset three_items() {
  Rng rng(5);
  Dataset ds;
  ds.dims = {2, 2, 3};
  for (int i = 0; i < 3; ++i) {
    auto fm = test::random_map(rng, ds.dims, 1.0, i == 2 ? Label::anomaly : Label::normal);
    for (auto& v : fm.values) v = static_cast<float>(v);
    fm.class_id = i == 2 ? 4 : 0;
    fm.source_id = std::to_string(i);
    ds.items.push_back(fm);
  }
  return ds;
}

std::size_t changed_cells(const FeatureMap& a, const FeatureMap& b) {
  std::size_t n = 0;
  for (std::size_t c = 0; c < a.dims.cells(); ++c) {
    const auto x = a.cell(c), y = b.cell(c);
    if (!std::equal(x.begin(), x.end(), y.begin())) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("DPDLFEAT round-trip is bit exact") {
  const Dataset ds = three_items();
  const std::string path = temp_path("roundtrip.feat");
  write_feature_file(path, ds);
  const Dataset back = read_feature_file(path);
  REQUIRE(back.size() == 3);
  CHECK(back.dims == ds.dims);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.items[i].values == ds.items[i].values);
    CHECK(back.items[i].label == ds.items[i].label);
    CHECK(back.items[i].class_id == ds.items[i].class_id);
    CHECK(back.items[i].source_id == std::to_string(i));
  }
  std::remove(path.c_str());
}

TEST_CASE("DPDLFEAT encoding is deterministic and sized by the header") {
  const Dataset ds = three_items();
  CHECK(encode_feature_file(ds) == encode_feature_file(ds));
  Dataset one = ds;
  one.items.resize(1);
  const auto bytes = encode_feature_file(one);
  CHECK(bytes.size() == kFeatureHeaderBytes + kFeatureRecordHeaderBytes + 2 * 2 * 3 * 4);
}

TEST_CASE("DPDLFEAT rejects bad magic, versions and truncation") {
  auto bytes = encode_feature_file(three_items());
  SUBCASE("magic") {
    auto bad = bytes;
    std::fill(bad.begin(), bad.begin() + 8, 'X');
    CHECK_THROWS_AS(decode_feature_file(bad), FormatError);
  }
  SUBCASE("version") {
    auto bad = bytes;
    bad[8] = 2;
    CHECK_THROWS_AS(decode_feature_file(bad), FormatError);
  }
  SUBCASE("payload of 47 floats where the header promises 48") {
    Dataset two = three_items();
    two.items.resize(2);  // N=2, 2x2x3 -> 24 floats per item
    auto b = encode_feature_file(two);
    b.resize(b.size() - 4);
    CHECK_THROWS_AS(decode_feature_file(b), CorruptionError);
  }
  SUBCASE("truncated header") {
    auto b = bytes;
    b.resize(12);
    CHECK_THROWS_AS(decode_feature_file(b), CorruptionError);
  }
  SUBCASE("trailing bytes") {
    auto b = bytes;
    b.push_back(0);
    CHECK_THROWS_AS(decode_feature_file(b), CorruptionError);
  }
  SUBCASE("zero extent") {
    auto b = bytes;
    b[20] = b[21] = b[22] = b[23] = 0;  // H'
    CHECK_THROWS_AS(decode_feature_file(b), ValidationError);
  }
}

TEST_CASE("writing an empty dataset is a validation error") {
  Dataset ds;
  ds.dims = {1, 1, 1};
  CHECK_THROWS_AS(encode_feature_file(ds), ValidationError);
  CHECK_THROWS_AS(write_feature_file(temp_path("empty.feat"), ds), ValidationError);
}

TEST_CASE("reading a missing file is an IO error") {
  CHECK_THROWS_AS(read_feature_file(temp_path("does_not_exist.feat")), IoError);
}

TEST_CASE("synth_generate is deterministic and survives a round-trip") {
  SynthConfig cfg;
  const Dataset a = synth_generate(cfg, 9), b = synth_generate(cfg, 9);
  REQUIRE(a.size() == 2 * 200 + 3 * 20);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.items[i].values == b.items[i].values);
  const Dataset back = decode_feature_file(encode_feature_file(a));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(back.items[i].values == a.items[i].values);
  CHECK_THROWS_AS(synth_generate(SynthConfig{.n_normal_clusters = 0}, 1), ValidationError);
  CHECK_THROWS_AS(synth_generate(SynthConfig{.anomaly_per_class = 0}, 1), ValidationError);
}

TEST_CASE("synthetic normal clusters are recoverable by k-means") {
  SynthConfig cfg;
  cfg.n_normal_clusters = 2;
  cfg.normal_per_cluster = 100;
  cfg.cluster_scale = 1.0;
  const Dataset ds = synth_generate(cfg, 11);
  std::vector<std::vector<double>> normals;
  for (const auto& it : ds.items)
    if (!it.is_anomaly()) normals.push_back(it.values);
  const auto init = vq_init(normals, 2, 50, 3);
  // The first 100 normals are cluster 0; agreement up to label swap.
  std::size_t agree = 0;
  for (std::size_t i = 0; i < normals.size(); ++i) agree += (init.assignment[i] == init.assignment[0]) == (i < 100);
  CHECK(std::max(agree, normals.size() - agree) >= 190);
}

TEST_CASE("anomalies displaced by ten noise levels sit farther from every normal cluster") {
  SynthConfig cfg;
  cfg.anomaly_shift = 10.0;
  cfg.anomaly_patch_fraction = 1.0;
  const Dataset ds = synth_generate(cfg, 13);
  // Nearest-prototype distance against the true cluster means, estimated from
  // the normal items.
  const std::size_t D = ds.dims.size();
  std::vector<std::vector<double>> means(cfg.n_normal_clusters, std::vector<double>(D, 0.0));
  for (std::size_t i = 0; i < cfg.n_normal_clusters * cfg.normal_per_cluster; ++i)
    for (std::size_t d = 0; d < D; ++d) means[i / cfg.normal_per_cluster][d] += ds.items[i].values[d] / cfg.normal_per_cluster;
  auto dist = [&](const FeatureMap& fm) {
    double best = INFINITY;
    for (const auto& m : means) best = std::min(best, squared_distance(fm.values, m));
    return best;
  };
  double max_normal = 0.0;
  std::vector<double> normal_d;
  for (const auto& it : ds.items)
    if (!it.is_anomaly()) normal_d.push_back(dist(it));
  std::sort(normal_d.begin(), normal_d.end());
  max_normal = normal_d[static_cast<std::size_t>(0.99 * normal_d.size())];
  std::size_t above = 0, n_anom = 0;
  for (const auto& it : ds.items)
    if (it.is_anomaly()) ++n_anom, above += dist(it) > max_normal;
  CHECK(static_cast<double>(above) >= 0.99 * static_cast<double>(n_anom));
}

TEST_CASE("noisy channels carry the scaled noise") {
  SynthConfig cfg;
  cfg.n_anomaly_classes = 1;
  cfg.cluster_scale = 0.0;
  cfg.n_noisy_channels = 2;
  cfg.noisy_channel_scale = 3.0;
  const Dataset ds = synth_generate(cfg, 17);
  double loud = 0, quiet = 0;
  std::size_t n_loud = 0, n_quiet = 0;
  for (const auto& it : ds.items) {
    if (it.is_anomaly()) continue;
    for (std::size_t i = 0; i < it.values.size(); ++i) {
      const double v2 = it.values[i] * it.values[i];
      if (i % cfg.dims.channels < 2) loud += v2, ++n_loud;
      else quiet += v2, ++n_quiet;
    }
  }
  CHECK(loud / n_loud == doctest::Approx(9.0).epsilon(0.05));
  CHECK(quiet / n_quiet == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("synth config text parsing") {
  const auto c = synth_config_from_text("height = 2\nwidth = 3\nchannels = 4\nanomaly_shift = 2.5\n");
  CHECK(c.dims == GridDims{2, 3, 4});
  CHECK(c.anomaly_shift == 2.5);
  CHECK_THROWS_AS(synth_config_from_text("bogus = 1\n"), FormatError);
  CHECK_THROWS_AS(synth_config_from_text("channels = 0\n"), ValidationError);
}

TEST_CASE("general protocol splits") {
  const Dataset ds = test::small_dataset(1, 2, 50, 2, 10);  // 100 normals
  const SplitPlan s = make_splits(ds, Protocol::general, 10, 4);
  CHECK(s.train_anomaly_ids.size() == 10);
  CHECK(s.train_normal_ids.size() == 75);
  std::size_t test_normals = 0, test_anoms = 0;
  for (auto i : s.test_ids) (ds.items[i].is_anomaly() ? test_anoms : test_normals) += 1;
  CHECK(test_normals == 25);
  CHECK(test_anoms == 10);
  std::set<std::size_t> train(s.train_normal_ids.begin(), s.train_normal_ids.end());
  train.insert(s.train_anomaly_ids.begin(), s.train_anomaly_ids.end());
  for (auto i : s.test_ids) CHECK(train.count(i) == 0);
  CHECK(std::is_sorted(s.test_ids.begin(), s.test_ids.end()));
  CHECK(make_splits(ds, Protocol::general, 10, 4) == s);
  CHECK_FALSE(make_splits(ds, Protocol::general, 10, 5) == s);
}

TEST_CASE("hard protocol draws from one class and tests on the others") {
  const Dataset ds = test::small_dataset(2, 2, 20, 3, 8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SplitPlan s = make_splits(ds, Protocol::hard, 1, seed);
    REQUIRE(s.train_anomaly_ids.size() == 1);
    const auto picked = ds.items[s.train_anomaly_ids[0]].class_id;
    CHECK(s.held_out_classes.size() == 2);
    for (auto i : s.test_ids)
      if (ds.items[i].is_anomaly()) CHECK(ds.items[i].class_id != picked);
  }
  const Dataset two = test::small_dataset(2, 2, 20, 2, 8);
  const SplitPlan s2 = make_splits(two, Protocol::hard, 1, 0);
  const auto picked = two.items[s2.train_anomaly_ids[0]].class_id;
  for (auto i : s2.test_ids)
    if (two.items[i].is_anomaly()) CHECK(two.items[i].class_id == 3 - picked);
}

TEST_CASE("split errors") {
  const Dataset one_class = test::small_dataset(3, 1, 20, 1, 5);
  CHECK_THROWS_AS(make_splits(one_class, Protocol::hard, 1, 0), ProtocolError);
  CHECK_THROWS_AS(make_splits(one_class, Protocol::general, 6, 0), ValidationError);
  CHECK(parse_protocol("hard") == Protocol::hard);
  CHECK_THROWS_AS(parse_protocol("medium"), ValidationError);
}

TEST_CASE("cutmix with explicit rectangles") {
  Rng rng(8);
  const GridDims dims{4, 4, 2};
  const FeatureMap base = test::random_map(rng, dims, 1.0);
  FeatureMap donor = test::random_map(rng, dims, 1.0);
  for (auto& v : donor.values) v += 100.0;  // differs everywhere

  const FeatureMap none = cutmix_with_rect(base, donor, CutRect{0, 0, 0, 0});
  CHECK(none.values == base.values);
  CHECK(none.is_anomaly());
  CHECK(none.class_id == kPseudoAnomalyClass);

  const FeatureMap full = cutmix_with_rect(base, donor, CutRect{0, 0, 4, 4});
  CHECK(full.values == donor.values);

  const CutRect quarter = sample_cut_rect(dims, 0.25, rng);
  CHECK(quarter.rows * quarter.cols == 4);
  CHECK(changed_cells(base, cutmix_with_rect(base, donor, quarter)) == 4);

  FeatureMap other = test::random_map(rng, GridDims{4, 4, 3}, 1.0);
  CHECK_THROWS_AS(cutmix_with_rect(base, other, quarter), ValidationError);
  FeatureMap anomalous_base = base;
  anomalous_base.label = Label::anomaly;
  CHECK_THROWS_AS(cutmix_with_rect(anomalous_base, donor, quarter), ValidationError);
  CHECK_THROWS_AS(cutmix_with_rect(base, donor, CutRect{3, 3, 2, 2}), ValidationError);
}

TEST_CASE("random cutmix changes exactly one axis-aligned rectangle") {
  Rng rng(21);
  const GridDims dims{6, 5, 2};
  for (int trial = 0; trial < 200; ++trial) {
    const FeatureMap base = test::random_map(rng, dims, 1.0);
    FeatureMap donor = test::random_map(rng, dims, 1.0);
    for (auto& v : donor.values) v += 50.0;
    const FeatureMap out = cutmix_pseudo_anomaly(base, donor, rng);
    std::size_t r0 = dims.height, r1 = 0, c0 = dims.width, c1 = 0, changed = 0;
    for (std::size_t h = 0; h < dims.height; ++h)
      for (std::size_t w = 0; w < dims.width; ++w)
        if (out.at(h, w, 0) != base.at(h, w, 0)) {
          ++changed;
          r0 = std::min(r0, h), r1 = std::max(r1, h), c0 = std::min(c0, w), c1 = std::max(c1, w);
        }
    REQUIRE(changed > 0);
    CHECK(changed == (r1 - r0 + 1) * (c1 - c0 + 1));
    CHECK(static_cast<double>(changed) <= 0.4 * 30 + 6);
  }
}
