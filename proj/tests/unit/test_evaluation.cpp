#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dpdl/error.hpp"
#include "dpdl/evaluation.hpp"
#include "reference.hpp"

using namespace dpdl;

namespace {

constexpr Label A = Label::anomaly;
constexpr Label N = Label::normal;

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 2;
  c.iters_per_epoch = 2;
  c.batch_size = 8;
  c.C = 2;
  c.epsilon = 1.0;
  c.learning_rate = 0.01;
  c.vq_iters = 5;
  return c;
}

std::vector<std::string> csv_lines(const std::string& csv) {
  std::vector<std::string> lines;
  std::istringstream in(csv);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

}  // namespace

TEST_CASE("auc examples") {
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.1, 0.2}, std::vector<Label>{A, A, N, N}) == 1.0);
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.9, 0.8}, std::vector<Label>{A, A, N, N}) == 0.0);
  CHECK(auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<Label>{A, N, N}) == 0.5);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<Label>{N, N}), UndefinedMetricError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<Label>{A, N}), ValidationError);
  CHECK_THROWS_AS(auc(std::vector<double>{NAN, 0.2}, std::vector<Label>{A, N}), ValidationError);
}

TEST_CASE("auc equals pair counting") {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 50;
    std::vector<double> s(n);
    std::vector<Label> l(n);
    for (std::size_t k = 0; k < n; ++k) {
      s[k] = i % 2 ? std::round(rng.normal() * 3) : rng.normal();
      l[k] = rng.uniform() < 0.3 ? A : N;
    }
    l[0] = A;
    l[1] = N;
    CHECK(auc(s, l) == test::pairwise_auc(s, l));
  }
}

TEST_CASE("auc is invariant under increasing transforms") {
  Rng rng(2);
  std::vector<double> s(60);
  std::vector<Label> l(60);
  for (std::size_t k = 0; k < s.size(); ++k) {
    s[k] = rng.normal();
    l[k] = k % 3 == 0 ? A : N;
  }
  const double base = auc(s, l);
  std::vector<double> e(s), f(s), neg(s);
  for (std::size_t k = 0; k < s.size(); ++k) {
    e[k] = std::exp(s[k]);
    f[k] = 3.0 * s[k] - 7.0;
    neg[k] = -s[k];
  }
  CHECK(auc(e, l) == base);
  CHECK(auc(f, l) == base);
  CHECK(auc(neg, l) + base == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("mean_and_std") {
  auto [m1, s1] = mean_and_std(std::vector<double>{0.7});
  CHECK(m1 == 0.7);
  CHECK(s1 == 0.0);
  auto [m5, s5] = mean_and_std(std::vector<double>(5, 0.83));
  CHECK(m5 == doctest::Approx(0.83));
  CHECK(s5 == 0.0);
  auto [m, s] = mean_and_std(std::vector<double>{1, 2, 3, 4});
  CHECK(m == 2.5);
  CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
}

TEST_CASE("nearest-prototype baseline") {
  const Dataset ds = test::small_dataset(3);
  const SplitPlan split = make_splits(ds, Protocol::general, 2, 1);
  const auto scores = nearest_prototype_scores(ds, split, split.train_normal_ids, 2, 20, 5);
  REQUIRE(scores.size() == split.train_normal_ids.size());
  for (double v : scores) CHECK(v >= 0.0);
  const auto test_scores = nearest_prototype_scores(ds, split, split.test_ids, 2, 20, 5);
  std::vector<Label> labels;
  for (auto i : split.test_ids) labels.push_back(ds.items[i].label);
  // anomalies are displaced far from every normal cluster
  CHECK(auc(test_scores, labels) > 0.9);
}

TEST_CASE("run_experiment is deterministic and its report recomputes") {
  const Dataset ds = test::small_dataset(4);
  std::vector<RunResult> runs;
  const Report a = run_experiment(ds, Protocol::hard, 1, 3, 10, quick_config(), &runs);
  const Report b = run_experiment(ds, Protocol::hard, 1, 3, 10, quick_config());
  CHECK(report_csv(a) == report_csv(b));
  CHECK(report_text(a) == report_text(b));
  CHECK(a.aucs == b.aucs);
  REQUIRE(runs.size() == 3);
  CHECK(a.seeds == std::vector<std::uint64_t>{10, 11, 12});
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(runs[k].auc == a.aucs[k]);
    CHECK(runs[k].split_seed == 10 + k);
    CHECK(runs[k].checkpoint.config.protocol == Protocol::hard);
    CHECK(runs[k].checkpoint.config.M == 1);
  }

  const auto [m, s] = mean_and_std(a.aucs);
  CHECK(a.mean == m);
  CHECK(a.std == s);
  const auto [bm, bs] = mean_and_std(a.baseline_aucs);
  CHECK(a.baseline_mean == bm);
  CHECK(a.baseline_std == bs);

  const auto lines = csv_lines(report_csv(a));
  REQUIRE(lines.size() == 6);
  CHECK(lines[0] == "run,seed,protocol,m,auc,baseline_auc");
  for (std::size_t k = 0; k < 3; ++k) {
    std::istringstream row(lines[1 + k]);
    std::string run, seed, proto, mm, au, bau;
    std::getline(row, run, ',');
    std::getline(row, seed, ',');
    std::getline(row, proto, ',');
    std::getline(row, mm, ',');
    std::getline(row, au, ',');
    std::getline(row, bau, ',');
    CHECK(std::stod(au) == a.aucs[k]);
    CHECK(std::stod(bau) == a.baseline_aucs[k]);
    CHECK(proto == "hard");
  }

  const Report one = run_experiment(ds, Protocol::general, 2, 1, 3, quick_config());
  CHECK(one.std == 0.0);
  CHECK(one.aucs.size() == 1);
}
