#include <doctest.h>

#include <set>

#include "dpdl/error.hpp"
#include "dpdl/key_value.hpp"
#include "dpdl/parallel.hpp"
#include "dpdl/rng.hpp"

using namespace dpdl;

TEST_CASE("rng streams are reproducible and resumable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  const std::string saved = a.state();
  std::vector<double> expected;
  for (int i = 0; i < 10; ++i) expected.push_back(a.normal());
  Rng c(0);
  c.set_state(saved);
  for (double e : expected) CHECK(c.normal() == e);
}

TEST_CASE("rng uniform and index ranges") {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.index(7) < 7);
  }
}

TEST_CASE("normal draws have unit moments") {
  Rng r(3);
  const int n = 200000;
  double s = 0, ss = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    ss += z * z;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(ss / n - 1.0) < 0.015);
}

TEST_CASE("derive_seed separates streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 100; ++s) seen.insert(derive_seed(7, s));
  CHECK(seen.size() == 100);
  CHECK(derive_seed(7, 1) == derive_seed(7, 1));
}

TEST_CASE("key_value parsing") {
  const auto kv = parse_key_value("# comment\n\n a = 1 \nname=hello world\n");
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("name") == "hello world");
  CHECK_THROWS_AS(parse_key_value("a = 1\na = 2\n"), FormatError);
  CHECK_THROWS_AS(parse_key_value("no equals sign\n"), FormatError);
  CHECK(parse_double("x", "1e-3") == 1e-3);
  CHECK_THROWS_AS(parse_double("x", "abc"), FormatError);
  CHECK_THROWS_AS(parse_u64("seed", "-1"), FormatError);
  CHECK(parse_bool("b", "true"));
  CHECK_FALSE(parse_bool("b", "0"));
  CHECK_THROWS_AS(parse_bool("b", "maybe"), FormatError);
}

TEST_CASE("parallel_for visits every index once and propagates exceptions") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 5) throw ValidationError("boom");
                  }),
                  ValidationError);
}
