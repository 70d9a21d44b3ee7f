#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gearlab/corrupt.hpp"
#include "gearlab/data.hpp"
#include "gearlab/nn.hpp"
#include "gearlab/rng.hpp"

using namespace gearlab;

namespace {

Topology small_topo() {
  Topology t;
  t.widths = {4, 5};
  t.pool_after = {1};
  t.num_classes = 3;
  t.input_shape = {3, 16, 16};
  return t;
}

std::vector<Image> probe_set(int n = 40, std::uint64_t seed = 9) {
  auto [train, test] = gen_shapes(seed, n, 3, 3, 16);
  (void)test;
  std::vector<Image> out;
  for (int i = 0; i < train.n; ++i) out.push_back(train.get(i));
  return out;
}

double mean_distortion(const std::vector<Image>& probes, const Corruption& c,
                       std::uint64_t seed) {
  double total = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    Rng rng = substream(seed, "probe", i);
    Image out = corrupt(probes[i], c, rng);
    double s = 0.0;
    for (std::size_t k = 0; k < out.pix.size(); ++k) {
      const double d = out.pix[k] - probes[i].pix[k];
      s += d * d;
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(probes.size());
}

}  // namespace

TEST_CASE("corruption registry and validation") {
  CHECK(corruption_names().size() == 5);
  for (const auto& name : corruption_names())
    CHECK(corruption_name(corruption_from_name(name)) == name);
  REQUIRE_THROWS_AS(corruption_from_name("fog"), TensorError);
  REQUIRE_THROWS_AS((Corruption{CorruptionKind::box_blur, 6}).validate(), TensorError);
  REQUIRE_THROWS_AS((Corruption{CorruptionKind::box_blur, -1}).validate(), TensorError);
  CHECK(default_suite().size() == 25);
}

TEST_CASE("severity zero is the identity") {
  auto probes = probe_set(5);
  for (const auto& name : corruption_names()) {
    Corruption c{corruption_from_name(name), 0};
    Rng rng(3);
    auto out = corrupt(probes[0], c, rng);
    INFO(name);
    CHECK(out.pix == probes[0].pix);
  }
}

TEST_CASE("outputs stay in range") {
  auto probes = probe_set(8);
  for (const auto& name : corruption_names())
    for (int s = 1; s <= 5; ++s) {
      Corruption c{corruption_from_name(name), s};
      for (std::size_t i = 0; i < probes.size(); ++i) {
        Rng rng = substream(7, "range", i, static_cast<std::uint64_t>(s));
        auto out = corrupt(probes[i], c, rng);
        for (double v : out.pix) {
          REQUIRE(v >= 0.0);
          REQUIRE(v <= 1.0);
        }
      }
    }
}

TEST_CASE("blur leaves constant images unchanged") {
  Image flat;
  flat.c = 3;
  flat.h = 16;
  flat.w = 16;
  flat.pix.assign(3 * 256, 0.4);
  Rng rng(11);
  for (int s = 1; s <= 5; ++s) {
    auto out = corrupt(flat, {CorruptionKind::box_blur, s}, rng);
    for (double v : out.pix) CHECK(v == Catch::Approx(0.4).margin(1e-12));
  }
}

TEST_CASE("severity monotonicity of expected distortion") {
  auto probes = probe_set();
  for (const auto& name : corruption_names()) {
    double prev = 0.0;
    for (int s = 1; s <= 5; ++s) {
      const double d = mean_distortion(probes, {corruption_from_name(name), s}, 13);
      INFO(name << " severity " << s << " distortion " << d);
      CHECK(d >= prev);
      prev = d;
    }
  }
  SECTION("noise s=3 strictly between s=2 and s=4") {
    const double d2 = mean_distortion(probes, {CorruptionKind::gaussian_noise, 2}, 13);
    const double d3 = mean_distortion(probes, {CorruptionKind::gaussian_noise, 3}, 13);
    const double d4 = mean_distortion(probes, {CorruptionKind::gaussian_noise, 4}, 13);
    CHECK(d3 > d2);
    CHECK(d4 > d3);
  }
}

TEST_CASE("corrupt_dataset is deterministic and leaves the source untouched") {
  auto [train, test] = gen_shapes(17, 12, 30, 3, 16);
  (void)train;
  const auto before = test.images;
  Corruption c{CorruptionKind::gaussian_noise, 3};
  Dataset a = corrupt_dataset(test, c, 99);
  Dataset b = corrupt_dataset(test, c, 99);
  CHECK(test.images == before);
  CHECK(a.images == b.images);
  Dataset other = corrupt_dataset(test, c, 100);
  CHECK(a.images != other.images);
}

TEST_CASE("accuracy and robust accuracy") {
  auto [train, test] = gen_shapes(23, 60, 600, 3, 16);
  (void)train;
  Network net = build(small_topo(), 29);  // untrained: roughly random guessing

  SECTION("evaluation never mutates parameters") {
    std::vector<std::vector<double>> before;
    for (auto& p : net.params()) before.push_back(p->data);
    robust_accuracy(net, test, default_suite(), 31);
    auto params = net.params();
    for (std::size_t i = 0; i < params.size(); ++i) REQUIRE(params[i]->data == before[i]);
  }
  SECTION("random-guess net near one third on 600 samples") {
    const double a = accuracy(net, test);  // percent
    CHECK(a >= 100.0 / 3 - 6.0);
    CHECK(a <= 100.0 / 3 + 6.0);
  }
  SECTION("identity suite reproduces clean accuracy exactly") {
    std::vector<Corruption> ident{{CorruptionKind::gaussian_noise, 0}};
    CHECK(robust_accuracy(net, test, ident, 31) == accuracy(net, test));
  }
  SECTION("per-cell accuracies average to the headline number") {
    std::vector<RobustCell> cells;
    const double a = robust_accuracy(net, test, default_suite(), 31, &cells);
    REQUIRE(cells.size() == 25);
    double mean = 0.0;
    for (const auto& c : cells) mean += c.accuracy;
    mean /= cells.size();
    CHECK(a == Catch::Approx(mean).margin(1e-12));
  }
  SECTION("empty suite rejected") {
    REQUIRE_THROWS_AS(robust_accuracy(net, test, {}, 31), TensorError);
  }
  SECTION("empty test set rejected") {
    Dataset empty;
    REQUIRE_THROWS_AS(accuracy(net, empty), TensorError);
  }
  SECTION("constant-prediction net on a single-class set scores 100%") {
    Dataset mono = test;
    std::fill(mono.labels.begin(), mono.labels.end(), 0);
    Network biased = build(small_topo(), 3);
    // huge positive bias on class 0 dominates every logit
    biased.head_b->data[0] = 1e3;
    CHECK(accuracy(biased, mono) == 100.0);
    CHECK(robust_accuracy(biased, mono, default_suite(), 31) == 100.0);
  }
}

TEST_CASE("corruption cache reuses generated datasets") {
  auto [train, test] = gen_shapes(37, 12, 24, 3, 16);
  (void)train;
  Network net = build(small_topo(), 41);
  std::map<std::string, Dataset> cache;
  std::vector<Corruption> suite{{CorruptionKind::pixelate, 2},
                                {CorruptionKind::occlusion, 4}};
  const double a = robust_accuracy(net, test, suite, 43, nullptr, &cache);
  CHECK(cache.size() == 2);
  const double b = robust_accuracy(net, test, suite, 43, nullptr, &cache);
  CHECK(a == b);
  CHECK(cache.size() == 2);
}
