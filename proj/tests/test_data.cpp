#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gearlab/data.hpp"
#include "gearlab/rng.hpp"

using namespace gearlab;

namespace {

std::filesystem::path tmp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("gen_shapes determinism and balance") {
  auto [a_train, a_test] = gen_shapes(5, 30, 9, 3, 16);
  auto [b_train, b_test] = gen_shapes(5, 30, 9, 3, 16);
  CHECK(a_train.images == b_train.images);
  CHECK(a_train.labels == b_train.labels);
  CHECK(a_test.images == b_test.images);

  SECTION("different seeds differ") {
    auto [c_train, c_test] = gen_shapes(6, 30, 9, 3, 16);
    (void)c_test;
    CHECK(a_train.images != c_train.images);
  }
  SECTION("train and test are distinct") { CHECK(a_train.images != a_test.images); }
  SECTION("class histogram balanced when divisible") {
    std::vector<int> counts(3, 0);
    for (int l : a_train.labels) {
      REQUIRE(l >= 0);
      REQUIRE(l < 3);
      counts[l]++;
    }
    CHECK(counts == std::vector<int>{10, 10, 10});
  }
  SECTION("pixels stay in range") {
    for (double v : a_train.images) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
  SECTION("degenerate class counts rejected") {
    REQUIRE_THROWS_AS(gen_shapes(1, 30, 9, 1, 16), TensorError);
    REQUIRE_THROWS_AS(gen_shapes(1, 2, 9, 3, 16), TensorError);
  }
  SECTION("unsupported size rejected") {
    REQUIRE_THROWS_AS(gen_shapes(1, 30, 9, 3, 20), TensorError);
  }
}

TEST_CASE("container round trip") {
  auto [train, test] = gen_shapes(11, 24, 6, 3, 16);
  (void)test;
  const auto path = tmp_file("gearlab_container_test.bin");
  write_container(train, path.string());
  Dataset back = read_container(path.string());
  CHECK(back.n == train.n);
  CHECK(back.c == train.c);
  CHECK(back.h == train.h);
  CHECK(back.w == train.w);
  CHECK(back.num_classes == train.num_classes);
  CHECK(back.images == train.images);
  CHECK(back.labels == train.labels);
  CHECK(dataset_digest(back) == dataset_digest(train));

  SECTION("tampered payload rejected") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-4, std::ios::end);
    const char junk[4] = {9, 9, 9, 9};
    f.write(junk, 4);
    f.close();
    REQUIRE_THROWS_AS(read_container(path.string()), TensorError);
  }
  SECTION("malformed header rejected") {
    write_bytes(path, {'n', 'o', 't', ' ', 'j', 's', 'o', 'n', '\n'});
    REQUIRE_THROWS(read_container(path.string()));
  }
  std::filesystem::remove(path);
}

TEST_CASE("cifar binary reader") {
  const auto path = tmp_file("gearlab_cifar_fixture.bin");

  SECTION("two-record fixture parses exactly") {
    std::vector<unsigned char> bytes;
    // record 1: label 7, R plane 0, G plane 128, B plane 255
    bytes.push_back(7);
    for (int k = 0; k < 1024; ++k) bytes.push_back(0);
    for (int k = 0; k < 1024; ++k) bytes.push_back(128);
    for (int k = 0; k < 1024; ++k) bytes.push_back(255);
    // record 2: label 0, ramp pixels
    bytes.push_back(0);
    for (int k = 0; k < 3072; ++k) bytes.push_back(static_cast<unsigned char>(k % 256));
    write_bytes(path, bytes);

    Dataset ds = read_cifar_binary(path.string());
    REQUIRE(ds.n == 2);
    CHECK(ds.c == 3);
    CHECK(ds.h == 32);
    CHECK(ds.w == 32);
    CHECK(ds.labels == std::vector<int>{7, 0});
    CHECK(ds.images[0] == 0.0f);
    CHECK(ds.images[1024] == Catch::Approx(128.0 / 255.0));
    CHECK(ds.images[2048] == Catch::Approx(1.0));
    // record 2 starts at sample offset 3072
    CHECK(ds.images[3072 + 5] == Catch::Approx(5.0 / 255.0));
  }
  SECTION("empty file gives an empty dataset") {
    write_bytes(path, {});
    Dataset ds = read_cifar_binary(path.string());
    CHECK(ds.n == 0);
  }
  SECTION("truncated file rejected") {
    std::vector<unsigned char> bytes(3072, 1);
    write_bytes(path, bytes);
    REQUIRE_THROWS_AS(read_cifar_binary(path.string()), TensorError);
  }
  SECTION("label byte above 9 rejected") {
    std::vector<unsigned char> bytes(3073, 0);
    bytes[0] = 10;
    write_bytes(path, bytes);
    REQUIRE_THROWS_AS(read_cifar_binary(path.string()), TensorError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("dataset digest tracks content") {
  auto [a, test] = gen_shapes(13, 12, 6, 3, 16);
  (void)test;
  Dataset b = a;
  CHECK(dataset_digest(a) == dataset_digest(b));
  b.images[0] += 0.5f;
  CHECK(dataset_digest(a) != dataset_digest(b));
  b = a;
  b.labels[0] = (b.labels[0] + 1) % 3;
  CHECK(dataset_digest(a) != dataset_digest(b));
}
