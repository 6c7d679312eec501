#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "dic/error.hpp"
#include "dic/latent.hpp"
#include "dic/rng.hpp"
#include "dic/tensor.hpp"

using namespace dic;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a.at(i, p) * b.at(p, j);
      out.at(i, j) = s;
    }
  return out;
}

}  // namespace

TEST_CASE("tensor construction checks") {
  CHECK_THROWS_AS(Tensor(Shape{}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  const Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.at(1, 2) == 1.5);
}

TEST_CASE("matmul oracles") {
  CHECK(matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{3, 4}, {5, 6}})) ==
        Tensor::matrix({{3, 4}, {5, 6}}));
  CHECK(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})) == Tensor::matrix({{11}}));

  SeededRng rng(7);
  const Tensor a = normal(rng, {3, 3});
  const Tensor b = normal(rng, {3, 3});
  CHECK(matmul(a, b) == naive_matmul(a, b));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul associativity property") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeededRng rng(seed);
    const Tensor a = normal(rng, {3, 4});
    const Tensor b = normal(rng, {4, 2});
    const Tensor c = normal(rng, {2, 5});
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
  }
}

TEST_CASE("softmax oracles") {
  CHECK(max_abs_diff(softmax_rows(Tensor::matrix({{0, 0}})), Tensor::matrix({{0.5, 0.5}})) == 0.0);
  CHECK(max_abs_diff(softmax_rows(Tensor::matrix({{1000, 1000}})), Tensor::matrix({{0.5, 0.5}})) == 0.0);
  CHECK(max_abs_diff(softmax_rows(Tensor::matrix({{0, std::log(3.0)}})), Tensor::matrix({{0.25, 0.75}})) < 1e-15);
}

TEST_CASE("softmax rows sum to one for large magnitudes") {
  SeededRng rng(11);
  for (double mag : {1e-3, 1.0, 1e2, 1e5, 1e300}) {
    const Tensor s = softmax_rows(scale(normal(rng, {6, 9}), mag));
    CHECK(all_finite(s));
    for (std::size_t i = 0; i < s.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < s.cols(); ++j) {
        CHECK(s.at(i, j) >= 0.0);
        sum += s.at(i, j);
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("normal draws are reproducible and well distributed") {
  SeededRng a(42), b(42);
  CHECK(normal(a, {4, 5}) == normal(b, {4, 5}));

  SeededRng c(1), d(2);
  CHECK_FALSE(normal(c, {8}) == normal(d, {8}));

  SeededRng rng(2024);
  const Tensor x = normal(rng, {100000});
  double mean = 0.0;
  for (double v : x.data()) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("rng stream is pinned") {
  // mt19937_64 with the default seed produces 9981545732273789042 on its
  // 10000th call per the C++ standard; our wrapper must not alter it.
  SeededRng rng(5489);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  CHECK(v == 9981545732273789042ULL);

  SeededRng u(3);
  const double x = u.uniform();
  CHECK(x >= 0.0);
  CHECK(x < 1.0);
}

TEST_CASE("hash_string is stable and seed sensitive") {
  CHECK(hash_string("guitar", 0) == hash_string("guitar", 0));
  CHECK(hash_string("guitar", 0) != hash_string("guitar", 1));
  CHECK(hash_string("guitar", 0) != hash_string("violin", 0));
}

TEST_CASE("elementwise ops") {
  const Tensor a = Tensor::vector({1, 2, 3});
  const Tensor b = Tensor::vector({4, 5, 6});
  CHECK(add(a, b) == Tensor::vector({5, 7, 9}));
  CHECK(sub(b, a) == Tensor::vector({3, 3, 3}));
  CHECK(hadamard(a, b) == Tensor::vector({4, 10, 18}));
  CHECK(axpby(2.0, a, -1.0, b) == Tensor::vector({-2, -1, 0}));
  CHECK(l2_norm(Tensor::vector({3, 4})) == 5.0);
  CHECK(max_abs(Tensor::vector({-7, 2})) == 7.0);
  CHECK_THROWS_AS(add(a, Tensor::vector({1, 2})), DimensionError);
  CHECK(transpose(Tensor::matrix({{1, 2, 3}})) == Tensor::matrix({{1}, {2}, {3}}));
  CHECK_FALSE(all_finite(Tensor::vector({1, std::numeric_limits<double>::quiet_NaN()})));
}

TEST_CASE("frame view round trip") {
  SeededRng rng(9);
  const Tensor z = normal(rng, {2, 3, 5});
  const Tensor f = to_frames(z);
  CHECK(f.shape() == Shape{5, 6});
  CHECK(f.at(4, 0) == z[4]);
  CHECK(f.at(0, 1) == z[5]);
  CHECK(from_frames(f, z.shape()) == z);
  CHECK_THROWS_AS(to_frames(Tensor::vector({1, 2})), DimensionError);
}

TEST_CASE("DICL encoding") {
  const Tensor z({1, 2, 2}, std::vector<double>{1.0, -2.5, 0.0, 3.25});
  const auto bytes = encode_dicl(z);
  REQUIRE(bytes.size() == 4 + 1 + 1 + 3 * 4 + 4 * 8);
  CHECK(std::memcmp(bytes.data(), "DICL", 4) == 0);
  CHECK(bytes[4] == 0x01);
  CHECK(bytes[5] == 3);
  CHECK(bytes[6] == 1);
  CHECK(bytes[7] == 0);
  CHECK(bytes[10] == 2);
  // 1.0 as little-endian IEEE-754: 00 00 00 00 00 00 F0 3F
  CHECK(bytes[18 + 6] == 0xF0);
  CHECK(bytes[18 + 7] == 0x3F);
  CHECK(decode_dicl(bytes) == z);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_dicl(bad), IoError);
  bad = bytes;
  bad[4] = 0x02;
  CHECK_THROWS_AS(decode_dicl(bad), IoError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_dicl(bad), IoError);

  const auto path = std::filesystem::temp_directory_path() / "dic_numerics_roundtrip.dicl";
  write_dicl(path, z);
  CHECK(read_dicl(path) == z);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_dicl(path), IoError);
}
