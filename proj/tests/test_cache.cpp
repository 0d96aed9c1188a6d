#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pad/binio.hpp"
#include "pad/cache.hpp"
#include "pad/error.hpp"
#include "pad/numerics.hpp"
#include "pad/rng.hpp"
#include "pad/tape.hpp"

using namespace pad;

namespace {

Mat random_normalized(Rng& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (double& x : m.v) x = rng.gaussian();
  l2_normalize_rows_inplace(m);
  return m;
}

CacheModel small_cache(Rng& rng, int classes, int shots, int dim) {
  Mat feats = random_normalized(rng, classes * shots, dim);
  std::vector<int> labels;
  for (int c = 0; c < classes; ++c)
    for (int k = 0; k < shots; ++k) labels.push_back(c);
  return build_cache(feats, labels, classes);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("build_cache shapes and class-major layout") {
  Rng rng(1);
  Mat feats = random_normalized(rng, 6, 4);
  std::vector<int> labels{2, 0, 1, 0, 2, 1};  // shuffled on purpose
  CacheModel cache = build_cache(feats, labels, 3);
  CHECK(cache.keys.rows == 6);
  CHECK(cache.keys.cols == 4);
  CHECK(cache.values.rows == 6);
  CHECK(cache.values.cols == 3);
  CHECK(cache.shots == 2);
  CHECK_FALSE(cache.learnable);
  for (int r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) sum += cache.values.at(r, c);
    CHECK(sum == 1.0);
    CHECK(cache.values.at(r, r / 2) == 1.0);  // rows [iK, (i+1)K) belong to class i
  }
  // keys grouped class-major in input order: rows 1,3 then 2,5 then 0,4
  std::vector<int> expected{1, 3, 2, 5, 0, 4};
  for (int r = 0; r < 6; ++r)
    for (int j = 0; j < 4; ++j)
      CHECK(cache.keys.at(r, j) == feats.at(expected[static_cast<size_t>(r)], j));
}

TEST_CASE("one-shot two-class cache has identity values") {
  Rng rng(2);
  CacheModel cache = small_cache(rng, 2, 1, 4);
  CHECK(cache.values.at(0, 0) == 1.0);
  CHECK(cache.values.at(1, 1) == 1.0);
  CHECK(cache.values.at(0, 1) == 0.0);
  CHECK(cache.values.at(1, 0) == 0.0);
}

TEST_CASE("build_cache error paths") {
  Rng rng(3);
  Mat feats = random_normalized(rng, 3, 4);
  CHECK_THROWS_AS(build_cache(feats, {0, 0, 1}, 2), Error);  // shot counts differ
  try {
    build_cache(feats, {0, 0, 1}, 2);
  } catch (const Error& e) {
    CHECK(e.code() == Err::ShotCountMismatch);
  }

  Mat raw(2, 4);
  raw.at(0, 0) = 2.0;  // unnormalized
  raw.at(1, 1) = 1.0;
  CHECK_THROWS_AS(build_cache(raw, {0, 1}, 2), Error);
  CHECK_THROWS_AS(build_cache(feats, {0, 1, 5}, 2), Error);
}

TEST_CASE("affinity diagonal, orthogonal, and small-beta values") {
  Mat keys(2, 4);
  keys.at(0, 0) = 1.0;
  keys.at(1, 1) = 1.0;
  CacheModel cache = build_cache(keys, {0, 1}, 2);

  Mat queries(1, 4);
  queries.at(0, 0) = 1.0;  // equals key 0, orthogonal to key 1
  Mat a = affinity(queries, cache, 5.5);
  CHECK(std::abs(a.at(0, 0) - 1.0) < 1e-12);
  CHECK(a.at(0, 1) == doctest::Approx(std::exp(-5.5)).epsilon(1e-12));
  CHECK(a.at(0, 1) == doctest::Approx(0.0040868).epsilon(1e-4));

  Mat tiny = affinity(queries, cache, 1e-8);
  CHECK(std::abs(tiny.at(0, 0) - 1.0) < 1e-6);
  CHECK(std::abs(tiny.at(0, 1) - 1.0) < 1e-6);

  Mat bad(1, 3);
  bad.at(0, 0) = 1.0;
  CHECK_THROWS_AS(affinity(bad, cache, 5.5), Error);
  CHECK_THROWS_AS(affinity(queries, cache, 0.0), Error);
}

TEST_CASE("affinity is monotone in similarity and sharpens with beta") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    double sim_a = rng.uniform() * 1.8 - 0.9;
    double sim_b = rng.uniform() * 1.8 - 0.9;
    if (sim_a == sim_b) continue;
    double lo = std::min(sim_a, sim_b), hi = std::max(sim_a, sim_b);
    double beta = 0.5 + 9.5 * rng.uniform();
    CHECK(std::exp(-beta * (1.0 - hi)) > std::exp(-beta * (1.0 - lo)));
    // sharpening: for sim < 1, a larger beta shrinks the affinity
    CHECK(std::exp(-(beta + 1.0) * (1.0 - lo)) < std::exp(-beta * (1.0 - lo)));
  }
}

TEST_CASE("cache_logits: sharp beta picks out the right class") {
  Rng rng(5);
  CacheModel cache = small_cache(rng, 4, 1, 8);
  Mat query(1, 8);
  std::copy(cache.keys.row(2), cache.keys.row(2) + 8, query.row(0));
  Mat logits = cache_logits(query, cache, 100.0);
  CHECK(std::abs(logits.at(0, 2) - 1.0) < 1e-9);
  for (int c = 0; c < 4; ++c)
    if (c != 2) CHECK(logits.at(0, c) < 1e-3);
}

TEST_CASE("cache_logits: beta to zero gives K everywhere") {
  Rng rng(6);
  int shots = 3;
  CacheModel cache = small_cache(rng, 4, shots, 8);
  Mat queries = random_normalized(rng, 5, 8);
  Mat logits = cache_logits(queries, cache, 1e-8);
  for (double x : logits.v) CHECK(std::abs(x - shots) < 1e-6);
}

TEST_CASE("cache_logits equals brute-force accumulation") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    int classes = 3 + static_cast<int>(rng.below(3));
    int shots = 1 + static_cast<int>(rng.below(3));
    CacheModel cache = small_cache(rng, classes, shots, 6);
    Mat queries = random_normalized(rng, 4, 6);
    double beta = 0.5 + 9.5 * rng.uniform();
    Mat lib = cache_logits(queries, cache, beta);

    // independent per-sample, per-cached-item loop
    for (int i = 0; i < queries.rows; ++i) {
      std::vector<double> acc(static_cast<size_t>(classes), 0.0);
      for (int r = 0; r < cache.keys.rows; ++r) {
        double sim = 0.0;
        for (int j = 0; j < 6; ++j) sim += queries.at(i, j) * cache.keys.at(r, j);
        double a = std::exp(-beta * (1.0 - sim));
        for (int c = 0; c < classes; ++c) acc[static_cast<size_t>(c)] += a * cache.values.at(r, c);
      }
      double max_affinity = 0.0;
      for (int r = 0; r < cache.keys.rows; ++r) {
        double sim = 0.0;
        for (int j = 0; j < 6; ++j) sim += queries.at(i, j) * cache.keys.at(r, j);
        max_affinity = std::max(max_affinity, std::exp(-beta * (1.0 - sim)));
      }
      for (int c = 0; c < classes; ++c) {
        CHECK(std::abs(lib.at(i, c) - acc[static_cast<size_t>(c)]) < 1e-12);
        CHECK(lib.at(i, c) >= 0.0);
        CHECK(lib.at(i, c) <= shots * max_affinity + 1e-12);
      }
    }
  }
}

TEST_CASE("cache file round trip is bit exact") {
  Rng rng(8);
  // f32-representable keys, as produced by the dataset pipeline
  Mat feats = random_normalized(rng, 6, 4);
  quantize_f32_inplace(feats);
  std::vector<int> labels{0, 0, 1, 1, 2, 2};
  CacheModel cache = build_cache(feats, labels, 3);
  cache.learnable = true;

  std::string path = temp_path("pad_cache_roundtrip.pacm");
  save_cache(cache, path, 0xdeadbeefcafe1234ULL);
  LoadedCache loaded = load_cache(path);
  CHECK(loaded.config_hash == 0xdeadbeefcafe1234ULL);
  CHECK(loaded.cache.classes == 3);
  CHECK(loaded.cache.shots == 2);
  CHECK(loaded.cache.learnable);
  REQUIRE(loaded.cache.keys.size() == cache.keys.size());
  for (size_t i = 0; i < cache.keys.size(); ++i) CHECK(loaded.cache.keys.v[i] == cache.keys.v[i]);
  for (size_t i = 0; i < cache.values.size(); ++i)
    CHECK(loaded.cache.values.v[i] == cache.values.v[i]);

  // a second save of the loaded cache reproduces the file byte for byte
  std::string path2 = temp_path("pad_cache_roundtrip2.pacm");
  save_cache(loaded.cache, path2, loaded.config_hash);
  CHECK(read_file_bytes(path) == read_file_bytes(path2));
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("cache file corruption raises the designated errors") {
  Rng rng(9);
  Mat feats = random_normalized(rng, 4, 4);
  quantize_f32_inplace(feats);
  CacheModel cache = build_cache(feats, {0, 0, 1, 1}, 2);
  std::string path = temp_path("pad_cache_corrupt.pacm");
  save_cache(cache, path, 1);
  std::vector<uint8_t> bytes = read_file_bytes(path);

  // truncation
  std::vector<uint8_t> shorter(bytes.begin(), bytes.begin() + 10);
  write_file_bytes(path, shorter);
  CHECK_THROWS_AS(load_cache(path), Error);
  try {
    load_cache(path);
  } catch (const Error& e) {
    CHECK(e.code() == Err::FormatError);
  }

  // bad magic, crc recomputed so the magic check is what fires
  std::vector<uint8_t> wrong = bytes;
  wrong[0] = 'X';
  uint32_t crc = crc32_bytes(wrong.data(), wrong.size() - 4);
  std::memcpy(wrong.data() + wrong.size() - 4, &crc, 4);
  write_file_bytes(path, wrong);
  try {
    load_cache(path);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::FormatError);
  }

  // flipped payload byte fails the checksum
  std::vector<uint8_t> flipped = bytes;
  flipped[20] ^= 0xff;
  write_file_bytes(path, flipped);
  try {
    load_cache(path);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::ChecksumMismatch);
  }
  std::filesystem::remove(path);
}

TEST_CASE("config hash mismatch is surfaced to the caller") {
  Rng rng(10);
  Mat feats = random_normalized(rng, 4, 4);
  quantize_f32_inplace(feats);
  CacheModel cache = build_cache(feats, {0, 0, 1, 1}, 2);
  std::string path = temp_path("pad_cache_hash.pacm");
  save_cache(cache, path, 42);
  LoadedCache loaded = load_cache(path);
  uint64_t current_config = 43;
  CHECK(loaded.config_hash != current_config);  // caller decides how to warn
  std::filesystem::remove(path);
}

TEST_CASE("gradient of fused cross entropy with respect to keys passes finite differences") {
  Rng rng(11);
  CacheModel cache = small_cache(rng, 3, 2, 5);
  Mat queries = random_normalized(rng, 4, 5);
  Mat clip_const(4, 3);
  for (double& x : clip_const.v) x = rng.gaussian();
  std::vector<int> targets{0, 1, 2, 1};
  double alpha = 1.5, beta = 4.0;

  auto build = [&](GradientTape& tape, const Mat& keys) {
    int k = tape.leaf(keys, true);
    int q = tape.leaf(queries);
    int values = tape.leaf(cache.values);
    int gcache = tape.matmul(tape.cache_affinity(tape.matmul_nt(q, k), beta), values);
    int fused = tape.add(tape.affine(gcache, alpha, 0.0), tape.leaf(clip_const));
    return std::pair<int, int>(tape.cross_entropy_loss(fused, targets, Reduction::Mean), k);
  };

  GradientTape tape;
  auto [loss, key_node] = build(tape, cache.keys);
  tape.backward(loss);
  std::vector<double> analytic = tape.grad(key_node).v;

  auto f = [&](const std::vector<double>& p) {
    Mat probe = cache.keys;
    probe.v = p;
    GradientTape t;
    return t.value(build(t, probe).first).v[0];
  };
  CHECK(finite_difference_check(f, cache.keys.v, analytic) < 1e-5);
}
