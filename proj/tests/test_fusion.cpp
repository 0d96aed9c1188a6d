#include <doctest.h>

#include <cmath>

#include "pad/error.hpp"
#include "pad/fusion.hpp"
#include "pad/numerics.hpp"
#include "pad/rng.hpp"

using namespace pad;

namespace {

Mat random_normalized(Rng& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (double& x : m.v) x = rng.gaussian();
  l2_normalize_rows_inplace(m);
  return m;
}

}  // namespace

TEST_CASE("clip_logits: identical unit vectors give the row maximum") {
  Rng rng(1);
  Mat wc = random_normalized(rng, 3, 6);
  Mat img(1, 6);
  std::copy(wc.row(0), wc.row(0) + 6, img.row(0));
  LogitBatch logits = clip_logits(img, wc, 1.0);
  CHECK(logits.kind == LogitKind::Clip);
  CHECK(logits.values.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(logits.values.at(0, 0) >= logits.values.at(0, 1));
  CHECK(logits.values.at(0, 0) >= logits.values.at(0, 2));
}

TEST_CASE("clip_logits scales linearly and stays within [-s, s]") {
  Rng rng(2);
  Mat wc = random_normalized(rng, 4, 8);
  Mat img = random_normalized(rng, 5, 8);
  LogitBatch unit = clip_logits(img, wc, 1.0);
  LogitBatch hundred = clip_logits(img, wc, 100.0);
  for (size_t i = 0; i < unit.values.size(); ++i) {
    CHECK(hundred.values.v[i] == unit.values.v[i] * 100.0);
    CHECK(hundred.values.v[i] >= -100.0 - 1e-9);
    CHECK(hundred.values.v[i] <= 100.0 + 1e-9);
  }
}

TEST_CASE("clip_logits equals brute-force dot products") {
  Rng rng(3);
  Mat wc = random_normalized(rng, 4, 8);
  Mat img = random_normalized(rng, 7, 8);
  LogitBatch logits = clip_logits(img, wc, 1.0);
  for (int i = 0; i < img.rows; ++i)
    for (int c = 0; c < wc.rows; ++c) {
      double acc = 0.0;
      for (int j = 0; j < 8; ++j) acc += img.at(i, j) * wc.at(c, j);
      CHECK(std::abs(logits.values.at(i, c) - acc) < 1e-12);
    }
  Mat narrow(1, 5);
  CHECK_THROWS_AS(clip_logits(narrow, wc, 1.0), Error);
}

TEST_CASE("final_logits arithmetic and degenerate alpha") {
  Mat clip_vals(1, 2);
  clip_vals.at(0, 0) = 1.0;
  Mat cache_vals(1, 2);
  cache_vals.at(0, 1) = 2.0;
  LogitBatch clip{clip_vals, LogitKind::Clip};
  LogitBatch cache = as_cache_logits(cache_vals);

  LogitBatch zero = final_logits(clip, cache, 0.0);
  CHECK(zero.kind == LogitKind::Final);
  for (size_t i = 0; i < clip_vals.size(); ++i) CHECK(zero.values.v[i] == clip_vals.v[i]);

  LogitBatch one = final_logits(clip, cache, 1.0);
  CHECK(one.values.at(0, 0) == 1.0);
  CHECK(one.values.at(0, 1) == 2.0);

  LogitBatch two = final_logits(clip, cache, 2.0);
  for (size_t i = 0; i < clip_vals.size(); ++i)
    CHECK(two.values.v[i] - clip_vals.v[i] == 2.0 * (one.values.v[i] - clip_vals.v[i]));
}

TEST_CASE("final_logits kind and shape validation") {
  Mat m(1, 2);
  LogitBatch clip{m, LogitKind::Clip};
  LogitBatch cache{m, LogitKind::Cache};
  CHECK_THROWS_AS(final_logits(cache, cache, 1.0), Error);
  CHECK_THROWS_AS(final_logits(clip, clip, 1.0), Error);
  LogitBatch wide{Mat(1, 3), LogitKind::Cache};
  CHECK_THROWS_AS(final_logits(clip, wide, 1.0), Error);
  CHECK_THROWS_AS(final_logits(clip, cache, -0.5), Error);
}

TEST_CASE("fusion continuity in alpha") {
  Rng rng(4);
  Mat cv(3, 4), gv(3, 4);
  for (double& x : cv.v) x = rng.gaussian();
  for (double& x : gv.v) x = std::abs(rng.gaussian());
  LogitBatch clip{cv, LogitKind::Clip};
  LogitBatch cache{gv, LogitKind::Cache};
  double max_cache = 0.0;
  for (double x : gv.v) max_cache = std::max(max_cache, std::abs(x));
  double delta = 0.3;
  LogitBatch a = final_logits(clip, cache, 1.0);
  LogitBatch b = final_logits(clip, cache, 1.0 + delta);
  double sup = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i)
    sup = std::max(sup, std::abs(a.values.v[i] - b.values.v[i]));
  CHECK(sup <= delta * max_cache + 1e-12);
}

TEST_CASE("predict: argmax, ties, and invariances") {
  Mat vals(3, 3);
  vals.at(0, 0) = 0.1; vals.at(0, 1) = 0.9; vals.at(0, 2) = 0.3;
  vals.at(1, 0) = 0.5; vals.at(1, 1) = 0.5; vals.at(1, 2) = 0.0;
  vals.at(2, 0) = -1.0; vals.at(2, 1) = -2.0; vals.at(2, 2) = -0.5;
  LogitBatch batch{vals, LogitKind::Final};
  std::vector<int> pred = predict(batch);
  CHECK(pred[0] == 1);
  CHECK(pred[1] == 0);  // lowest index wins the tie
  CHECK(pred[2] == 2);

  // shift per row and positive scaling leave the argmax unchanged
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Mat m(4, 5);
    for (double& x : m.v) x = rng.gaussian();
    LogitBatch base{m, LogitKind::Final};
    std::vector<int> p0 = predict(base);
    double shift = 3.0 * rng.gaussian();
    double scale = 0.1 + 5.0 * rng.uniform();
    Mat t = m;
    for (double& x : t.v) x = scale * (x + shift);
    LogitBatch moved{t, LogitKind::Final};
    CHECK(predict(moved) == p0);
  }

  Mat bad(1, 2);
  bad.at(0, 1) = std::nan("");
  CHECK_THROWS_AS(predict(LogitBatch{bad, LogitKind::Final}), Error);
  CHECK_THROWS_AS(predict(LogitBatch{Mat(), LogitKind::Final}), Error);
}
