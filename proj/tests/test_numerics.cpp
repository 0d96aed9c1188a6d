#include <doctest.h>

#include <cmath>

#include "pad/numerics.hpp"
#include "pad/error.hpp"
#include "pad/rng.hpp"

using namespace pad;

namespace {

Mat random_normalized(Rng& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (double& x : m.v) x = rng.gaussian();
  l2_normalize_rows_inplace(m);
  return m;
}

// brute-force pairwise dot products, kept independent of the library path
Mat brute_force_dots(const Mat& a, const Mat& b) {
  Mat out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.rows; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(j, k);
      out.at(i, j) = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("l2_normalize basic cases") {
  EmbeddingVector v{{3.0, 4.0}, false};
  EmbeddingVector n = l2_normalize(v);
  CHECK(n.values[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n.values[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(n.normalized);

  EmbeddingVector e1{{1.0, 0.0, 0.0}, false};
  EmbeddingVector same = l2_normalize(e1);
  CHECK(same.values[0] == 1.0);
  CHECK(same.values[1] == 0.0);

  EmbeddingVector zero{{0.0, 0.0}, false};
  CHECK_THROWS_AS(l2_normalize(zero), Error);
  try {
    l2_normalize(zero);
  } catch (const Error& e) {
    CHECK(e.code() == Err::ZeroNorm);
  }
}

TEST_CASE("l2_normalize output norm within 1e-9") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    EmbeddingVector v;
    v.values.resize(16);
    for (double& x : v.values) x = 3.0 * rng.gaussian();
    EmbeddingVector n = l2_normalize(v);
    double norm = 0.0;
    for (double x : n.values) norm += x * x;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
  }
}

TEST_CASE("cosine_similarity_matrix orthonormal and single pair") {
  Mat id(2, 2);
  id.at(0, 0) = 1.0;
  id.at(1, 1) = 1.0;
  Mat sims = cosine_similarity_matrix(id, id);
  CHECK(sims.at(0, 0) == 1.0);
  CHECK(sims.at(0, 1) == 0.0);
  CHECK(sims.at(1, 0) == 0.0);
  CHECK(sims.at(1, 1) == 1.0);

  Mat one(1, 3);
  one.at(0, 2) = 1.0;
  Mat s = cosine_similarity_matrix(one, one);
  CHECK(s.rows == 1);
  CHECK(s.at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  Mat other(1, 4);
  CHECK_THROWS_AS(cosine_similarity_matrix(one, other), Error);
}

TEST_CASE("cosine_similarity_matrix equals brute force on random inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Mat a = random_normalized(rng, 3, 8);
    Mat b = random_normalized(rng, 5, 8);
    Mat lib = cosine_similarity_matrix(a, b);
    Mat ref = brute_force_dots(a, b);
    for (size_t i = 0; i < lib.size(); ++i) {
      CHECK(std::abs(lib.v[i] - ref.v[i]) < 1e-12);
      CHECK(lib.v[i] > -1.0 - 1e-9);
      CHECK(lib.v[i] < 1.0 + 1e-9);
    }
  }
}

TEST_CASE("softmax symmetry, stability, and reference values") {
  std::vector<double> uniform = softmax({0.0, 0.0, 0.0});
  for (double p : uniform) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-14));

  std::vector<double> extreme = softmax({1000.0, 0.0});
  CHECK(extreme[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(extreme[1] == doctest::Approx(0.0).epsilon(1e-12));

  // scalar oracle for [1, 2, 3]
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  std::vector<double> probs = softmax({1.0, 2.0, 3.0});
  CHECK(probs[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(probs[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
  CHECK(probs[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
  CHECK(probs[0] == doctest::Approx(0.09003057).epsilon(1e-6));
  CHECK(probs[1] == doctest::Approx(0.24472847).epsilon(1e-6));
  CHECK(probs[2] == doctest::Approx(0.66524096).epsilon(1e-6));

  CHECK_THROWS_AS(softmax({1.0, std::nan("")}), Error);
}

TEST_CASE("softmax shift invariance and sum-to-one") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(6);
    for (double& v : x) v = 10.0 * rng.gaussian();
    std::vector<double> p = softmax(x);
    double sum = 0.0;
    for (double v : p) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);

    double c = 5.0 * rng.gaussian();
    std::vector<double> shifted = x;
    for (double& v : shifted) v += c;
    std::vector<double> q = softmax(shifted);
    for (size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
  }
}

TEST_CASE("cross_entropy reference values") {
  Mat logits(1, 2);
  CHECK(cross_entropy(logits, {0}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(cross_entropy(logits, {0}) == doctest::Approx(0.693147).epsilon(1e-6));

  Mat sharp(1, 3);
  sharp.at(0, 0) = 10.0;
  // scalar oracle: ln(1 + 2 e^{-10})
  double expected = std::log(1.0 + 2.0 * std::exp(-10.0));
  CHECK(cross_entropy(sharp, {0}) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(cross_entropy(sharp, {0}) == doctest::Approx(9.08e-5).epsilon(1e-2));

  CHECK_THROWS_AS(cross_entropy(sharp, {3}), Error);
  CHECK_THROWS_AS(cross_entropy(sharp, {0, 1}), Error);
}

TEST_CASE("cross_entropy decreases as the true logit grows, stays nonnegative") {
  double prev = 1e300;
  for (double margin = 0.0; margin <= 20.0; margin += 2.0) {
    Mat logits(1, 4);
    logits.at(0, 1) = margin;
    double loss = cross_entropy(logits, {1});
    CHECK(loss >= 0.0);
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("cross_entropy mean vs sum reductions") {
  Mat logits(3, 2);
  logits.at(0, 0) = 1.0;
  logits.at(1, 1) = 2.0;
  logits.at(2, 0) = -1.0;
  std::vector<int> t{0, 1, 1};
  double sum = cross_entropy(logits, t, Reduction::Sum);
  double mean = cross_entropy(logits, t, Reduction::Mean);
  CHECK(mean == doctest::Approx(sum / 3.0).epsilon(1e-15));
}

TEST_CASE("contrastive losses: single pair, two orthogonal pairs, permutation") {
  ContrastiveConfig cfg;
  cfg.temperature = 1.0;

  Mat u1(1, 4);
  u1.at(0, 0) = 1.0;
  ContrastiveLosses single = contrastive_losses(u1, u1, cfg);
  CHECK(single.image_to_text == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(single.text_to_image == doctest::Approx(0.0).epsilon(1e-14));

  Mat u(2, 2), v(2, 2);
  u.at(0, 0) = 1.0;
  u.at(1, 1) = 1.0;
  v = u;
  ContrastiveLosses two = contrastive_losses(u, v, cfg);
  double expected = 2.0 * std::log(1.0 + std::exp(-1.0));  // scalar oracle
  CHECK(two.image_to_text == doctest::Approx(expected).epsilon(1e-12));
  CHECK(two.image_to_text == doctest::Approx(0.62652).epsilon(1e-4));
  CHECK(two.total == doctest::Approx(2.0 * expected).epsilon(1e-12));
  CHECK(two.total == doctest::Approx(1.25305).epsilon(1e-4));
  CHECK(two.image_to_text >= 0.0);
  CHECK(two.text_to_image >= 0.0);

  // joint permutation leaves the total unchanged
  Rng rng(3);
  cfg.temperature = 0.07;
  Mat a = random_normalized(rng, 5, 6);
  Mat b = random_normalized(rng, 5, 6);
  ContrastiveLosses base = contrastive_losses(a, b, cfg);
  std::vector<int> perm{3, 0, 4, 1, 2};
  Mat ap(5, 6), bp(5, 6);
  for (int i = 0; i < 5; ++i) {
    std::copy(a.row(perm[static_cast<size_t>(i)]), a.row(perm[static_cast<size_t>(i)]) + 6, ap.row(i));
    std::copy(b.row(perm[static_cast<size_t>(i)]), b.row(perm[static_cast<size_t>(i)]) + 6, bp.row(i));
  }
  ContrastiveLosses permuted = contrastive_losses(ap, bp, cfg);
  CHECK(permuted.total == doctest::Approx(base.total).epsilon(1e-12));
}

TEST_CASE("contrastive loss approaches 2 B ln B at huge temperature") {
  Rng rng(9);
  int batch = 6;
  Mat u = random_normalized(rng, batch, 8);
  ContrastiveConfig cfg;
  cfg.temperature = 1e6;
  ContrastiveLosses flat = contrastive_losses(u, u, cfg);
  double asymptote = 2.0 * batch * std::log(static_cast<double>(batch));
  CHECK(std::abs(flat.total - asymptote) / asymptote < 1e-3);
}

TEST_CASE("one_hot_matrix") {
  Mat single = one_hot_matrix({2}, 4);
  CHECK(single.rows == 1);
  CHECK(single.at(0, 2) == 1.0);
  CHECK(single.at(0, 0) + single.at(0, 1) + single.at(0, 3) == 0.0);

  Mat id = one_hot_matrix({0, 1}, 2);
  CHECK(id.at(0, 0) == 1.0);
  CHECK(id.at(1, 1) == 1.0);
  CHECK(id.at(0, 1) == 0.0);

  Mat rep = one_hot_matrix({1, 1, 1}, 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(rep.at(i, 1) == 1.0);
    double sum = 0.0;
    for (int j = 0; j < 3; ++j) sum += rep.at(i, j);
    CHECK(sum == 1.0);
  }

  CHECK_THROWS_AS(one_hot_matrix({4}, 3), Error);
}

TEST_CASE("finite_difference_check on a quadratic") {
  auto f = [](const std::vector<double>& p) {
    double s = 0.0;
    for (double x : p) s += x * x;
    return s;
  };
  double err = finite_difference_check(f, {1.0, 2.0}, {2.0, 4.0});
  CHECK(err < 1e-8);

  auto constant = [](const std::vector<double>&) { return 3.5; };
  CHECK(finite_difference_check(constant, {0.3, -0.7}, {0.0, 0.0}) < 1e-10);

  // a doubled gradient must be flagged at roughly 0.5 relative error
  double bad = finite_difference_check(f, {1.0, 2.0}, {4.0, 8.0});
  CHECK(bad == doctest::Approx(0.5).epsilon(1e-4));

  auto exploding = [](const std::vector<double>& p) { return p[0] > 0.5 ? std::nan("") : 0.0; };
  CHECK_THROWS_AS(finite_difference_check(exploding, {0.5}, {0.0}), Error);
}
