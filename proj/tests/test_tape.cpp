#include <doctest.h>

#include <cmath>

#include "pad/error.hpp"
#include "pad/rng.hpp"
#include "pad/tape.hpp"

using namespace pad;

namespace {

Mat random_mat(Rng& rng, int rows, int cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (double& x : m.v) x = scale * rng.gaussian();
  return m;
}

// central-difference check of d(loss)/d(leaf) for a tape program rebuilt at
// every probe point
template <typename Builder>
void check_leaf_gradient(const Mat& leaf_value, Builder build, double tol = 1e-6) {
  GradientTape tape;
  int leaf = tape.leaf(leaf_value, true);
  int loss = build(tape, leaf);
  tape.backward(loss);
  std::vector<double> analytic = tape.grad(leaf).v;

  auto f = [&](const std::vector<double>& p) {
    Mat probe = leaf_value;
    probe.v = p;
    GradientTape t;
    int l = t.leaf(probe, true);
    return t.value(build(t, l)).v[0];
  };
  double err = finite_difference_check(f, leaf_value.v, analytic);
  CHECK(err < tol);
}

}  // namespace

TEST_CASE("tape forward values match direct computation") {
  Rng rng(1);
  Mat a = random_mat(rng, 3, 4);
  Mat b = random_mat(rng, 4, 2);
  GradientTape tape;
  int na = tape.leaf(a);
  int nb = tape.leaf(b);
  int prod = tape.matmul(na, nb);
  Mat ref = matmul(a, b);
  for (size_t i = 0; i < ref.size(); ++i) CHECK(tape.value(prod).v[i] == ref.v[i]);
}

TEST_CASE("gradients of every op pass finite differences") {
  Rng rng(2);

  SUBCASE("matmul") {
    Mat x = random_mat(rng, 3, 4);
    Mat w = random_mat(rng, 4, 2);
    check_leaf_gradient(x, [&](GradientTape& t, int leaf) {
      return t.sum_all(t.matmul(leaf, t.leaf(w)));
    });
    check_leaf_gradient(w, [&](GradientTape& t, int leaf) {
      return t.sum_all(t.matmul(t.leaf(x), leaf));
    });
  }

  SUBCASE("matmul_nt and transpose") {
    Mat x = random_mat(rng, 3, 4);
    Mat y = random_mat(rng, 5, 4);
    check_leaf_gradient(x, [&](GradientTape& t, int leaf) {
      return t.sum_all(t.matmul_nt(leaf, t.leaf(y)));
    });
    check_leaf_gradient(x, [&](GradientTape& t, int leaf) {
      return t.sum_all(t.hadamard(t.transpose(leaf), t.transpose(leaf)));
    });
  }

  SUBCASE("elementwise chain") {
    Mat x = random_mat(rng, 2, 5, 0.5);
    check_leaf_gradient(x, [&](GradientTape& t, int leaf) {
      int e = t.exponential(t.affine(leaf, 0.7, -0.2));
      int h = t.tanh_act(t.hadamard(e, leaf));
      return t.sum_all(t.sub(h, t.add(leaf, leaf)));
    });
  }

  SUBCASE("row softmax") {
    Mat x = random_mat(rng, 3, 4);
    Mat w = random_mat(rng, 3, 4);
    check_leaf_gradient(x, [&](GradientTape& t, int leaf) {
      return t.sum_all(t.hadamard(t.row_softmax(leaf), t.leaf(w)));
    });
  }

  SUBCASE("rms norm") {
    Mat x = random_mat(rng, 2, 6);
    Mat w = random_mat(rng, 2, 6);
    check_leaf_gradient(x, [&](GradientTape& t, int leaf) {
      return t.sum_all(t.hadamard(t.rms_norm_rows(leaf), t.leaf(w)));
    });
  }

  SUBCASE("l2 normalize rows") {
    Mat x = random_mat(rng, 2, 6);
    Mat w = random_mat(rng, 2, 6);
    check_leaf_gradient(x, [&](GradientTape& t, int leaf) {
      return t.sum_all(t.hadamard(t.l2_normalize_rows(leaf), t.leaf(w)));
    });
  }

  SUBCASE("concat, slice, gather, broadcast") {
    Mat x = random_mat(rng, 4, 3);
    Mat y = random_mat(rng, 2, 3);
    Mat row = random_mat(rng, 1, 3);
    check_leaf_gradient(x, [&](GradientTape& t, int leaf) {
      int cat = t.concat_rows(leaf, t.leaf(y));
      int sl = t.slice_rows(cat, 1, 3);
      int ga = t.gather_rows(sl, {0, 0, 2});
      return t.sum_all(t.hadamard(t.add_row_broadcast(ga, t.leaf(row)), ga));
    });
  }

  SUBCASE("cache affinity") {
    Mat x = random_mat(rng, 3, 4);
    Mat keys = random_mat(rng, 5, 4);
    check_leaf_gradient(keys, [&](GradientTape& t, int leaf) {
      return t.sum_all(t.cache_affinity(t.matmul_nt(t.leaf(x), leaf), 4.5));
    });
  }

  SUBCASE("cross entropy, both reductions") {
    Mat logits = random_mat(rng, 4, 3, 2.0);
    std::vector<int> targets{0, 2, 1, 2};
    check_leaf_gradient(logits, [&](GradientTape& t, int leaf) {
      return t.cross_entropy_loss(leaf, targets, Reduction::Mean);
    });
    check_leaf_gradient(logits, [&](GradientTape& t, int leaf) {
      return t.cross_entropy_loss(leaf, targets, Reduction::Sum);
    });
  }
}

TEST_CASE("unused inputs keep exactly zero gradients") {
  Rng rng(5);
  GradientTape tape;
  int used = tape.leaf(random_mat(rng, 2, 2), true);
  int unused = tape.leaf(random_mat(rng, 3, 3), true);
  int loss = tape.sum_all(tape.hadamard(used, used));
  tape.backward(loss);
  for (double g : tape.grad(unused).v) CHECK(g == 0.0);
  bool any = false;
  for (double g : tape.grad(used).v) any = any || g != 0.0;
  CHECK(any);
}

TEST_CASE("backward visits each node exactly once and runs once per tape") {
  Rng rng(6);
  GradientTape tape;
  int a = tape.leaf(random_mat(rng, 2, 3), true);
  int b = tape.affine(a, 2.0, 0.0);
  int loss = tape.sum_all(b);
  tape.leaf(random_mat(rng, 1, 1));  // recorded after the loss
  tape.backward(loss);
  CHECK(tape.nodes_visited_backward() == loss + 1);
  CHECK_THROWS_AS(tape.backward(loss), Error);
}

TEST_CASE("backward requires a scalar loss") {
  GradientTape tape;
  int a = tape.leaf(Mat(2, 2, 1.0), true);
  CHECK_THROWS_AS(tape.backward(a), Error);
}

TEST_CASE("a value reused twice accumulates both gradient paths") {
  Mat x(1, 3);
  x.at(0, 0) = 0.3;
  x.at(0, 1) = -0.8;
  x.at(0, 2) = 1.2;
  GradientTape tape;
  int leaf = tape.leaf(x, true);
  int loss = tape.sum_all(tape.hadamard(leaf, leaf));  // Σ x²
  tape.backward(loss);
  for (int j = 0; j < 3; ++j) CHECK(tape.grad(leaf).at(0, j) == doctest::Approx(2.0 * x.at(0, j)));
}
