#pragma once

#include <vector>

#include "pad/mat.hpp"
#include "pad/numerics.hpp"

namespace pad {

// Append-only reverse-mode tape over Mat-valued nodes. One tape per training
// step, single owner. backward() sweeps the recorded nodes exactly once in
// reverse creation order; inputs that do not feed the loss keep zero grads.
class GradientTape {
 public:
  int leaf(Mat value, bool requires_grad = false);

  int matmul(int a, int b);     // A·B
  int matmul_nt(int a, int b);  // A·Bᵀ
  int transpose(int a);
  int add(int a, int b);
  int sub(int a, int b);
  int hadamard(int a, int b);
  int affine(int a, double scale, double shift);  // scale·A + shift elementwise
  int exponential(int a);
  int tanh_act(int a);
  int row_softmax(int a);
  int rms_norm_rows(int a, double eps = 1e-6);
  int l2_normalize_rows(int a, double eps = kNormEps);
  int concat_rows(int a, int b);
  int slice_rows(int a, int first, int count);
  int gather_rows(int a, std::vector<int> indices);
  int add_row_broadcast(int a, int row);  // A (B×N) + row (1×N) per row
  int sum_all(int a);                     // 1×1
  int cache_affinity(int sims, double beta);  // exp(−β(1−s)) elementwise
  int cross_entropy_loss(int logits, std::vector<int> targets, Reduction reduction);

  const Mat& value(int id) const { return nodes_[static_cast<size_t>(id)].val; }
  const Mat& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  int nodes_visited_backward() const { return visited_; }

  void backward(int loss);  // loss must be 1×1; callable once per tape

 private:
  enum class Op {
    Leaf, MatMul, MatMulNT, Transpose, Add, Sub, Hadamard, Affine, Exp, Tanh,
    RowSoftmax, RmsNorm, L2NormRows, ConcatRows, SliceRows, GatherRows,
    AddRowBroadcast, SumAll, CacheAffinity, CrossEntropy,
  };
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double s0 = 0.0;
    double s1 = 0.0;
    std::vector<int> idx;
    Reduction red = Reduction::Mean;
    Mat val;
    Mat grad;
  };

  int push(Node n);
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  int visited_ = 0;
};

}  // namespace pad
