#include "pad/tape.hpp"

#include <cmath>
#include <string>

#include "pad/error.hpp"

namespace pad {

int GradientTape::push(Node n) {
  n.grad = Mat(n.val.rows, n.val.cols);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int GradientTape::leaf(Mat value, bool requires_grad) {
  (void)requires_grad;  // grads are accumulated for every node; the flag is documentation
  Node n;
  n.op = Op::Leaf;
  n.val = std::move(value);
  return push(std::move(n));
}

int GradientTape::matmul(int a, int b) {
  Node n;
  n.op = Op::MatMul;
  n.a = a;
  n.b = b;
  n.val = pad::matmul(value(a), value(b));
  return push(std::move(n));
}

int GradientTape::matmul_nt(int a, int b) {
  Node n;
  n.op = Op::MatMulNT;
  n.a = a;
  n.b = b;
  n.val = pad::matmul_nt(value(a), value(b));
  return push(std::move(n));
}

int GradientTape::transpose(int a) {
  Node n;
  n.op = Op::Transpose;
  n.a = a;
  n.val = pad::transpose(value(a));
  return push(std::move(n));
}

int GradientTape::add(int a, int b) {
  if (!value(a).same_shape(value(b))) raise(Err::ShapeMismatch, "tape add");
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.val = value(a);
  for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] += value(b).v[i];
  return push(std::move(n));
}

int GradientTape::sub(int a, int b) {
  if (!value(a).same_shape(value(b))) raise(Err::ShapeMismatch, "tape sub");
  Node n;
  n.op = Op::Sub;
  n.a = a;
  n.b = b;
  n.val = value(a);
  for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] -= value(b).v[i];
  return push(std::move(n));
}

int GradientTape::hadamard(int a, int b) {
  if (!value(a).same_shape(value(b))) raise(Err::ShapeMismatch, "tape hadamard");
  Node n;
  n.op = Op::Hadamard;
  n.a = a;
  n.b = b;
  n.val = value(a);
  for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] *= value(b).v[i];
  return push(std::move(n));
}

int GradientTape::affine(int a, double scale, double shift) {
  Node n;
  n.op = Op::Affine;
  n.a = a;
  n.s0 = scale;
  n.s1 = shift;
  n.val = value(a);
  for (double& x : n.val.v) x = scale * x + shift;
  return push(std::move(n));
}

int GradientTape::exponential(int a) {
  Node n;
  n.op = Op::Exp;
  n.a = a;
  n.val = value(a);
  for (double& x : n.val.v) x = std::exp(x);
  return push(std::move(n));
}

int GradientTape::tanh_act(int a) {
  Node n;
  n.op = Op::Tanh;
  n.a = a;
  n.val = value(a);
  for (double& x : n.val.v) x = std::tanh(x);
  return push(std::move(n));
}

int GradientTape::row_softmax(int a) {
  Node n;
  n.op = Op::RowSoftmax;
  n.a = a;
  n.val = value(a);
  for (int i = 0; i < n.val.rows; ++i) {
    double* p = n.val.row(i);
    double m = p[0];
    for (int j = 1; j < n.val.cols; ++j) m = std::max(m, p[j]);
    double sum = 0.0;
    for (int j = 0; j < n.val.cols; ++j) {
      p[j] = std::exp(p[j] - m);
      sum += p[j];
    }
    for (int j = 0; j < n.val.cols; ++j) p[j] /= sum;
  }
  return push(std::move(n));
}

int GradientTape::rms_norm_rows(int a, double eps) {
  Node n;
  n.op = Op::RmsNorm;
  n.a = a;
  n.s0 = eps;
  n.val = value(a);
  for (int i = 0; i < n.val.rows; ++i) {
    double* p = n.val.row(i);
    double mean_sq = 0.0;
    for (int j = 0; j < n.val.cols; ++j) mean_sq += p[j] * p[j];
    mean_sq /= n.val.cols;
    double r = std::sqrt(mean_sq + eps);
    for (int j = 0; j < n.val.cols; ++j) p[j] /= r;
  }
  return push(std::move(n));
}

int GradientTape::l2_normalize_rows(int a, double eps) {
  Node n;
  n.op = Op::L2NormRows;
  n.a = a;
  n.s0 = eps;
  n.val = value(a);
  for (int i = 0; i < n.val.rows; ++i) {
    double norm = row_norm(n.val, i);
    if (!(norm > eps)) raise(Err::ZeroNorm, "tape l2_normalize row " + std::to_string(i));
    double* p = n.val.row(i);
    for (int j = 0; j < n.val.cols; ++j) p[j] /= norm;
  }
  return push(std::move(n));
}

int GradientTape::concat_rows(int a, int b) {
  if (value(a).cols != value(b).cols) raise(Err::ShapeMismatch, "tape concat_rows");
  Node n;
  n.op = Op::ConcatRows;
  n.a = a;
  n.b = b;
  n.val = Mat(value(a).rows + value(b).rows, value(a).cols);
  std::copy(value(a).v.begin(), value(a).v.end(), n.val.v.begin());
  std::copy(value(b).v.begin(), value(b).v.end(), n.val.v.begin() + static_cast<long>(value(a).size()));
  return push(std::move(n));
}

int GradientTape::slice_rows(int a, int first, int count) {
  const Mat& src = value(a);
  if (first < 0 || count < 1 || first + count > src.rows)
    raise(Err::IndexOutOfRange, "tape slice_rows");
  Node n;
  n.op = Op::SliceRows;
  n.a = a;
  n.s0 = first;
  n.val = Mat(count, src.cols);
  std::copy(src.row(first), src.row(first) + static_cast<size_t>(count) * src.cols, n.val.v.begin());
  return push(std::move(n));
}

int GradientTape::gather_rows(int a, std::vector<int> indices) {
  const Mat& src = value(a);
  Node n;
  n.op = Op::GatherRows;
  n.a = a;
  n.val = Mat(static_cast<int>(indices.size()), src.cols);
  for (size_t i = 0; i < indices.size(); ++i) {
    int r = indices[i];
    if (r < 0 || r >= src.rows) raise(Err::IndexOutOfRange, "tape gather_rows " + std::to_string(r));
    std::copy(src.row(r), src.row(r) + src.cols, n.val.row(static_cast<int>(i)));
  }
  n.idx = std::move(indices);
  return push(std::move(n));
}

int GradientTape::add_row_broadcast(int a, int row) {
  const Mat& src = value(a);
  const Mat& r = value(row);
  if (r.rows != 1 || r.cols != src.cols) raise(Err::ShapeMismatch, "tape add_row_broadcast");
  Node n;
  n.op = Op::AddRowBroadcast;
  n.a = a;
  n.b = row;
  n.val = src;
  for (int i = 0; i < n.val.rows; ++i) {
    double* p = n.val.row(i);
    for (int j = 0; j < n.val.cols; ++j) p[j] += r.v[static_cast<size_t>(j)];
  }
  return push(std::move(n));
}

int GradientTape::sum_all(int a) {
  Node n;
  n.op = Op::SumAll;
  n.a = a;
  double acc = 0.0;
  for (double x : value(a).v) acc += x;
  n.val = Mat(1, 1);
  n.val.v[0] = acc;
  return push(std::move(n));
}

int GradientTape::cache_affinity(int sims, double beta) {
  Node n;
  n.op = Op::CacheAffinity;
  n.a = sims;
  n.s0 = beta;
  n.val = value(sims);
  for (double& x : n.val.v) x = std::exp(-beta * (1.0 - x));
  return push(std::move(n));
}

int GradientTape::cross_entropy_loss(int logits, std::vector<int> targets, Reduction reduction) {
  Node n;
  n.op = Op::CrossEntropy;
  n.a = logits;
  n.red = reduction;
  n.val = Mat(1, 1);
  n.val.v[0] = cross_entropy(value(logits), targets, reduction);
  n.idx = std::move(targets);
  return push(std::move(n));
}

void GradientTape::backward(int loss) {
  if (backward_done_) raise(Err::InvalidConfig, "backward already run on this tape");
  backward_done_ = true;
  Node& top = node(loss);
  if (top.val.rows != 1 || top.val.cols != 1) raise(Err::ShapeMismatch, "backward needs a scalar loss");
  top.grad.v[0] = 1.0;

  visited_ = 0;
  for (int id = loss; id >= 0; --id) {
    ++visited_;
    Node& n = node(id);
    bool any = false;
    for (double g : n.grad.v)
      if (g != 0.0) { any = true; break; }
    if (!any || n.op == Op::Leaf) continue;

    const Mat& g = n.grad;
    switch (n.op) {
      case Op::MatMul: {
        // dA += G·Bᵀ ; dB += Aᵀ·G
        Node& na = node(n.a);
        Node& nb = node(n.b);
        Mat da = pad::matmul_nt(g, nb.val);
        Mat db = pad::matmul(pad::transpose(na.val), g);
        for (size_t i = 0; i < da.size(); ++i) na.grad.v[i] += da.v[i];
        for (size_t i = 0; i < db.size(); ++i) nb.grad.v[i] += db.v[i];
        break;
      }
      case Op::MatMulNT: {
        // C = A·Bᵀ: dA += G·B ; dB += Gᵀ·A
        Node& na = node(n.a);
        Node& nb = node(n.b);
        Mat da = pad::matmul(g, nb.val);
        Mat db = pad::matmul(pad::transpose(g), na.val);
        for (size_t i = 0; i < da.size(); ++i) na.grad.v[i] += da.v[i];
        for (size_t i = 0; i < db.size(); ++i) nb.grad.v[i] += db.v[i];
        break;
      }
      case Op::Transpose: {
        Node& na = node(n.a);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) na.grad.at(j, i) += g.at(i, j);
        break;
      }
      case Op::Add: {
        Node& na = node(n.a);
        Node& nb = node(n.b);
        for (size_t i = 0; i < g.size(); ++i) {
          na.grad.v[i] += g.v[i];
          nb.grad.v[i] += g.v[i];
        }
        break;
      }
      case Op::Sub: {
        Node& na = node(n.a);
        Node& nb = node(n.b);
        for (size_t i = 0; i < g.size(); ++i) {
          na.grad.v[i] += g.v[i];
          nb.grad.v[i] -= g.v[i];
        }
        break;
      }
      case Op::Hadamard: {
        Node& na = node(n.a);
        Node& nb = node(n.b);
        for (size_t i = 0; i < g.size(); ++i) {
          na.grad.v[i] += g.v[i] * nb.val.v[i];
          nb.grad.v[i] += g.v[i] * na.val.v[i];
        }
        break;
      }
      case Op::Affine: {
        Node& na = node(n.a);
        for (size_t i = 0; i < g.size(); ++i) na.grad.v[i] += g.v[i] * n.s0;
        break;
      }
      case Op::Exp: {
        Node& na = node(n.a);
        for (size_t i = 0; i < g.size(); ++i) na.grad.v[i] += g.v[i] * n.val.v[i];
        break;
      }
      case Op::Tanh: {
        Node& na = node(n.a);
        for (size_t i = 0; i < g.size(); ++i)
          na.grad.v[i] += g.v[i] * (1.0 - n.val.v[i] * n.val.v[i]);
        break;
      }
      case Op::RowSoftmax: {
        // per row: dx = y ∘ (g − (g·y))
        Node& na = node(n.a);
        for (int i = 0; i < n.val.rows; ++i) {
          const double* y = n.val.row(i);
          const double* gr = g.row(i);
          double dot = 0.0;
          for (int j = 0; j < n.val.cols; ++j) dot += gr[j] * y[j];
          double* da = na.grad.row(i);
          for (int j = 0; j < n.val.cols; ++j) da[j] += y[j] * (gr[j] - dot);
        }
        break;
      }
      case Op::RmsNorm: {
        // y = x/r, r = sqrt(mean(x²)+ε): dx = g/r − x·(x·g)/(n·r³)
        Node& na = node(n.a);
        int cols = n.val.cols;
        for (int i = 0; i < n.val.rows; ++i) {
          const double* x = na.val.row(i);
          const double* gr = g.row(i);
          double mean_sq = 0.0;
          for (int j = 0; j < cols; ++j) mean_sq += x[j] * x[j];
          mean_sq /= cols;
          double r = std::sqrt(mean_sq + n.s0);
          double dot = 0.0;
          for (int j = 0; j < cols; ++j) dot += x[j] * gr[j];
          double* da = na.grad.row(i);
          for (int j = 0; j < cols; ++j) da[j] += gr[j] / r - x[j] * dot / (cols * r * r * r);
        }
        break;
      }
      case Op::L2NormRows: {
        // y = x/‖x‖: dx = (g − y·(y·g)) / ‖x‖
        Node& na = node(n.a);
        int cols = n.val.cols;
        for (int i = 0; i < n.val.rows; ++i) {
          const double* y = n.val.row(i);
          const double* gr = g.row(i);
          double norm = row_norm(na.val, i);
          double dot = 0.0;
          for (int j = 0; j < cols; ++j) dot += y[j] * gr[j];
          double* da = na.grad.row(i);
          for (int j = 0; j < cols; ++j) da[j] += (gr[j] - y[j] * dot) / norm;
        }
        break;
      }
      case Op::ConcatRows: {
        Node& na = node(n.a);
        Node& nb = node(n.b);
        size_t na_sz = na.val.size();
        for (size_t i = 0; i < na_sz; ++i) na.grad.v[i] += g.v[i];
        for (size_t i = 0; i < nb.val.size(); ++i) nb.grad.v[i] += g.v[na_sz + i];
        break;
      }
      case Op::SliceRows: {
        Node& na = node(n.a);
        int first = static_cast<int>(n.s0);
        for (int i = 0; i < g.rows; ++i) {
          const double* gr = g.row(i);
          double* da = na.grad.row(first + i);
          for (int j = 0; j < g.cols; ++j) da[j] += gr[j];
        }
        break;
      }
      case Op::GatherRows: {
        Node& na = node(n.a);
        for (size_t i = 0; i < n.idx.size(); ++i) {
          const double* gr = g.row(static_cast<int>(i));
          double* da = na.grad.row(n.idx[i]);
          for (int j = 0; j < g.cols; ++j) da[j] += gr[j];
        }
        break;
      }
      case Op::AddRowBroadcast: {
        Node& na = node(n.a);
        Node& nb = node(n.b);
        for (size_t i = 0; i < g.size(); ++i) na.grad.v[i] += g.v[i];
        for (int i = 0; i < g.rows; ++i) {
          const double* gr = g.row(i);
          for (int j = 0; j < g.cols; ++j) nb.grad.v[static_cast<size_t>(j)] += gr[j];
        }
        break;
      }
      case Op::SumAll: {
        Node& na = node(n.a);
        double g0 = g.v[0];
        for (double& d : na.grad.v) d += g0;
        break;
      }
      case Op::CacheAffinity: {
        // dy/ds = β·y
        Node& na = node(n.a);
        for (size_t i = 0; i < g.size(); ++i) na.grad.v[i] += g.v[i] * n.s0 * n.val.v[i];
        break;
      }
      case Op::CrossEntropy: {
        // dlogits = w·(softmax − onehot), w = 1/B for mean, 1 for sum
        Node& na = node(n.a);
        double g0 = g.v[0];
        double w = n.red == Reduction::Mean ? g0 / na.val.rows : g0;
        for (int i = 0; i < na.val.rows; ++i) {
          const double* x = na.val.row(i);
          double m = x[0];
          for (int j = 1; j < na.val.cols; ++j) m = std::max(m, x[j]);
          double sum = 0.0;
          for (int j = 0; j < na.val.cols; ++j) sum += std::exp(x[j] - m);
          double* da = na.grad.row(i);
          for (int j = 0; j < na.val.cols; ++j) da[j] += w * std::exp(x[j] - m) / sum;
          da[n.idx[static_cast<size_t>(i)]] -= w;
        }
        break;
      }
      case Op::Leaf:
        break;
    }
  }
}

}  // namespace pad
