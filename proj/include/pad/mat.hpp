#pragma once

#include <cstdint>
#include <vector>

namespace pad {

// Dense row-major matrix of doubles. All arithmetic in this project is
// 64-bit; 32-bit only appears in file formats.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return v.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

Mat matmul(const Mat& a, const Mat& b);     // a (m×k) · b (k×n)
Mat matmul_nt(const Mat& a, const Mat& b);  // a (m×k) · bᵀ (n×k)
Mat transpose(const Mat& a);
bool all_finite(const Mat& a);
double row_norm(const Mat& a, int r);
uint64_t mat_checksum(const Mat& a);

// A single point in the joint embedding space; `normalized` tags unit norm.
struct EmbeddingVector {
  std::vector<double> values;
  bool normalized = false;
};

}  // namespace pad
