#include "pad/mat.hpp"

#include <cmath>

#include "pad/checksum.hpp"
#include "pad/error.hpp"

namespace pad {

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows)
    raise(Err::DimensionMismatch, "matmul " + std::to_string(a.cols) + " vs " + std::to_string(b.rows));
  Mat out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* orow = out.row(i);
    for (int k = 0; k < a.cols; ++k) {
      double aik = ar[k];
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * br[j];
    }
  }
  return out;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols != b.cols)
    raise(Err::DimensionMismatch, "matmul_nt " + std::to_string(a.cols) + " vs " + std::to_string(b.cols));
  Mat out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
      out.at(i, j) = acc;
    }
  }
  return out;
}

Mat transpose(const Mat& a) {
  Mat out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

bool all_finite(const Mat& a) {
  for (double x : a.v)
    if (!std::isfinite(x)) return false;
  return true;
}

double row_norm(const Mat& a, int r) {
  double acc = 0.0;
  const double* p = a.row(r);
  for (int j = 0; j < a.cols; ++j) acc += p[j] * p[j];
  return std::sqrt(acc);
}

uint64_t mat_checksum(const Mat& a) {
  uint64_t h = fnv1a64(&a.rows, sizeof(a.rows));
  h = fnv1a64(&a.cols, sizeof(a.cols), h);
  return fnv1a64(a.v.data(), a.v.size() * sizeof(double), h);
}

}  // namespace pad
