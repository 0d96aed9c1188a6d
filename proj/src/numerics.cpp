#include "pad/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pad/error.hpp"

namespace pad {

EmbeddingVector l2_normalize(const EmbeddingVector& v, double eps) {
  double norm = 0.0;
  for (double x : v.values) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > eps)) raise(Err::ZeroNorm, "norm " + std::to_string(norm));
  EmbeddingVector out;
  out.values.resize(v.values.size());
  for (size_t i = 0; i < v.values.size(); ++i) out.values[i] = v.values[i] / norm;
  out.normalized = true;
  return out;
}

void l2_normalize_rows_inplace(Mat& m, double eps) {
  for (int i = 0; i < m.rows; ++i) {
    double norm = row_norm(m, i);
    if (!(norm > eps)) raise(Err::ZeroNorm, "row " + std::to_string(i));
    double* p = m.row(i);
    for (int j = 0; j < m.cols; ++j) p[j] /= norm;
  }
}

Mat cosine_similarity_matrix(const Mat& a, const Mat& b) {
  if (a.cols != b.cols)
    raise(Err::DimensionMismatch,
          "cosine matrix d=" + std::to_string(a.cols) + " vs " + std::to_string(b.cols));
  return matmul_nt(a, b);
}

std::vector<double> softmax(const std::vector<double>& logits) {
  for (double x : logits)
    if (!std::isfinite(x)) raise(Err::NonFinite, "softmax input");
  double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

double log_sum_exp(const double* x, int n) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(x[i] - m);
  return m + std::log(sum);
}

double cross_entropy(const Mat& logits, const std::vector<int>& targets, Reduction reduction) {
  if (static_cast<int>(targets.size()) != logits.rows)
    raise(Err::LengthMismatch, "cross_entropy batch " + std::to_string(logits.rows) + " vs " +
                                   std::to_string(targets.size()));
  double total = 0.0;
  for (int i = 0; i < logits.rows; ++i) {
    int t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= logits.cols)
      raise(Err::IndexOutOfRange, "target " + std::to_string(t) + " of " + std::to_string(logits.cols));
    total += log_sum_exp(logits.row(i), logits.cols) - logits.at(i, t);
  }
  return reduction == Reduction::Mean ? total / logits.rows : total;
}

ContrastiveLosses contrastive_losses(const Mat& u, const Mat& v, const ContrastiveConfig& cfg) {
  if (!u.same_shape(v) || u.rows < 1)
    raise(Err::DimensionMismatch, "contrastive batch shapes");
  Mat sims = cosine_similarity_matrix(u, v);
  for (double& x : sims.v) x /= cfg.temperature;

  // rows: one image against all texts; columns: one text against all images
  std::vector<int> diag(static_cast<size_t>(u.rows));
  for (int i = 0; i < u.rows; ++i) diag[static_cast<size_t>(i)] = i;
  double i2t = cross_entropy(sims, diag, Reduction::Sum);
  double t2i = cross_entropy(transpose(sims), diag, Reduction::Sum);

  ContrastiveLosses out;
  out.image_to_text = i2t;
  out.text_to_image = t2i;
  out.total = i2t + t2i;
  return out;
}

Mat one_hot_matrix(const std::vector<int>& labels, int num_classes) {
  Mat out(static_cast<int>(labels.size()), num_classes);
  for (size_t i = 0; i < labels.size(); ++i) {
    int l = labels[i];
    if (l < 0 || l >= num_classes)
      raise(Err::IndexOutOfRange, "label " + std::to_string(l) + " of " + std::to_string(num_classes));
    out.at(static_cast<int>(i), l) = 1.0;
  }
  return out;
}

double finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                               const std::vector<double>& p, const std::vector<double>& analytic,
                               double h) {
  if (p.size() != analytic.size()) raise(Err::LengthMismatch, "finite_difference_check sizes");
  std::vector<double> probe = p;
  double worst = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    probe[k] = p[k] + h;
    double fp = f(probe);
    probe[k] = p[k] - h;
    double fm = f(probe);
    probe[k] = p[k];
    if (!std::isfinite(fp) || !std::isfinite(fm)) raise(Err::NonFinite, "probe at coordinate " + std::to_string(k));
    double numeric = (fp - fm) / (2.0 * h);
    double rel = std::abs(numeric - analytic[k]) / std::max(1.0, std::abs(analytic[k]));
    worst = std::max(worst, rel);
  }
  return worst;
}

void quantize_f32_inplace(Mat& m) {
  for (double& x : m.v) x = quantize_f32(x);
}

}  // namespace pad
