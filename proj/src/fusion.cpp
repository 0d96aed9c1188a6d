#include "pad/fusion.hpp"

#include <cmath>
#include <string>

#include "pad/error.hpp"

namespace pad {

LogitBatch clip_logits(const Mat& image_features, const Mat& classifier, double scale) {
  if (!(scale > 0.0)) raise(Err::InvalidConfig, "logit scale must be positive");
  if (image_features.cols != classifier.cols)
    raise(Err::DimensionMismatch, "clip_logits d=" + std::to_string(image_features.cols) + " vs " +
                                      std::to_string(classifier.cols));
  LogitBatch out;
  out.kind = LogitKind::Clip;
  out.values = matmul_nt(image_features, classifier);
  for (double& x : out.values.v) x *= scale;
  return out;
}

LogitBatch as_cache_logits(Mat values) {
  LogitBatch out;
  out.kind = LogitKind::Cache;
  out.values = std::move(values);
  return out;
}

LogitBatch final_logits(const LogitBatch& clip, const LogitBatch& cache, double alpha) {
  if (clip.kind != LogitKind::Clip || cache.kind != LogitKind::Cache)
    raise(Err::KindMismatch, "final_logits expects (clip, cache)");
  if (!clip.values.same_shape(cache.values)) raise(Err::ShapeMismatch, "final_logits");
  if (alpha < 0.0) raise(Err::InvalidConfig, "alpha must be nonnegative");
  LogitBatch out;
  out.kind = LogitKind::Final;
  out.values = clip.values;
  for (size_t i = 0; i < out.values.size(); ++i) out.values.v[i] += alpha * cache.values.v[i];
  return out;
}

std::vector<int> predict(const LogitBatch& logits) {
  const Mat& m = logits.values;
  if (m.rows < 1 || m.cols < 1) raise(Err::Empty, "predict on empty logits");
  std::vector<int> out(static_cast<size_t>(m.rows));
  for (int i = 0; i < m.rows; ++i) {
    const double* row = m.row(i);
    int best = 0;
    for (int j = 0; j < m.cols; ++j) {
      if (!std::isfinite(row[j])) raise(Err::NonFinite, "logit row " + std::to_string(i));
      if (row[j] > row[best]) best = j;
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

}  // namespace pad
