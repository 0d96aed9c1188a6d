#pragma once

#include <vector>

#include "pad/mat.hpp"

namespace pad {

enum class LogitKind { Clip, Cache, Final };

struct LogitBatch {
  Mat values;  // B × N
  LogitKind kind = LogitKind::Clip;
};

// values = scale · (image_features · classifierᵀ); both inputs row-normalized
LogitBatch clip_logits(const Mat& image_features, const Mat& classifier, double scale);

LogitBatch as_cache_logits(Mat values);

// elementwise α·cache + clip
LogitBatch final_logits(const LogitBatch& clip, const LogitBatch& cache, double alpha);

// per-row argmax, ties broken by lowest class index
std::vector<int> predict(const LogitBatch& logits);

}  // namespace pad
