#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pad/mat.hpp"

namespace pad {

// Key-value cache of K-shot features. Keys are class-major: rows
// [i·K, (i+1)·K) belong to class i. Values never change after construction;
// only keys move when learnable.
struct CacheModel {
  Mat keys;    // (N·K) × d, rows unit-norm
  Mat values;  // (N·K) × N one-hot
  int classes = 0;
  int shots = 0;
  bool learnable = false;
};

struct AdapterHyperparams {
  double alpha = 1.0;  // fusion weight, ≥ 0
  double beta = 5.5;   // sharpness, > 0
};

// `features` holds the K-shot rows in any order; grouped class-major here.
CacheModel build_cache(const Mat& features, const std::vector<int>& labels, int num_classes);

// A_ij = exp(−β(1 − q_i·F_j))
Mat affinity(const Mat& queries, const CacheModel& cache, double beta);

// G_cache = A · L_train
Mat cache_logits(const Mat& queries, const CacheModel& cache, double beta);

void save_cache(const CacheModel& cache, const std::string& path, uint64_t config_hash);

struct LoadedCache {
  CacheModel cache;
  uint64_t config_hash = 0;
};
LoadedCache load_cache(const std::string& path);

}  // namespace pad
