#pragma once

#include <functional>
#include <vector>

#include "pad/mat.hpp"

namespace pad {

enum class Reduction { Mean, Sum };

struct ContrastiveConfig {
  double temperature = 0.07;  // fixed, not learned
  Reduction reduction = Reduction::Sum;
};

struct ContrastiveLosses {
  double image_to_text = 0.0;
  double text_to_image = 0.0;
  double total = 0.0;
};

inline constexpr double kNormEps = 1e-12;

EmbeddingVector l2_normalize(const EmbeddingVector& v, double eps = kNormEps);
void l2_normalize_rows_inplace(Mat& m, double eps = kNormEps);

// entry (i, j) = A_i · B_j; rows of both inputs must be unit-norm
Mat cosine_similarity_matrix(const Mat& a, const Mat& b);

std::vector<double> softmax(const std::vector<double>& logits);

// max-subtracted log-sum-exp of one row
double log_sum_exp(const double* x, int n);

double cross_entropy(const Mat& logits, const std::vector<int>& targets,
                     Reduction reduction = Reduction::Mean);

ContrastiveLosses contrastive_losses(const Mat& u, const Mat& v, const ContrastiveConfig& cfg);

Mat one_hot_matrix(const std::vector<int>& labels, int num_classes);

// max_k |central difference − analytic_k| / max(1, |analytic_k|)
double finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                               const std::vector<double>& p, const std::vector<double>& analytic,
                               double h = 1e-4);

// round-trips a double through float; file formats store 32-bit
inline double quantize_f32(double x) { return static_cast<double>(static_cast<float>(x)); }
void quantize_f32_inplace(Mat& m);

}  // namespace pad
