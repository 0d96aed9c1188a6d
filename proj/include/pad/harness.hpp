#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pad/cache.hpp"
#include "pad/data.hpp"
#include "pad/encoder.hpp"
#include "pad/training.hpp"

namespace pad {

enum class MethodKind { ZeroShot, LinearProbe, TipAdapter, TipAdapterF, PromptAdapter, PromptAdapterF };
enum class PromptInit { Manual, Random, PretrainedMultitask };
enum class Strategy { None, Separate, Joint };

struct MethodSpec {
  MethodKind kind = MethodKind::ZeroShot;
  PromptInit init = PromptInit::Manual;
  Strategy strategy = Strategy::None;
};

// rejects kind-inconsistent combinations
void validate_method(const MethodSpec& spec);

std::string to_string(MethodKind k);
std::string to_string(PromptInit i);
std::string to_string(Strategy s);
MethodKind method_kind_from_string(const std::string& s);
PromptInit prompt_init_from_string(const std::string& s);
Strategy strategy_from_string(const std::string& s);

struct ResultRow {
  std::string dataset;
  MethodSpec method;
  int shots = 0;
  uint64_t seed = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double accuracy = 0.0;
  double seconds = 0.0;
};

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

struct HarnessConfig {
  std::vector<int> template_tokens = {3, 14, 15, 9};
  int prompt_length = 4;  // context tokens for random init
  double logit_scale = 1.0;
  std::vector<double> alpha_grid;  // default 0.5..5.0 step 0.5
  std::vector<double> beta_grid;   // default 1..10 step 1
  OptimizerConfig opt_prompt;      // epochs 0 → picked by shot count
  OptimizerConfig opt_cache;
  OptimizerConfig opt_joint;
  OptimizerConfig opt_multitask;
  OptimizerConfig opt_probe;
  TrainSettings train;

  HarnessConfig();
  int prompt_epochs_for(int shots) const;
};

ResultRow linear_probe(const FewShotDataset& ds, int shots, uint64_t seed,
                       const OptimizerConfig& opt);

struct SweepResult {
  double alpha = 0.0;
  double beta = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> alphas;
  std::vector<double> betas;
  Mat surface;  // len(alphas) × len(betas)
};

// Exhaustive grid on the validation split; ties go to the smallest alpha,
// then the smallest beta.
SweepResult sweep_alpha_beta(const LabeledFeatures& val, const Mat& classifier,
                             const CacheModel& cache, const std::vector<double>& alphas,
                             const std::vector<double>& betas, double logit_scale);

ResultRow evaluate_method(const FewShotDataset& ds, const FrozenTextEncoder& enc,
                          const MethodSpec& spec, int shots, uint64_t seed,
                          const HarnessConfig& cfg,
                          const PromptContext* shared_prompt = nullptr);

struct DatasetHandle {
  const FewShotDataset* dataset = nullptr;
  const FrozenTextEncoder* encoder = nullptr;
};

struct GridSpec {
  std::vector<MethodSpec> methods;
  std::vector<int> shots;
  std::vector<uint64_t> seeds;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;  // every row now in the CSV, old and new
  std::string summary_json;
};

std::string result_csv_header();
std::string result_csv_line(const ResultRow& row);

// Full cross product; rows stream to rows_csv_path in deterministic order
// as cells finish, already-present (dataset, method, init, strategy, shots,
// seed) keys are skipped, cells run on a bounded worker pool.
ExperimentResult run_experiment(const std::vector<DatasetHandle>& datasets, const GridSpec& grid,
                                const HarnessConfig& cfg, const std::string& rows_csv_path,
                                int workers = 1);

// Aggregation only; no accuracies are recomputed.
std::string summarize_rows(const std::vector<ResultRow>& rows);

std::vector<ResultRow> read_result_csv(const std::string& path);

}  // namespace pad
