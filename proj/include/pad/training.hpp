#pragma once

#include <map>
#include <string>
#include <vector>

#include "pad/cache.hpp"
#include "pad/encoder.hpp"
#include "pad/mat.hpp"
#include "pad/numerics.hpp"
#include "pad/optim.hpp"

namespace pad {

struct LabeledFeatures {
  Mat features;
  std::vector<int> labels;
  bool empty() const { return features.rows == 0; }
};

struct EpochStat {
  int epoch = 0;
  double loss = 0.0;
  double val_acc = -1.0;  // -1 when no validation split was given
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochStat> per_epoch;
  std::vector<double> per_step_lr;
  double seconds = 0.0;
  std::map<std::string, std::string> final_checksums;
  std::string config_hash;
  double initial_val_acc = -1.0;
  int best_epoch = 0;  // 0 = initial parameters retained
};

std::string report_to_json(const TrainReport& report);

struct TrainSettings {
  double logit_scale = 1.0;
  Reduction reduction = Reduction::Mean;
  // epoch 0 (the initial parameters) competes with trained epochs on
  // validation accuracy; ties keep the earlier epoch
  bool select_best_epoch = true;
  bool renormalize_keys = true;
};

// Prompt tuning: minimizes CE of clip logits over seeded minibatches; only
// the prompt vectors move.
TrainReport train_prompt(const FrozenTextEncoder& enc, PromptContext& prompt,
                         const LabeledFeatures& train, const LabeledFeatures& val,
                         const std::vector<ClassTokenSequence>& classes, const OptimizerConfig& opt,
                         const TrainSettings& settings = {});

// Cache-key fine-tuning: minimizes CE of fused logits; gradients reach only
// the keys, values and prompt stay fixed.
TrainReport train_cache_keys(const FrozenTextEncoder& enc, const PromptContext& prompt,
                             CacheModel& cache, const LabeledFeatures& train,
                             const LabeledFeatures& val,
                             const std::vector<ClassTokenSequence>& classes,
                             const AdapterHyperparams& hp, const OptimizerConfig& opt,
                             const TrainSettings& settings = {});

// Prompt first, then freeze it and fine-tune the keys.
TrainReport train_separate(const FrozenTextEncoder& enc, PromptContext& prompt, CacheModel& cache,
                           const LabeledFeatures& train, const LabeledFeatures& val,
                           const std::vector<ClassTokenSequence>& classes,
                           const AdapterHyperparams& hp, const OptimizerConfig& opt_prompt,
                           const OptimizerConfig& opt_cache, const TrainSettings& settings = {});

// One loop over CE of the fused logits; gradients flow into both parameter
// groups every step.
TrainReport train_joint(const FrozenTextEncoder& enc, PromptContext& prompt, CacheModel& cache,
                        const LabeledFeatures& train, const LabeledFeatures& val,
                        const std::vector<ClassTokenSequence>& classes,
                        const AdapterHyperparams& hp, const OptimizerConfig& opt,
                        const TrainSettings& settings = {});

struct Task {
  std::string name;
  LabeledFeatures train;
  LabeledFeatures val;  // may be empty
  std::vector<ClassTokenSequence> classes;
};

// Shared-prompt pretraining: each step minimizes the mean over tasks of the
// per-task clip-logit CE, one minibatch per task (shorter tasks recycle
// batches). A single task reproduces train_prompt exactly.
PromptContext multitask_pretrain_prompt(const FrozenTextEncoder& enc, PromptContext prompt,
                                        const std::vector<Task>& tasks, const OptimizerConfig& opt,
                                        const TrainSettings& settings = {},
                                        TrainReport* report_out = nullptr);

}  // namespace pad
