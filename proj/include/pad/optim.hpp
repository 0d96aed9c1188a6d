#pragma once

#include <cstdint>
#include <vector>

namespace pad {

enum class OptKind { Sgd, AdamW };
enum class Schedule { Cosine, Constant };

struct OptimizerConfig {
  OptKind kind = OptKind::Sgd;
  double lr = 0.002;
  double momentum = 0.9;  // sgd
  double beta1 = 0.9;     // adamw
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (adamw)
  int batch_size = 32;
  int epochs = 0;
  Schedule schedule = Schedule::Cosine;
  uint64_t seed = 0;
};

struct OptimizerState {
  std::vector<double> m;  // first moment / momentum buffer
  std::vector<double> v;  // second moment (adamw)
  long step = 0;
};

// 0.5 · base · (1 + cos(π·t/T)); t = 0 gives base, t = T gives 0.
double cosine_lr(double base_lr, long step, long total_steps);

double scheduled_lr(const OptimizerConfig& cfg, long step, long total_steps);

void adamw_step(std::vector<double>& params, const std::vector<double>& grads,
                OptimizerState& state, const OptimizerConfig& cfg, double lr_t);

void sgd_step(std::vector<double>& params, const std::vector<double>& grads, OptimizerState& state,
              const OptimizerConfig& cfg, double lr_t);

// Dispatches on cfg.kind.
void optimizer_step(std::vector<double>& params, const std::vector<double>& grads,
                    OptimizerState& state, const OptimizerConfig& cfg, double lr_t);

}  // namespace pad
