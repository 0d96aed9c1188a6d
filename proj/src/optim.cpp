#include "pad/optim.hpp"

#include <cmath>

#include "pad/error.hpp"

namespace pad {

double cosine_lr(double base_lr, long step, long total_steps) {
  return 0.5 * base_lr * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step) /
                                         static_cast<double>(total_steps)));
}

double scheduled_lr(const OptimizerConfig& cfg, long step, long total_steps) {
  if (cfg.schedule == Schedule::Constant) return cfg.lr;
  return cosine_lr(cfg.lr, step, total_steps);
}

static void check_shapes(const std::vector<double>& params, const std::vector<double>& grads,
                         OptimizerState& state) {
  if (params.size() != grads.size()) raise(Err::ShapeMismatch, "optimizer params vs grads");
  if (state.m.empty()) state.m.assign(params.size(), 0.0);
  if (state.v.empty()) state.v.assign(params.size(), 0.0);
  if (state.m.size() != params.size() || state.v.size() != params.size())
    raise(Err::ShapeMismatch, "optimizer state");
}

void adamw_step(std::vector<double>& params, const std::vector<double>& grads,
                OptimizerState& state, const OptimizerConfig& cfg, double lr_t) {
  check_shapes(params, grads, state);
  state.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    double m_hat = state.m[i] / bc1;
    double v_hat = state.v[i] / bc2;
    params[i] -= lr_t * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * params[i]);
  }
}

void sgd_step(std::vector<double>& params, const std::vector<double>& grads, OptimizerState& state,
              const OptimizerConfig& cfg, double lr_t) {
  check_shapes(params, grads, state);
  state.step += 1;
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.momentum * state.m[i] + grads[i];
    params[i] -= lr_t * state.m[i];
  }
}

void optimizer_step(std::vector<double>& params, const std::vector<double>& grads,
                    OptimizerState& state, const OptimizerConfig& cfg, double lr_t) {
  if (cfg.kind == OptKind::AdamW)
    adamw_step(params, grads, state, cfg, lr_t);
  else
    sgd_step(params, grads, state, cfg, lr_t);
}

}  // namespace pad
