#include "pad/training.hpp"

#include <chrono>
#include <cmath>

#include "pad/checksum.hpp"
#include "pad/error.hpp"
#include "pad/fusion.hpp"
#include "pad/rng.hpp"

#include <nlohmann/json.hpp>

namespace pad {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void validate_optimizer(const OptimizerConfig& opt) {
  if (!(opt.lr > 0.0)) raise(Err::InvalidConfig, "learning rate must be positive");
  if (opt.epochs < 0) raise(Err::InvalidConfig, "epochs must be nonnegative");
  if (opt.batch_size < 1) raise(Err::InvalidConfig, "batch size must be at least 1");
}

double fraction_correct(const std::vector<int>& pred, const std::vector<int>& labels) {
  size_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// clip-only validation accuracy
double clip_val_accuracy(const FrozenTextEncoder& enc, const PromptContext& prompt,
                         const std::vector<ClassTokenSequence>& classes, const LabeledFeatures& val,
                         double scale) {
  if (val.empty()) return -1.0;
  Mat wc = enc.build_classifier_weights(prompt, classes);
  return fraction_correct(predict(clip_logits(val.features, wc, scale)), val.labels);
}

// fused validation accuracy at fixed hyperparams
double fused_val_accuracy(const Mat& wc, const CacheModel& cache, const AdapterHyperparams& hp,
                          const LabeledFeatures& val, double scale) {
  if (val.empty()) return -1.0;
  LogitBatch clip = clip_logits(val.features, wc, scale);
  LogitBatch fused = final_logits(clip, as_cache_logits(cache_logits(val.features, cache, hp.beta)),
                                  hp.alpha);
  return fraction_correct(predict(fused), val.labels);
}

Mat gather_feature_rows(const Mat& features, const std::vector<int>& order, size_t first,
                        size_t count) {
  Mat out(static_cast<int>(count), features.cols);
  for (size_t i = 0; i < count; ++i) {
    int r = order[first + i];
    std::copy(features.row(r), features.row(r) + features.cols, out.row(static_cast<int>(i)));
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& order,
                               size_t first, size_t count) {
  std::vector<int> out(count);
  for (size_t i = 0; i < count; ++i) out[i] = labels[static_cast<size_t>(order[first + i])];
  return out;
}

long steps_per_epoch(int rows, int batch) { return (rows + batch - 1) / batch; }

struct BestParams {
  double acc;
  int epoch = 0;
  std::vector<Mat> params;
};

void track_best(BestParams& best, double val_acc, int epoch, std::initializer_list<const Mat*> params,
                bool enabled) {
  if (!enabled || val_acc < 0.0) return;
  if (epoch == 0 || val_acc > best.acc) {
    best.acc = val_acc;
    best.epoch = epoch;
    best.params.clear();
    for (const Mat* m : params) best.params.push_back(*m);
  }
}

}  // namespace

std::string report_to_json(const TrainReport& report) {
  nlohmann::json j;
  j["config_hash"] = report.config_hash;
  j["seconds"] = report.seconds;
  j["best_epoch"] = report.best_epoch;
  j["initial_val_acc"] = report.initial_val_acc;
  j["per_epoch"] = nlohmann::json::array();
  for (const EpochStat& e : report.per_epoch)
    j["per_epoch"].push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"val_acc", e.val_acc}, {"lr", e.lr}});
  j["final_checksums"] = report.final_checksums;
  return j.dump(2);
}

TrainReport train_prompt(const FrozenTextEncoder& enc, PromptContext& prompt,
                         const LabeledFeatures& train, const LabeledFeatures& val,
                         const std::vector<ClassTokenSequence>& classes, const OptimizerConfig& opt,
                         const TrainSettings& settings) {
  if (!prompt.learnable) raise(Err::NotLearnable, "train_prompt on frozen prompt");
  if (train.empty()) raise(Err::EmptySplit, "train_prompt train split");
  validate_optimizer(opt);
  Clock::time_point start = Clock::now();

  TrainReport report;
  report.initial_val_acc = clip_val_accuracy(enc, prompt, classes, val, settings.logit_scale);
  BestParams best{report.initial_val_acc};
  track_best(best, report.initial_val_acc, 0, {&prompt.vectors}, settings.select_best_epoch);

  int n = train.features.rows;
  long per_epoch_steps = steps_per_epoch(n, opt.batch_size);
  long total_steps = opt.epochs * per_epoch_steps;
  OptimizerState state;
  long step = 0;

  std::vector<int> order(static_cast<size_t>(n));
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle_rng = Rng::substream(opt.seed, "shuffle", static_cast<uint64_t>(epoch - 1));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    double first_lr = 0.0;
    long batches = 0;
    for (size_t off = 0; off < static_cast<size_t>(n); off += static_cast<size_t>(opt.batch_size)) {
      size_t count = std::min(static_cast<size_t>(opt.batch_size), static_cast<size_t>(n) - off);
      double lr_t = scheduled_lr(opt, step, total_steps);
      if (batches == 0) first_lr = lr_t;

      GradientTape tape;
      FrozenTextEncoder::Weights w = enc.push_weights(tape);
      int prompt_node = tape.leaf(prompt.vectors, true);
      int wc = enc.classifier_node(tape, w, prompt_node, classes);
      int feats = tape.leaf(gather_feature_rows(train.features, order, off, count));
      int clip = tape.affine(tape.matmul_nt(feats, wc), settings.logit_scale, 0.0);
      int loss = tape.cross_entropy_loss(clip, gather_labels(train.labels, order, off, count),
                                         settings.reduction);
      tape.backward(loss);
      optimizer_step(prompt.vectors.v, tape.grad(prompt_node).v, state, opt, lr_t);

      loss_sum += tape.value(loss).v[0];
      report.per_step_lr.push_back(lr_t);
      ++step;
      ++batches;
    }

    double val_acc = clip_val_accuracy(enc, prompt, classes, val, settings.logit_scale);
    report.per_epoch.push_back({epoch, loss_sum / static_cast<double>(batches), val_acc, first_lr});
    track_best(best, val_acc, epoch, {&prompt.vectors}, settings.select_best_epoch);
  }

  if (settings.select_best_epoch && !best.params.empty()) {
    prompt.vectors = best.params[0];
    report.best_epoch = best.epoch;
  } else {
    report.best_epoch = opt.epochs;
  }
  report.final_checksums["prompt"] = hex64(mat_checksum(prompt.vectors));
  report.seconds = elapsed_seconds(start);
  return report;
}

TrainReport train_cache_keys(const FrozenTextEncoder& enc, const PromptContext& prompt,
                             CacheModel& cache, const LabeledFeatures& train,
                             const LabeledFeatures& val,
                             const std::vector<ClassTokenSequence>& classes,
                             const AdapterHyperparams& hp, const OptimizerConfig& opt,
                             const TrainSettings& settings) {
  if (!cache.learnable) raise(Err::NotLearnable, "train_cache_keys on frozen cache");
  if (train.empty()) raise(Err::EmptySplit, "train_cache_keys train split");
  validate_optimizer(opt);
  Clock::time_point start = Clock::now();

  Mat wc = enc.build_classifier_weights(prompt, classes);

  TrainReport report;
  report.initial_val_acc = fused_val_accuracy(wc, cache, hp, val, settings.logit_scale);
  BestParams best{report.initial_val_acc};
  track_best(best, report.initial_val_acc, 0, {&cache.keys}, settings.select_best_epoch);

  int n = train.features.rows;
  long per_epoch_steps = steps_per_epoch(n, opt.batch_size);
  long total_steps = opt.epochs * per_epoch_steps;
  OptimizerState state;
  long step = 0;

  std::vector<int> order(static_cast<size_t>(n));
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle_rng = Rng::substream(opt.seed, "shuffle", static_cast<uint64_t>(epoch - 1));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    double first_lr = 0.0;
    long batches = 0;
    for (size_t off = 0; off < static_cast<size_t>(n); off += static_cast<size_t>(opt.batch_size)) {
      size_t count = std::min(static_cast<size_t>(opt.batch_size), static_cast<size_t>(n) - off);
      double lr_t = scheduled_lr(opt, step, total_steps);
      if (batches == 0) first_lr = lr_t;

      Mat batch_feats = gather_feature_rows(train.features, order, off, count);
      Mat clip_const = clip_logits(batch_feats, wc, settings.logit_scale).values;

      GradientTape tape;
      int keys = tape.leaf(cache.keys, true);
      int queries = tape.leaf(std::move(batch_feats));
      int values = tape.leaf(cache.values);
      int gcache = tape.matmul(tape.cache_affinity(tape.matmul_nt(queries, keys), hp.beta), values);
      int fused = tape.add(tape.affine(gcache, hp.alpha, 0.0), tape.leaf(std::move(clip_const)));
      int loss = tape.cross_entropy_loss(fused, gather_labels(train.labels, order, off, count),
                                         settings.reduction);
      tape.backward(loss);
      optimizer_step(cache.keys.v, tape.grad(keys).v, state, opt, lr_t);
      if (settings.renormalize_keys) l2_normalize_rows_inplace(cache.keys);

      loss_sum += tape.value(loss).v[0];
      report.per_step_lr.push_back(lr_t);
      ++step;
      ++batches;
    }

    double val_acc = fused_val_accuracy(wc, cache, hp, val, settings.logit_scale);
    report.per_epoch.push_back({epoch, loss_sum / static_cast<double>(batches), val_acc, first_lr});
    track_best(best, val_acc, epoch, {&cache.keys}, settings.select_best_epoch);
  }

  if (settings.select_best_epoch && !best.params.empty()) {
    cache.keys = best.params[0];
    report.best_epoch = best.epoch;
  } else {
    report.best_epoch = opt.epochs;
  }
  report.final_checksums["cache_keys"] = hex64(mat_checksum(cache.keys));
  report.seconds = elapsed_seconds(start);
  return report;
}

TrainReport train_separate(const FrozenTextEncoder& enc, PromptContext& prompt, CacheModel& cache,
                           const LabeledFeatures& train, const LabeledFeatures& val,
                           const std::vector<ClassTokenSequence>& classes,
                           const AdapterHyperparams& hp, const OptimizerConfig& opt_prompt,
                           const OptimizerConfig& opt_cache, const TrainSettings& settings) {
  TrainReport phase1 = train_prompt(enc, prompt, train, val, classes, opt_prompt, settings);

  PromptContext frozen = prompt;
  frozen.learnable = false;
  TrainReport phase2 =
      train_cache_keys(enc, frozen, cache, train, val, classes, hp, opt_cache, settings);

  TrainReport report = phase1;
  int offset = opt_prompt.epochs;
  for (EpochStat e : phase2.per_epoch) {
    e.epoch += offset;
    report.per_epoch.push_back(e);
  }
  report.per_step_lr.insert(report.per_step_lr.end(), phase2.per_step_lr.begin(),
                            phase2.per_step_lr.end());
  report.seconds += phase2.seconds;
  report.best_epoch = phase2.best_epoch == 0 ? phase1.best_epoch : offset + phase2.best_epoch;
  report.final_checksums["prompt"] = hex64(mat_checksum(prompt.vectors));
  report.final_checksums["cache_keys"] = hex64(mat_checksum(cache.keys));
  return report;
}

TrainReport train_joint(const FrozenTextEncoder& enc, PromptContext& prompt, CacheModel& cache,
                        const LabeledFeatures& train, const LabeledFeatures& val,
                        const std::vector<ClassTokenSequence>& classes,
                        const AdapterHyperparams& hp, const OptimizerConfig& opt,
                        const TrainSettings& settings) {
  if (!prompt.learnable) raise(Err::NotLearnable, "train_joint prompt is frozen");
  if (!cache.learnable) raise(Err::NotLearnable, "train_joint cache is frozen");
  if (train.empty()) raise(Err::EmptySplit, "train_joint train split");
  validate_optimizer(opt);
  Clock::time_point start = Clock::now();

  auto joint_val = [&]() {
    if (val.empty()) return -1.0;
    Mat wc = enc.build_classifier_weights(prompt, classes);
    return fused_val_accuracy(wc, cache, hp, val, settings.logit_scale);
  };

  TrainReport report;
  report.initial_val_acc = joint_val();
  BestParams best{report.initial_val_acc};
  track_best(best, report.initial_val_acc, 0, {&prompt.vectors, &cache.keys},
             settings.select_best_epoch);

  size_t prompt_count = prompt.vectors.size();
  int n = train.features.rows;
  long per_epoch_steps = steps_per_epoch(n, opt.batch_size);
  long total_steps = opt.epochs * per_epoch_steps;
  OptimizerState state;
  long step = 0;

  std::vector<int> order(static_cast<size_t>(n));
  std::vector<double> params(prompt_count + cache.keys.size());
  std::vector<double> grads(params.size());
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle_rng = Rng::substream(opt.seed, "shuffle", static_cast<uint64_t>(epoch - 1));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    double first_lr = 0.0;
    long batches = 0;
    for (size_t off = 0; off < static_cast<size_t>(n); off += static_cast<size_t>(opt.batch_size)) {
      size_t count = std::min(static_cast<size_t>(opt.batch_size), static_cast<size_t>(n) - off);
      double lr_t = scheduled_lr(opt, step, total_steps);
      if (batches == 0) first_lr = lr_t;

      GradientTape tape;
      FrozenTextEncoder::Weights w = enc.push_weights(tape);
      int prompt_node = tape.leaf(prompt.vectors, true);
      int keys = tape.leaf(cache.keys, true);
      int wc = enc.classifier_node(tape, w, prompt_node, classes);
      int feats = tape.leaf(gather_feature_rows(train.features, order, off, count));
      int clip = tape.affine(tape.matmul_nt(feats, wc), settings.logit_scale, 0.0);
      int gcache = tape.matmul(tape.cache_affinity(tape.matmul_nt(feats, keys), hp.beta),
                               tape.leaf(cache.values));
      int fused = tape.add(clip, tape.affine(gcache, hp.alpha, 0.0));
      int loss = tape.cross_entropy_loss(fused, gather_labels(train.labels, order, off, count),
                                         settings.reduction);
      tape.backward(loss);

      std::copy(prompt.vectors.v.begin(), prompt.vectors.v.end(), params.begin());
      std::copy(cache.keys.v.begin(), cache.keys.v.end(), params.begin() + static_cast<long>(prompt_count));
      std::copy(tape.grad(prompt_node).v.begin(), tape.grad(prompt_node).v.end(), grads.begin());
      std::copy(tape.grad(keys).v.begin(), tape.grad(keys).v.end(),
                grads.begin() + static_cast<long>(prompt_count));
      optimizer_step(params, grads, state, opt, lr_t);
      std::copy(params.begin(), params.begin() + static_cast<long>(prompt_count),
                prompt.vectors.v.begin());
      std::copy(params.begin() + static_cast<long>(prompt_count), params.end(),
                cache.keys.v.begin());
      if (settings.renormalize_keys) l2_normalize_rows_inplace(cache.keys);

      loss_sum += tape.value(loss).v[0];
      report.per_step_lr.push_back(lr_t);
      ++step;
      ++batches;
    }

    double val_acc = joint_val();
    report.per_epoch.push_back({epoch, loss_sum / static_cast<double>(batches), val_acc, first_lr});
    track_best(best, val_acc, epoch, {&prompt.vectors, &cache.keys}, settings.select_best_epoch);
  }

  if (settings.select_best_epoch && !best.params.empty()) {
    prompt.vectors = best.params[0];
    cache.keys = best.params[1];
    report.best_epoch = best.epoch;
  } else {
    report.best_epoch = opt.epochs;
  }
  report.final_checksums["prompt"] = hex64(mat_checksum(prompt.vectors));
  report.final_checksums["cache_keys"] = hex64(mat_checksum(cache.keys));
  report.seconds = elapsed_seconds(start);
  return report;
}

PromptContext multitask_pretrain_prompt(const FrozenTextEncoder& enc, PromptContext prompt,
                                        const std::vector<Task>& tasks, const OptimizerConfig& opt,
                                        const TrainSettings& settings, TrainReport* report_out) {
  if (tasks.empty()) raise(Err::EmptyTaskList, "multitask_pretrain_prompt");
  if (!prompt.learnable) raise(Err::NotLearnable, "multitask prompt is frozen");
  validate_optimizer(opt);
  for (const Task& t : tasks) {
    if (t.train.empty()) raise(Err::EmptySplit, "task " + t.name);
    if (t.train.features.cols != enc.config().feature_dim)
      raise(Err::IncompatibleEncoder, "task " + t.name + " feature dim");
    for (const ClassTokenSequence& cls : t.classes)
      for (int tok : cls.tokens)
        if (tok < 0 || tok >= enc.config().vocab)
          raise(Err::IncompatibleEncoder, "task " + t.name + " token out of vocab");
  }
  Clock::time_point start = Clock::now();

  size_t task_count = tasks.size();
  auto mean_val = [&]() {
    double sum = 0.0;
    int counted = 0;
    for (const Task& t : tasks) {
      double a = clip_val_accuracy(enc, prompt, t.classes, t.val, settings.logit_scale);
      if (a >= 0.0) {
        sum += a;
        ++counted;
      }
    }
    return counted > 0 ? sum / counted : -1.0;
  };

  TrainReport report;
  report.initial_val_acc = mean_val();
  BestParams best{report.initial_val_acc};
  track_best(best, report.initial_val_acc, 0, {&prompt.vectors}, settings.select_best_epoch);

  long per_epoch_steps = 0;
  for (const Task& t : tasks)
    per_epoch_steps = std::max(per_epoch_steps, steps_per_epoch(t.train.features.rows, opt.batch_size));
  long total_steps = opt.epochs * per_epoch_steps;
  OptimizerState state;
  long step = 0;

  std::vector<std::vector<int>> orders(task_count);
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    // every task draws the same shuffle substream, so identical tasks get
    // identical batch compositions
    for (size_t t = 0; t < task_count; ++t) {
      int n = tasks[t].train.features.rows;
      orders[t].resize(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) orders[t][static_cast<size_t>(i)] = i;
      Rng shuffle_rng = Rng::substream(opt.seed, "shuffle", static_cast<uint64_t>(epoch - 1));
      shuffle_rng.shuffle(orders[t]);
    }

    double loss_sum = 0.0;
    double first_lr = 0.0;
    for (long b = 0; b < per_epoch_steps; ++b) {
      double lr_t = scheduled_lr(opt, step, total_steps);
      if (b == 0) first_lr = lr_t;

      GradientTape tape;
      FrozenTextEncoder::Weights w = enc.push_weights(tape);
      int prompt_node = tape.leaf(prompt.vectors, true);
      int loss_acc = -1;
      for (size_t t = 0; t < task_count; ++t) {
        const Task& task = tasks[t];
        int n = task.train.features.rows;
        long batches_t = steps_per_epoch(n, opt.batch_size);
        long bt = b % batches_t;
        size_t off = static_cast<size_t>(bt) * static_cast<size_t>(opt.batch_size);
        size_t count = std::min(static_cast<size_t>(opt.batch_size), static_cast<size_t>(n) - off);

        int wc = enc.classifier_node(tape, w, prompt_node, task.classes);
        int feats = tape.leaf(gather_feature_rows(task.train.features, orders[t], off, count));
        int clip = tape.affine(tape.matmul_nt(feats, wc), settings.logit_scale, 0.0);
        int ce = tape.cross_entropy_loss(clip, gather_labels(task.train.labels, orders[t], off, count),
                                         settings.reduction);
        loss_acc = loss_acc < 0 ? ce : tape.add(loss_acc, ce);
      }
      int loss = task_count == 1
                     ? loss_acc
                     : tape.affine(loss_acc, 1.0 / static_cast<double>(task_count), 0.0);
      tape.backward(loss);
      optimizer_step(prompt.vectors.v, tape.grad(prompt_node).v, state, opt, lr_t);

      loss_sum += tape.value(loss).v[0];
      report.per_step_lr.push_back(lr_t);
      ++step;
    }

    double val_acc = mean_val();
    report.per_epoch.push_back(
        {epoch, loss_sum / static_cast<double>(per_epoch_steps), val_acc, first_lr});
    track_best(best, val_acc, epoch, {&prompt.vectors}, settings.select_best_epoch);
  }

  if (settings.select_best_epoch && !best.params.empty()) {
    prompt.vectors = best.params[0];
    report.best_epoch = best.epoch;
  } else {
    report.best_epoch = opt.epochs;
  }
  report.final_checksums["prompt"] = hex64(mat_checksum(prompt.vectors));
  report.seconds = elapsed_seconds(start);
  if (report_out) *report_out = report;
  return prompt;
}

}  // namespace pad
