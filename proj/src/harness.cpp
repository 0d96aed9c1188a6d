#include "pad/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "pad/error.hpp"
#include "pad/fusion.hpp"
#include "pad/rng.hpp"
#include "pad/tape.hpp"

#include <nlohmann/json.hpp>

namespace pad {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

PromptContext random_prompt(const FrozenTextEncoder& enc, int length, uint64_t seed) {
  Rng rng = Rng::substream(seed, "prompt-init");
  PromptContext p;
  p.vectors = Mat(length, enc.config().embed_dim);
  double stddev = 1.0 / std::sqrt(static_cast<double>(enc.config().embed_dim));
  for (double& x : p.vectors.v) x = stddev * rng.gaussian();
  p.learnable = true;
  return p;
}

double fused_accuracy(const Mat& wc, const CacheModel* cache, const AdapterHyperparams* hp,
                      const LabeledFeatures& data, double scale) {
  LogitBatch clip = clip_logits(data.features, wc, scale);
  if (cache == nullptr) return accuracy(predict(clip), data.labels);
  LogitBatch fused =
      final_logits(clip, as_cache_logits(cache_logits(data.features, *cache, hp->beta)), hp->alpha);
  return accuracy(predict(fused), data.labels);
}

uint64_t dataset_seed(uint64_t seed, const std::string& name) {
  return mix64(seed ^ hash_str(name));
}

}  // namespace

void validate_method(const MethodSpec& spec) {
  bool manual_only = spec.kind == MethodKind::ZeroShot || spec.kind == MethodKind::LinearProbe ||
                     spec.kind == MethodKind::TipAdapter || spec.kind == MethodKind::TipAdapterF;
  if (manual_only && spec.init != PromptInit::Manual)
    raise(Err::InvalidConfig, to_string(spec.kind) + " requires manual prompt init");
  if (spec.kind == MethodKind::PromptAdapterF) {
    if (spec.strategy == Strategy::None)
      raise(Err::InvalidConfig, "prompt_adapter_f needs a training strategy");
  } else if (spec.strategy != Strategy::None) {
    raise(Err::InvalidConfig, to_string(spec.kind) + " forbids a training strategy");
  }
}

std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::ZeroShot: return "zero_shot";
    case MethodKind::LinearProbe: return "linear_probe";
    case MethodKind::TipAdapter: return "tip_adapter";
    case MethodKind::TipAdapterF: return "tip_adapter_f";
    case MethodKind::PromptAdapter: return "prompt_adapter";
    case MethodKind::PromptAdapterF: return "prompt_adapter_f";
  }
  return "?";
}

std::string to_string(PromptInit i) {
  switch (i) {
    case PromptInit::Manual: return "manual";
    case PromptInit::Random: return "random";
    case PromptInit::PretrainedMultitask: return "pretrained-multitask";
  }
  return "?";
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::None: return "none";
    case Strategy::Separate: return "separate";
    case Strategy::Joint: return "joint";
  }
  return "?";
}

MethodKind method_kind_from_string(const std::string& s) {
  for (MethodKind k : {MethodKind::ZeroShot, MethodKind::LinearProbe, MethodKind::TipAdapter,
                       MethodKind::TipAdapterF, MethodKind::PromptAdapter, MethodKind::PromptAdapterF})
    if (to_string(k) == s) return k;
  raise(Err::InvalidConfig, "unknown method kind: " + s);
}

PromptInit prompt_init_from_string(const std::string& s) {
  for (PromptInit i : {PromptInit::Manual, PromptInit::Random, PromptInit::PretrainedMultitask})
    if (to_string(i) == s) return i;
  raise(Err::InvalidConfig, "unknown prompt init: " + s);
}

Strategy strategy_from_string(const std::string& s) {
  for (Strategy st : {Strategy::None, Strategy::Separate, Strategy::Joint})
    if (to_string(st) == s) return st;
  raise(Err::InvalidConfig, "unknown strategy: " + s);
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) raise(Err::LengthMismatch, "accuracy");
  if (predictions.empty()) raise(Err::Empty, "accuracy of empty batch");
  size_t hits = 0;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

HarnessConfig::HarnessConfig() {
  for (int i = 1; i <= 10; ++i) alpha_grid.push_back(0.5 * i);
  for (int i = 1; i <= 10; ++i) beta_grid.push_back(static_cast<double>(i));

  opt_prompt.kind = OptKind::Sgd;
  opt_prompt.lr = 0.002;
  opt_prompt.momentum = 0.9;
  opt_prompt.batch_size = 32;
  opt_prompt.epochs = 0;  // by shot count
  opt_prompt.schedule = Schedule::Cosine;

  opt_cache.kind = OptKind::AdamW;
  opt_cache.lr = 0.001;
  opt_cache.weight_decay = 0.01;
  opt_cache.batch_size = 256;
  opt_cache.epochs = 20;
  opt_cache.schedule = Schedule::Cosine;

  opt_joint = opt_cache;
  opt_joint.batch_size = 32;
  opt_joint.epochs = 0;  // matched to the separate budget when 0

  opt_multitask = opt_prompt;
  opt_multitask.epochs = 100;

  opt_probe.kind = OptKind::Sgd;
  opt_probe.lr = 0.5;
  opt_probe.momentum = 0.9;
  opt_probe.batch_size = 1 << 30;  // full batch
  opt_probe.epochs = 300;
  opt_probe.schedule = Schedule::Constant;
}

int HarnessConfig::prompt_epochs_for(int shots) const {
  if (opt_prompt.epochs > 0) return opt_prompt.epochs;
  if (shots <= 1) return 50;
  if (shots <= 4) return 100;
  return 200;
}

ResultRow linear_probe(const FewShotDataset& ds, int shots, uint64_t seed,
                       const OptimizerConfig& opt) {
  Clock::time_point start = Clock::now();
  LabeledFeatures train = gather_rows(ds, sample_few_shot(ds, {shots, dataset_seed(seed, ds.name)}));

  Mat weights(ds.classes, ds.dim);
  Mat bias(1, ds.classes);
  OptimizerState state;
  std::vector<double> params(weights.size() + bias.size());
  std::vector<double> grads(params.size());
  long total = opt.epochs;
  for (long epoch = 0; epoch < total; ++epoch) {
    GradientTape tape;
    int w = tape.leaf(weights, true);
    int b = tape.leaf(bias, true);
    int x = tape.leaf(train.features);
    int logits = tape.add_row_broadcast(tape.matmul_nt(x, w), b);
    int loss = tape.cross_entropy_loss(logits, train.labels, Reduction::Mean);
    tape.backward(loss);

    double lr_t = scheduled_lr(opt, epoch, total);
    std::copy(weights.v.begin(), weights.v.end(), params.begin());
    std::copy(bias.v.begin(), bias.v.end(), params.begin() + static_cast<long>(weights.size()));
    std::copy(tape.grad(w).v.begin(), tape.grad(w).v.end(), grads.begin());
    std::copy(tape.grad(b).v.begin(), tape.grad(b).v.end(),
              grads.begin() + static_cast<long>(weights.size()));
    optimizer_step(params, grads, state, opt, lr_t);
    std::copy(params.begin(), params.begin() + static_cast<long>(weights.size()), weights.v.begin());
    std::copy(params.begin() + static_cast<long>(weights.size()), params.end(), bias.v.begin());
  }

  LabeledFeatures test = ds.split_view(Split::Test);
  Mat logits = matmul_nt(test.features, weights);
  for (int i = 0; i < logits.rows; ++i)
    for (int j = 0; j < logits.cols; ++j) logits.at(i, j) += bias.v[static_cast<size_t>(j)];
  LogitBatch batch;
  batch.kind = LogitKind::Final;
  batch.values = std::move(logits);

  ResultRow row;
  row.dataset = ds.name;
  row.method = {MethodKind::LinearProbe, PromptInit::Manual, Strategy::None};
  row.shots = shots;
  row.seed = seed;
  row.accuracy = accuracy(predict(batch), test.labels);
  row.seconds = elapsed_seconds(start);
  return row;
}

SweepResult sweep_alpha_beta(const LabeledFeatures& val, const Mat& classifier,
                             const CacheModel& cache, const std::vector<double>& alphas,
                             const std::vector<double>& betas, double logit_scale) {
  if (alphas.empty() || betas.empty()) raise(Err::EmptyGrid, "alpha/beta grid");
  if (val.empty()) raise(Err::EmptySplit, "sweep validation split");

  SweepResult out;
  out.alphas = alphas;
  out.betas = betas;
  out.surface = Mat(static_cast<int>(alphas.size()), static_cast<int>(betas.size()));
  LogitBatch clip = clip_logits(val.features, classifier, logit_scale);
  bool first = true;
  for (size_t bi = 0; bi < betas.size(); ++bi) {
    LogitBatch gcache = as_cache_logits(cache_logits(val.features, cache, betas[bi]));
    for (size_t ai = 0; ai < alphas.size(); ++ai) {
      double acc = accuracy(predict(final_logits(clip, gcache, alphas[ai])), val.labels);
      out.surface.at(static_cast<int>(ai), static_cast<int>(bi)) = acc;
      // argmax with ties to the smallest alpha, then smallest beta
      bool better = acc > out.val_accuracy;
      bool tie = acc == out.val_accuracy &&
                 (alphas[ai] < out.alpha || (alphas[ai] == out.alpha && betas[bi] < out.beta));
      if (first || better || tie) {
        out.alpha = alphas[ai];
        out.beta = betas[bi];
        out.val_accuracy = acc;
        first = false;
      }
    }
  }
  return out;
}

ResultRow evaluate_method(const FewShotDataset& ds, const FrozenTextEncoder& enc,
                          const MethodSpec& spec, int shots, uint64_t seed,
                          const HarnessConfig& cfg, const PromptContext* shared_prompt) {
  validate_method(spec);
  Clock::time_point start = Clock::now();
  LabeledFeatures test = ds.split_view(Split::Test);

  ResultRow row;
  row.dataset = ds.name;
  row.method = spec;
  row.shots = shots;
  row.seed = seed;

  if (spec.kind == MethodKind::LinearProbe) {
    row = linear_probe(ds, shots, seed, cfg.opt_probe);
    row.seed = seed;
    return row;
  }

  if (spec.kind == MethodKind::ZeroShot) {
    Mat wc = enc.build_classifier_weights(enc.manual_prompt(cfg.template_tokens), ds.class_tokens);
    row.accuracy = fused_accuracy(wc, nullptr, nullptr, test, cfg.logit_scale);
    row.seconds = elapsed_seconds(start);
    return row;
  }

  uint64_t ds_seed = dataset_seed(seed, ds.name);
  LabeledFeatures episode = gather_rows(ds, sample_few_shot(ds, {shots, ds_seed}));
  LabeledFeatures val = ds.split_view(Split::Val);

  // prompt per init; random and multitask inits are trained on the episode
  PromptContext prompt;
  bool trained_prompt_needed =
      spec.init != PromptInit::Manual && spec.strategy != Strategy::Joint;
  if (spec.init == PromptInit::Manual) {
    prompt = enc.manual_prompt(cfg.template_tokens);
  } else if (spec.init == PromptInit::Random) {
    prompt = random_prompt(enc, cfg.prompt_length, ds_seed);
  } else {
    if (shared_prompt == nullptr)
      raise(Err::InvalidConfig, "pretrained-multitask init needs a shared prompt");
    prompt = *shared_prompt;
    prompt.learnable = true;
  }

  OptimizerConfig opt_prompt = cfg.opt_prompt;
  opt_prompt.epochs = cfg.prompt_epochs_for(shots);
  opt_prompt.seed = mix64(ds_seed ^ hash_str("prompt-opt"));
  OptimizerConfig opt_cache = cfg.opt_cache;
  opt_cache.seed = mix64(ds_seed ^ hash_str("cache-opt"));

  if (trained_prompt_needed && spec.kind != MethodKind::PromptAdapterF)
    train_prompt(enc, prompt, episode, val, ds.class_tokens, opt_prompt, cfg.train);

  CacheModel cache = build_cache(episode.features, episode.labels, ds.classes);

  if (spec.kind == MethodKind::PromptAdapter || spec.kind == MethodKind::TipAdapter) {
    Mat wc = enc.build_classifier_weights(prompt, ds.class_tokens);
    SweepResult sw = sweep_alpha_beta(val, wc, cache, cfg.alpha_grid, cfg.beta_grid, cfg.logit_scale);
    AdapterHyperparams hp{sw.alpha, sw.beta};
    row.alpha = sw.alpha;
    row.beta = sw.beta;
    row.accuracy = fused_accuracy(wc, &cache, &hp, test, cfg.logit_scale);
    row.seconds = elapsed_seconds(start);
    return row;
  }

  // fine-tuned variants: sweep to pick the training-time (alpha, beta),
  // train, sweep again, then touch the test split exactly once
  cache.learnable = true;
  if (spec.kind == MethodKind::TipAdapterF || spec.strategy == Strategy::Separate) {
    if (spec.kind == MethodKind::PromptAdapterF && spec.init != PromptInit::Manual)
      train_prompt(enc, prompt, episode, val, ds.class_tokens, opt_prompt, cfg.train);
    Mat wc = enc.build_classifier_weights(prompt, ds.class_tokens);
    SweepResult pre = sweep_alpha_beta(val, wc, cache, cfg.alpha_grid, cfg.beta_grid, cfg.logit_scale);
    AdapterHyperparams hp{pre.alpha, pre.beta};
    PromptContext frozen = prompt;
    frozen.learnable = false;
    train_cache_keys(enc, frozen, cache, episode, val, ds.class_tokens, hp, opt_cache, cfg.train);
    SweepResult post = sweep_alpha_beta(val, wc, cache, cfg.alpha_grid, cfg.beta_grid, cfg.logit_scale);
    AdapterHyperparams best{post.alpha, post.beta};
    row.alpha = post.alpha;
    row.beta = post.beta;
    row.accuracy = fused_accuracy(wc, &cache, &best, test, cfg.logit_scale);
    row.seconds = elapsed_seconds(start);
    return row;
  }

  // joint strategy
  {
    if (spec.init == PromptInit::Manual) prompt.learnable = true;
    Mat wc0 = enc.build_classifier_weights(prompt, ds.class_tokens);
    SweepResult pre = sweep_alpha_beta(val, wc0, cache, cfg.alpha_grid, cfg.beta_grid, cfg.logit_scale);
    AdapterHyperparams hp{pre.alpha, pre.beta};
    OptimizerConfig opt_joint = cfg.opt_joint;
    if (opt_joint.epochs <= 0) {
      // match the separate strategy's total step budget
      long n = episode.features.rows;
      long sep_steps = static_cast<long>(cfg.prompt_epochs_for(shots)) *
                           ((n + cfg.opt_prompt.batch_size - 1) / cfg.opt_prompt.batch_size) +
                       static_cast<long>(cfg.opt_cache.epochs) *
                           ((n + cfg.opt_cache.batch_size - 1) / cfg.opt_cache.batch_size);
      long joint_per_epoch = (n + opt_joint.batch_size - 1) / opt_joint.batch_size;
      opt_joint.epochs = static_cast<int>((sep_steps + joint_per_epoch - 1) / joint_per_epoch);
    }
    opt_joint.seed = mix64(ds_seed ^ hash_str("joint-opt"));
    train_joint(enc, prompt, cache, episode, val, ds.class_tokens, hp, opt_joint, cfg.train);
    Mat wc = enc.build_classifier_weights(prompt, ds.class_tokens);
    SweepResult post = sweep_alpha_beta(val, wc, cache, cfg.alpha_grid, cfg.beta_grid, cfg.logit_scale);
    AdapterHyperparams best{post.alpha, post.beta};
    row.alpha = post.alpha;
    row.beta = post.beta;
    row.accuracy = fused_accuracy(wc, &cache, &best, test, cfg.logit_scale);
    row.seconds = elapsed_seconds(start);
    return row;
  }
}

std::string result_csv_header() {
  return "dataset,method,prompt_init,strategy,shots,seed,alpha,beta,accuracy,seconds";
}

std::string result_csv_line(const ResultRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%d,%llu,%.10g,%.10g,%.10g,%.3f",
                row.dataset.c_str(), to_string(row.method.kind).c_str(),
                to_string(row.method.init).c_str(), to_string(row.method.strategy).c_str(),
                row.shots, static_cast<unsigned long long>(row.seed), row.alpha, row.beta,
                row.accuracy, row.seconds);
  return std::string(buf);
}

std::vector<ResultRow> read_result_csv(const std::string& path) {
  std::vector<ResultRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 10) raise(Err::FormatError, "results row: " + line);
    ResultRow row;
    row.dataset = fields[0];
    row.method.kind = method_kind_from_string(fields[1]);
    row.method.init = prompt_init_from_string(fields[2]);
    row.method.strategy = strategy_from_string(fields[3]);
    row.shots = std::stoi(fields[4]);
    row.seed = std::stoull(fields[5]);
    row.alpha = std::stod(fields[6]);
    row.beta = std::stod(fields[7]);
    row.accuracy = std::stod(fields[8]);
    row.seconds = std::stod(fields[9]);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string cell_key(const ResultRow& row) {
  return row.dataset + "|" + to_string(row.method.kind) + "|" + to_string(row.method.init) + "|" +
         to_string(row.method.strategy) + "|" + std::to_string(row.shots) + "|" +
         std::to_string(row.seed);
}

}  // namespace

std::string summarize_rows(const std::vector<ResultRow>& rows) {
  // group by (dataset, method, init, strategy, shots)
  std::map<std::string, std::vector<const ResultRow*>> cells;
  for (const ResultRow& row : rows) {
    std::string key = row.dataset + "|" + to_string(row.method.kind) + "|" +
                      to_string(row.method.init) + "|" + to_string(row.method.strategy) + "|" +
                      std::to_string(row.shots);
    cells[key].push_back(&row);
  }

  nlohmann::json out;
  out["cells"] = nlohmann::json::array();
  std::map<std::string, std::pair<double, int>> method_totals;  // over datasets
  for (const auto& [key, group] : cells) {
    double mean = 0.0;
    for (const ResultRow* r : group) mean += r->accuracy;
    mean /= static_cast<double>(group.size());
    double var = 0.0;
    for (const ResultRow* r : group) var += (r->accuracy - mean) * (r->accuracy - mean);
    double stddev = group.size() > 1 ? std::sqrt(var / static_cast<double>(group.size() - 1)) : 0.0;
    const ResultRow* first = group.front();
    out["cells"].push_back({{"dataset", first->dataset},
                            {"method", to_string(first->method.kind)},
                            {"prompt_init", to_string(first->method.init)},
                            {"strategy", to_string(first->method.strategy)},
                            {"shots", first->shots},
                            {"mean", mean},
                            {"std", stddev},
                            {"seeds", group.size()}});
    std::string mkey = to_string(first->method.kind) + "|" + to_string(first->method.init) + "|" +
                       to_string(first->method.strategy) + "|" + std::to_string(first->shots);
    method_totals[mkey].first += mean;
    method_totals[mkey].second += 1;
  }

  // the cross-dataset Average column: unweighted mean over datasets
  out["method_averages"] = nlohmann::json::array();
  for (const auto& [mkey, total] : method_totals) {
    std::stringstream ss(mkey);
    std::string method, init, strategy, shots;
    std::getline(ss, method, '|');
    std::getline(ss, init, '|');
    std::getline(ss, strategy, '|');
    std::getline(ss, shots, '|');
    out["method_averages"].push_back({{"method", method},
                                      {"prompt_init", init},
                                      {"strategy", strategy},
                                      {"shots", std::stoi(shots)},
                                      {"datasets", total.second},
                                      {"mean_over_datasets", total.first / total.second}});
  }
  return out.dump(2);
}

ExperimentResult run_experiment(const std::vector<DatasetHandle>& datasets, const GridSpec& grid,
                                const HarnessConfig& cfg, const std::string& rows_csv_path,
                                int workers) {
  if (datasets.empty()) raise(Err::InvalidConfig, "no datasets");
  if (grid.methods.empty() || grid.shots.empty() || grid.seeds.empty())
    raise(Err::InvalidConfig, "empty grid axis");
  for (const MethodSpec& m : grid.methods) validate_method(m);
  if (workers < 1) workers = 1;

  std::vector<ResultRow> existing = read_result_csv(rows_csv_path);
  std::map<std::string, bool> done;
  for (const ResultRow& row : existing) done[cell_key(row)] = true;

  // shared multitask prompts, one per (shots, seed), built lazily
  bool needs_shared = false;
  for (const MethodSpec& m : grid.methods)
    if (m.init == PromptInit::PretrainedMultitask) needs_shared = true;
  std::map<std::string, PromptContext> shared_prompts;
  std::mutex shared_mutex;
  auto shared_for = [&](int shots, uint64_t seed) -> const PromptContext* {
    std::string key = std::to_string(shots) + "|" + std::to_string(seed);
    std::lock_guard<std::mutex> lock(shared_mutex);
    auto it = shared_prompts.find(key);
    if (it != shared_prompts.end()) return &it->second;
    std::vector<Task> tasks;
    for (const DatasetHandle& h : datasets) {
      Task t;
      t.name = h.dataset->name;
      uint64_t ds_seed = dataset_seed(seed, h.dataset->name);
      t.train = gather_rows(*h.dataset, sample_few_shot(*h.dataset, {shots, ds_seed}));
      t.val = h.dataset->split_view(Split::Val);
      t.classes = h.dataset->class_tokens;
      tasks.push_back(std::move(t));
    }
    OptimizerConfig opt = cfg.opt_multitask;
    opt.seed = mix64(seed ^ hash_str("multitask-opt"));
    PromptContext init = random_prompt(*datasets.front().encoder, cfg.prompt_length,
                                       mix64(seed ^ hash_str("multitask-init")));
    PromptContext shared =
        multitask_pretrain_prompt(*datasets.front().encoder, init, tasks, opt, cfg.train);
    auto [pos, inserted] = shared_prompts.emplace(key, std::move(shared));
    return &pos->second;
  };

  struct Cell {
    const DatasetHandle* handle;
    MethodSpec method;
    int shots;
    uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const DatasetHandle& h : datasets)
    for (const MethodSpec& m : grid.methods)
      for (int shots : grid.shots)
        for (uint64_t seed : grid.seeds) {
          ResultRow probe;
          probe.dataset = h.dataset->name;
          probe.method = m;
          probe.shots = shots;
          probe.seed = seed;
          if (!done.count(cell_key(probe))) cells.push_back({&h, m, shots, seed});
        }

  std::ofstream out;
  if (!cells.empty() || existing.empty()) {
    bool fresh = existing.empty();
    out.open(rows_csv_path, fresh ? std::ios::trunc : std::ios::app);
    if (!out) raise(Err::IoError, "cannot open " + rows_csv_path);
    if (fresh) out << result_csv_header() << "\n";
  }

  // bounded pool; rows flush in submission order so reruns are byte-identical
  std::vector<std::optional<ResultRow>> results(cells.size());
  std::vector<std::string> failures;
  std::mutex flush_mutex;
  size_t next_flush = 0;
  std::atomic<size_t> next_cell{0};

  auto worker = [&]() {
    for (;;) {
      size_t i = next_cell.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      ResultRow row;
      bool ok = true;
      try {
        const PromptContext* shared =
            needs_shared && cell.method.init == PromptInit::PretrainedMultitask
                ? shared_for(cell.shots, cell.seed)
                : nullptr;
        row = evaluate_method(*cell.handle->dataset, *cell.handle->encoder, cell.method, cell.shots,
                              cell.seed, cfg, shared);
      } catch (const std::exception& e) {
        ok = false;
        std::lock_guard<std::mutex> lock(flush_mutex);
        failures.push_back(std::string(e.what()));
      }
      std::lock_guard<std::mutex> lock(flush_mutex);
      if (ok) results[i] = std::move(row);
      else results[i] = ResultRow{};  // placeholder so the flush pointer can advance
      while (next_flush < cells.size() && results[next_flush].has_value()) {
        if (!results[next_flush]->dataset.empty())
          out << result_csv_line(*results[next_flush]) << "\n" << std::flush;
        ++next_flush;
      }
    }
  };

  if (workers == 1 || cells.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    int n = std::min<int>(workers, static_cast<int>(cells.size()));
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (out.is_open()) out.close();

  if (!failures.empty())
    raise(Err::InvalidConfig, "grid cells failed (partial results kept): " + failures.front());

  ExperimentResult result;
  result.rows = read_result_csv(rows_csv_path);
  result.summary_json = summarize_rows(result.rows);
  return result;
}

}  // namespace pad
