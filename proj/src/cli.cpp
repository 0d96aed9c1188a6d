#include "pad/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pad/checksum.hpp"
#include "pad/config.hpp"
#include "pad/data.hpp"
#include "pad/error.hpp"
#include "pad/fusion.hpp"
#include "pad/harness.hpp"
#include "pad/rng.hpp"
#include "pad/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace pad {

namespace {

using nlohmann::json;

void log_json(const std::string& level, const std::string& msg, json fields = json::object()) {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  fields["ts"] = buf;
  fields["level"] = level;
  fields["msg"] = msg;
  std::cerr << fields.dump() << "\n";
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
};

ExperimentConfig resolve_config(const CommonArgs& common) {
  std::string text = common.config_path.empty()
                         ? default_config_json()
                         : [&common]() {
                             std::ifstream in(common.config_path);
                             if (!in) raise(Err::IoError, "cannot open config " + common.config_path);
                             return std::string((std::istreambuf_iterator<char>(in)),
                                                std::istreambuf_iterator<char>());
                           }();
  for (const std::string& assignment : common.overrides) apply_override(text, assignment);
  ExperimentConfig cfg = config_from_json_text(text);
  if (const char* env = std::getenv("PAD_OUT")) cfg.output_dir = env;
  log_json("info", "config resolved",
           {{"config_hash", hex64(cfg.hash())}, {"output_dir", cfg.output_dir}});
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) raise(Err::IoError, "cannot write " + path);
  out << text;
}

double zero_shot_accuracy(const FewShotDataset& ds, const FrozenTextEncoder& enc,
                          const HarnessConfig& h) {
  Mat wc = enc.build_classifier_weights(enc.manual_prompt(h.template_tokens), ds.class_tokens);
  LabeledFeatures test = ds.split_view(Split::Test);
  return accuracy(predict(clip_logits(test.features, wc, h.logit_scale)), test.labels);
}

void append_result_row(const ExperimentConfig& cfg, const ResultRow& row) {
  std::filesystem::create_directories(cfg.output_dir);
  std::string path = cfg.output_dir + "/results.csv";
  bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) raise(Err::IoError, "cannot append to " + path);
  if (fresh) out << result_csv_header() << "\n";
  out << result_csv_line(row) << "\n";
}

PromptContext initial_prompt(const ExperimentConfig& cfg, const FrozenTextEncoder& enc,
                             const std::string& init, const std::string& prompt_file,
                             uint64_t seed) {
  if (!prompt_file.empty()) {
    PromptContext p = load_prompt(prompt_file, enc.config().embed_dim);
    p.learnable = true;
    return p;
  }
  if (init == "manual") {
    PromptContext p = enc.manual_prompt(cfg.harness.template_tokens);
    p.learnable = true;  // manual embeddings as a trainable starting point
    return p;
  }
  if (init != "random") raise(Err::InvalidConfig, "init must be manual, random, or a --prompt-file");
  Rng rng = Rng::substream(seed, "prompt-init");
  PromptContext p;
  p.vectors = Mat(cfg.harness.prompt_length, enc.config().embed_dim);
  double stddev = 1.0 / std::sqrt(static_cast<double>(enc.config().embed_dim));
  for (double& x : p.vectors.v) x = stddev * rng.gaussian();
  p.learnable = true;
  return p;
}

int cmd_gen(const CommonArgs& common, const std::string& out_dir) {
  ExperimentConfig cfg = resolve_config(common);
  SyntheticWorld world = generate_synthetic(cfg.dataset, common.seed, cfg.encoder, cfg.contrastive,
                                            cfg.harness.template_tokens);
  std::string dir = out_dir.empty() ? cfg.output_dir + "/" + world.dataset.name : out_dir;
  save_dataset(world.dataset, dir);
  log_json("info", "dataset written",
           {{"dir", dir},
            {"rows", world.dataset.features.rows},
            {"provenance", world.dataset.provenance}});
  std::cout << dir << "\n";
  return 0;
}

int cmd_pretrain(const CommonArgs& common, const std::string& data_dir, const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(common);
  FewShotDataset ds = load_dataset(data_dir);
  FrozenTextEncoder enc(cfg.encoder);

  double before = zero_shot_accuracy(ds, enc, cfg.harness);
  LabeledFeatures train = ds.split_view(Split::Train);
  AlignConfig a = cfg.contrastive;
  a.seed = mix64(ds.seed ^ hash_str("align"));
  std::vector<double> losses = align_embedding_table(enc, train.features, train.labels,
                                                     ds.class_tokens, cfg.harness.template_tokens, a);
  double after = zero_shot_accuracy(ds, enc, cfg.harness);

  json report;
  report["config_hash"] = hex64(cfg.hash());
  report["dataset"] = ds.name;
  report["epochs"] = losses.size();
  report["losses"] = losses;
  report["zero_shot_before"] = before;
  report["zero_shot_after"] = after;
  std::string path = out_path.empty() ? cfg.output_dir + "/pretrain-" + ds.name + ".json" : out_path;
  write_text(path, report.dump(2) + "\n");
  log_json("info", "pretraining done",
           {{"zero_shot_before", before}, {"zero_shot_after", after}, {"report", path}});
  std::cout << path << "\n";
  return 0;
}

int cmd_cache_build(const CommonArgs& common, const std::string& data_dir, int shots,
                    const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(common);
  FewShotDataset ds = load_dataset(data_dir);
  uint64_t ds_seed = mix64(common.seed ^ hash_str(ds.name));
  LabeledFeatures episode = gather_rows(ds, sample_few_shot(ds, {shots, ds_seed}));
  CacheModel cache = build_cache(episode.features, episode.labels, ds.classes);
  std::string path = out_path.empty() ? cfg.output_dir + "/" + ds.name + "-k" +
                                            std::to_string(shots) + ".pacm"
                                      : out_path;
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  save_cache(cache, path, cfg.hash());
  log_json("info", "cache written",
           {{"path", path}, {"keys", cache.keys.rows}, {"classes", cache.classes}, {"shots", cache.shots}});
  std::cout << path << "\n";
  return 0;
}

int cmd_train_prompt(const CommonArgs& common, const std::string& data_dir, int shots,
                     const std::string& init, const std::string& prompt_file,
                     const std::string& out_path, const std::string& prompt_out) {
  ExperimentConfig cfg = resolve_config(common);
  FewShotDataset ds = load_dataset(data_dir);
  FrozenTextEncoder enc = make_encoder(cfg, {&ds});

  uint64_t ds_seed = mix64(common.seed ^ hash_str(ds.name));
  LabeledFeatures episode = gather_rows(ds, sample_few_shot(ds, {shots, ds_seed}));
  LabeledFeatures val = ds.split_view(Split::Val);

  PromptContext prompt = initial_prompt(cfg, enc, init, prompt_file, ds_seed);
  OptimizerConfig opt = cfg.harness.opt_prompt;
  opt.epochs = cfg.harness.prompt_epochs_for(shots);
  opt.seed = mix64(ds_seed ^ hash_str("prompt-opt"));
  TrainReport report = train_prompt(enc, prompt, episode, val, ds.class_tokens, opt, cfg.harness.train);
  report.config_hash = hex64(cfg.hash());

  std::string path = out_path.empty() ? cfg.output_dir + "/train-prompt-" + ds.name + ".json" : out_path;
  write_text(path, report_to_json(report) + "\n");
  if (!prompt_out.empty()) save_prompt(prompt_out, prompt);
  log_json("info", "prompt trained",
           {{"report", path},
            {"best_epoch", report.best_epoch},
            {"final_val_acc",
             report.per_epoch.empty() ? report.initial_val_acc : report.per_epoch.back().val_acc}});
  std::cout << path << "\n";
  return 0;
}

int cmd_train(const CommonArgs& common, const std::string& data_dir, int shots,
              const std::string& strategy_name, const std::string& init,
              const std::string& prompt_file, double alpha, double beta,
              const std::string& cache_file, const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(common);
  FewShotDataset ds = load_dataset(data_dir);
  FrozenTextEncoder enc = make_encoder(cfg, {&ds});
  Strategy strategy = strategy_from_string(strategy_name);
  if (strategy == Strategy::None) raise(Err::InvalidConfig, "train needs --strategy separate|joint");

  uint64_t ds_seed = mix64(common.seed ^ hash_str(ds.name));
  LabeledFeatures episode = gather_rows(ds, sample_few_shot(ds, {shots, ds_seed}));
  LabeledFeatures val = ds.split_view(Split::Val);

  CacheModel cache;
  if (!cache_file.empty()) {
    LoadedCache loaded = load_cache(cache_file);
    if (loaded.config_hash != cfg.hash())
      log_json("warn", "cache config hash mismatch",
               {{"cache", hex64(loaded.config_hash)}, {"config", hex64(cfg.hash())}});
    if (loaded.cache.classes != ds.classes || loaded.cache.shots != shots ||
        loaded.cache.keys.cols != ds.dim)
      raise(Err::InvalidConfig, "cache file does not match dataset/shots");
    cache = std::move(loaded.cache);
  } else {
    cache = build_cache(episode.features, episode.labels, ds.classes);
  }
  cache.learnable = true;

  PromptContext prompt = initial_prompt(cfg, enc, init, prompt_file, ds_seed);
  OptimizerConfig opt_prompt = cfg.harness.opt_prompt;
  opt_prompt.epochs = cfg.harness.prompt_epochs_for(shots);
  opt_prompt.seed = mix64(ds_seed ^ hash_str("prompt-opt"));
  OptimizerConfig opt_cache = cfg.harness.opt_cache;
  opt_cache.seed = mix64(ds_seed ^ hash_str("cache-opt"));

  TrainReport report;
  AdapterHyperparams hp{alpha, beta};
  if (strategy == Strategy::Separate) {
    if (init == "manual" && prompt_file.empty()) {
      // handcrafted prompt stays frozen; only the keys move
      PromptContext frozen = enc.manual_prompt(cfg.harness.template_tokens);
      if (!(alpha > 0.0) || !(beta > 0.0)) {
        Mat wc = enc.build_classifier_weights(frozen, ds.class_tokens);
        SweepResult sw = sweep_alpha_beta(val, wc, cache, cfg.harness.alpha_grid,
                                          cfg.harness.beta_grid, cfg.harness.logit_scale);
        hp = {sw.alpha, sw.beta};
      }
      report = train_cache_keys(enc, frozen, cache, episode, val, ds.class_tokens, hp, opt_cache,
                                cfg.harness.train);
    } else {
      TrainReport phase1 =
          train_prompt(enc, prompt, episode, val, ds.class_tokens, opt_prompt, cfg.harness.train);
      if (!(alpha > 0.0) || !(beta > 0.0)) {
        Mat wc = enc.build_classifier_weights(prompt, ds.class_tokens);
        SweepResult sw = sweep_alpha_beta(val, wc, cache, cfg.harness.alpha_grid,
                                          cfg.harness.beta_grid, cfg.harness.logit_scale);
        hp = {sw.alpha, sw.beta};
      }
      PromptContext frozen = prompt;
      frozen.learnable = false;
      TrainReport phase2 = train_cache_keys(enc, frozen, cache, episode, val, ds.class_tokens, hp,
                                            opt_cache, cfg.harness.train);
      report = phase1;
      for (EpochStat e : phase2.per_epoch) {
        e.epoch += opt_prompt.epochs;
        report.per_epoch.push_back(e);
      }
      report.seconds += phase2.seconds;
      report.final_checksums["cache_keys"] = phase2.final_checksums.at("cache_keys");
    }
  } else {
    if (!(alpha > 0.0) || !(beta > 0.0)) {
      Mat wc = enc.build_classifier_weights(prompt, ds.class_tokens);
      SweepResult sw = sweep_alpha_beta(val, wc, cache, cfg.harness.alpha_grid,
                                        cfg.harness.beta_grid, cfg.harness.logit_scale);
      hp = {sw.alpha, sw.beta};
    }
    OptimizerConfig opt_joint = cfg.harness.opt_joint;
    if (opt_joint.epochs <= 0) opt_joint.epochs = opt_prompt.epochs + opt_cache.epochs;
    opt_joint.seed = mix64(ds_seed ^ hash_str("joint-opt"));
    report = train_joint(enc, prompt, cache, episode, val, ds.class_tokens, hp, opt_joint,
                         cfg.harness.train);
  }
  report.config_hash = hex64(cfg.hash());

  std::string path = out_path.empty() ? cfg.output_dir + "/train-" + strategy_name + "-" + ds.name +
                                            ".json"
                                      : out_path;
  write_text(path, report_to_json(report) + "\n");
  log_json("info", "training done",
           {{"report", path}, {"alpha", hp.alpha}, {"beta", hp.beta}, {"strategy", strategy_name}});
  std::cout << path << "\n";
  return 0;
}

int cmd_multitask_init(const CommonArgs& common, const std::vector<std::string>& data_dirs,
                       int shots, const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(common);
  if (data_dirs.empty()) raise(Err::EmptyTaskList, "multitask-init needs --data");
  std::vector<FewShotDataset> datasets;
  std::vector<const FewShotDataset*> ptrs;
  for (const std::string& dir : data_dirs) datasets.push_back(load_dataset(dir));
  for (const FewShotDataset& ds : datasets) ptrs.push_back(&ds);
  FrozenTextEncoder enc = make_encoder(cfg, ptrs);

  std::vector<Task> tasks;
  for (const FewShotDataset& ds : datasets) {
    Task t;
    t.name = ds.name;
    uint64_t ds_seed = mix64(common.seed ^ hash_str(ds.name));
    t.train = gather_rows(ds, sample_few_shot(ds, {shots, ds_seed}));
    t.val = ds.split_view(Split::Val);
    t.classes = ds.class_tokens;
    tasks.push_back(std::move(t));
  }

  PromptContext init = initial_prompt(cfg, enc, "random", "", mix64(common.seed ^ hash_str("multitask-init")));
  OptimizerConfig opt = cfg.harness.opt_multitask;
  opt.seed = mix64(common.seed ^ hash_str("multitask-opt"));
  TrainReport report;
  PromptContext shared = multitask_pretrain_prompt(enc, init, tasks, opt, cfg.harness.train, &report);
  report.config_hash = hex64(cfg.hash());

  std::string path = out_path.empty() ? cfg.output_dir + "/shared-prompt.json" : out_path;
  save_prompt(path, shared);
  write_text(path + ".report.json", report_to_json(report) + "\n");
  log_json("info", "shared prompt written", {{"path", path}, {"tasks", tasks.size()}});
  std::cout << path << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& data_dir, const std::string& method,
             const std::string& init, const std::string& strategy, int shots,
             const std::string& prompt_file) {
  ExperimentConfig cfg = resolve_config(common);
  FewShotDataset ds = load_dataset(data_dir);
  FrozenTextEncoder enc = make_encoder(cfg, {&ds});

  MethodSpec spec;
  spec.kind = method_kind_from_string(method);
  spec.init = prompt_init_from_string(init);
  spec.strategy = strategy_from_string(strategy);
  validate_method(spec);

  PromptContext shared;
  const PromptContext* shared_ptr = nullptr;
  if (spec.init == PromptInit::PretrainedMultitask) {
    if (prompt_file.empty())
      raise(Err::InvalidConfig, "pretrained-multitask init needs --prompt-file");
    shared = load_prompt(prompt_file, enc.config().embed_dim);
    shared_ptr = &shared;
  }

  ResultRow row = evaluate_method(ds, enc, spec, shots, common.seed, cfg.harness, shared_ptr);
  append_result_row(cfg, row);
  std::cout << result_csv_header() << "\n" << result_csv_line(row) << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& common, const std::string& data_dir, int shots,
              const std::string& init, const std::string& prompt_file, const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(common);
  FewShotDataset ds = load_dataset(data_dir);
  FrozenTextEncoder enc = make_encoder(cfg, {&ds});

  uint64_t ds_seed = mix64(common.seed ^ hash_str(ds.name));
  LabeledFeatures episode = gather_rows(ds, sample_few_shot(ds, {shots, ds_seed}));
  LabeledFeatures val = ds.split_view(Split::Val);
  CacheModel cache = build_cache(episode.features, episode.labels, ds.classes);

  PromptContext prompt = prompt_file.empty() && init == "manual"
                             ? enc.manual_prompt(cfg.harness.template_tokens)
                             : initial_prompt(cfg, enc, init, prompt_file, ds_seed);
  Mat wc = enc.build_classifier_weights(prompt, ds.class_tokens);
  SweepResult sw = sweep_alpha_beta(val, wc, cache, cfg.harness.alpha_grid, cfg.harness.beta_grid,
                                    cfg.harness.logit_scale);

  std::string csv = "alpha,beta,val_accuracy\n";
  for (size_t ai = 0; ai < sw.alphas.size(); ++ai)
    for (size_t bi = 0; bi < sw.betas.size(); ++bi) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g\n", sw.alphas[ai], sw.betas[bi],
                    sw.surface.at(static_cast<int>(ai), static_cast<int>(bi)));
      csv += buf;
    }
  std::string path = out_path.empty() ? cfg.output_dir + "/sweep-" + ds.name + ".csv" : out_path;
  write_text(path, csv);
  log_json("info", "sweep done",
           {{"alpha", sw.alpha}, {"beta", sw.beta}, {"val_accuracy", sw.val_accuracy}, {"surface", path}});
  std::cout << path << "\n";
  return 0;
}

int cmd_grid(const CommonArgs& common, int workers_flag) {
  ExperimentConfig cfg = resolve_config(common);
  if (cfg.datasets.empty()) raise(Err::InvalidConfig, "grid needs config.datasets");
  if (cfg.methods.empty()) raise(Err::InvalidConfig, "grid needs config.methods");

  std::vector<FewShotDataset> datasets;
  for (const std::string& dir : cfg.datasets) datasets.push_back(load_dataset(dir));

  // one encoder per dataset under auto/dataset alignment, one shared under
  // union/none
  std::vector<FrozenTextEncoder> encoders;
  std::vector<DatasetHandle> handles;
  if (cfg.alignment == "union" || cfg.alignment == "none") {
    std::vector<const FewShotDataset*> ptrs;
    for (const FewShotDataset& ds : datasets) ptrs.push_back(&ds);
    encoders.push_back(make_encoder(cfg, ptrs));
    for (const FewShotDataset& ds : datasets) handles.push_back({&ds, &encoders.front()});
  } else {
    encoders.reserve(datasets.size());
    for (const FewShotDataset& ds : datasets) encoders.push_back(make_encoder(cfg, {&ds}));
    for (size_t i = 0; i < datasets.size(); ++i) handles.push_back({&datasets[i], &encoders[i]});
  }

  GridSpec grid{cfg.methods, cfg.shots, cfg.seeds};
  std::filesystem::create_directories(cfg.output_dir);
  std::string rows_path = cfg.output_dir + "/results.csv";
  int workers = workers_flag > 0 ? workers_flag : cfg.workers;
  ExperimentResult result = run_experiment(handles, grid, cfg.harness, rows_path, workers);
  write_text(cfg.output_dir + "/summary.json", result.summary_json + "\n");
  log_json("info", "grid done",
           {{"rows", result.rows.size()}, {"results", rows_path},
            {"summary", cfg.output_dir + "/summary.json"}});
  std::cout << rows_path << "\n";
  return 0;
}

int cmd_report(const CommonArgs& common, const std::string& rows_path, const std::string& out_path) {
  ExperimentConfig cfg = resolve_config(common);
  std::string path = rows_path.empty() ? cfg.output_dir + "/results.csv" : rows_path;
  std::vector<ResultRow> rows = read_result_csv(path);
  if (rows.empty()) raise(Err::Empty, "no rows in " + path);
  std::string out = out_path.empty() ? cfg.output_dir + "/summary.json" : out_path;
  write_text(out, summarize_rows(rows) + "\n");
  std::cout << out << "\n";
  return 0;
}

}  // namespace

void save_prompt(const std::string& path, const PromptContext& prompt) {
  json j;
  j["embed_dim"] = prompt.vectors.cols;
  j["learnable"] = prompt.learnable;
  json rows = json::array();
  for (int i = 0; i < prompt.vectors.rows; ++i) {
    json row = json::array();
    for (int k = 0; k < prompt.vectors.cols; ++k) row.push_back(prompt.vectors.at(i, k));
    rows.push_back(row);
  }
  j["vectors"] = rows;
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) raise(Err::IoError, "cannot write " + path);
  out << j.dump() << "\n";
}

PromptContext load_prompt(const std::string& path, int expect_embed_dim) {
  std::ifstream in(path);
  if (!in) raise(Err::IoError, "cannot open prompt " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(Err::FormatError, std::string("prompt file: ") + e.what());
  }
  PromptContext p;
  int dim = j.at("embed_dim").get<int>();
  if (dim != expect_embed_dim)
    raise(Err::IncompatibleEncoder, "prompt embed_dim " + std::to_string(dim));
  p.learnable = j.at("learnable").get<bool>();
  const json& rows = j.at("vectors");
  p.vectors = Mat(static_cast<int>(rows.size()), dim);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != dim) raise(Err::FormatError, "prompt row width");
    for (int k = 0; k < dim; ++k) p.vectors.at(static_cast<int>(i), k) = rows[i][static_cast<size_t>(k)].get<double>();
  }
  return p;
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Few-shot classification engine: prompt tuning over a frozen text encoder fused "
               "with a key-value feature cache"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string data_dir, out_path, init = "random", strategy, method = "zero_shot";
  std::string prompt_file, prompt_out, cache_file, rows_path;
  std::vector<std::string> data_dirs;
  int shots = 16;
  double alpha = 0.0, beta = 0.0;
  int workers = 0;

  auto add_common = [&common](CLI::App* cmd, bool needs_seed) {
    cmd->add_option("--config", common.config_path, "experiment config JSON");
    cmd->add_option("--set", common.overrides, "override config entry, e.g. --set harness.logit_scale=100");
    CLI::Option* seed = cmd->add_option("--seed", common.seed, "root seed for all randomness");
    if (needs_seed) seed->required();
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset directory");
  add_common(gen, true);
  gen->add_option("--out,-o", out_path, "dataset directory");
  gen->add_option("--classes", "dataset classes")->each([&common](const std::string& v) {
    common.overrides.push_back("dataset.classes=" + v);
  });
  gen->add_option("--dim", "feature dimension")->each([&common](const std::string& v) {
    common.overrides.push_back("dataset.dim=" + v);
    common.overrides.push_back("encoder.feature_dim=" + v);
  });
  gen->add_option("--mode", "random | pretrained")->each([&common](const std::string& v) {
    common.overrides.push_back("dataset.mode=" + v);
  });
  gen->add_option("--sigma", "feature noise")->each([&common](const std::string& v) {
    common.overrides.push_back("dataset.sigma=" + v);
  });
  gen->add_option("--name", "dataset name")->each([&common](const std::string& v) {
    common.overrides.push_back("dataset.name=" + v);
  });

  CLI::App* pre = app.add_subcommand("pretrain", "toy contrastive alignment of the embedding table");
  add_common(pre, true);
  pre->add_option("--data", data_dir, "dataset directory")->required();
  pre->add_option("--out,-o", out_path, "report JSON path");

  CLI::App* cache_cmd = app.add_subcommand("cache", "cache file operations");
  cache_cmd->require_subcommand(1);
  CLI::App* cache_build = cache_cmd->add_subcommand("build", "build and save a K-shot cache");
  add_common(cache_build, true);
  cache_build->add_option("--data", data_dir, "dataset directory")->required();
  cache_build->add_option("--shots", shots, "shots per class")->required();
  cache_build->add_option("--out,-o", out_path, "cache file path");

  CLI::App* tp = app.add_subcommand("train-prompt", "prompt tuning on a K-shot episode");
  add_common(tp, true);
  tp->add_option("--data", data_dir, "dataset directory")->required();
  tp->add_option("--shots", shots, "shots per class");
  tp->add_option("--init", init, "manual | random");
  tp->add_option("--prompt-file", prompt_file, "initialize from a saved prompt");
  tp->add_option("--out,-o", out_path, "report JSON path");
  tp->add_option("--prompt-out", prompt_out, "save the trained prompt here");

  CLI::App* tr = app.add_subcommand("train", "full adapter training");
  add_common(tr, true);
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--strategy", strategy, "separate | joint")->required();
  tr->add_option("--shots", shots, "shots per class");
  tr->add_option("--init", init, "manual | random");
  tr->add_option("--prompt-file", prompt_file, "initialize from a saved prompt");
  tr->add_option("--alpha", alpha, "fusion weight (swept when omitted)");
  tr->add_option("--beta", beta, "sharpness (swept when omitted)");
  tr->add_option("--cache", cache_file, "start from a saved cache file");
  tr->add_option("--out,-o", out_path, "report JSON path");

  CLI::App* mt = app.add_subcommand("multitask-init", "train a shareable prompt across tasks");
  add_common(mt, true);
  mt->add_option("--data", data_dirs, "dataset directories")->required();
  mt->add_option("--shots", shots, "shots per class");
  mt->add_option("--out,-o", out_path, "prompt JSON path");

  CLI::App* ev = app.add_subcommand("eval", "evaluate one method, print and append a result row");
  add_common(ev, true);
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--method", method, "zero_shot | linear_probe | tip_adapter | tip_adapter_f | "
                                     "prompt_adapter | prompt_adapter_f")->required();
  std::string ev_init = "manual";
  ev->add_option("--init", ev_init, "manual | random | pretrained-multitask");
  std::string ev_strategy = "none";
  ev->add_option("--strategy", ev_strategy, "none | separate | joint");
  ev->add_option("--shots", shots, "shots per class");
  ev->add_option("--prompt-file", prompt_file, "shared prompt for pretrained-multitask init");

  CLI::App* sw = app.add_subcommand("sweep", "alpha/beta grid on the validation split");
  add_common(sw, true);
  sw->add_option("--data", data_dir, "dataset directory")->required();
  sw->add_option("--shots", shots, "shots per class");
  std::string sw_init = "manual";
  sw->add_option("--init", sw_init, "manual | random");
  sw->add_option("--prompt-file", prompt_file, "use a saved prompt");
  sw->add_option("--out,-o", out_path, "surface CSV path");

  CLI::App* gr = app.add_subcommand("grid", "full experiment grid from the config");
  add_common(gr, false);
  gr->add_option("--workers", workers, "concurrent grid cells");

  CLI::App* rp = app.add_subcommand("report", "regenerate the summary from a rows CSV");
  add_common(rp, false);
  rp->add_option("--rows", rows_path, "results CSV path");
  rp->add_option("--out,-o", out_path, "summary JSON path");

  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  std::string prog = "pad";
  argv.push_back(prog.data());
  for (std::string& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      app.exit(e);
      return 0;
    }
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen(common, out_path);
    if (pre->parsed()) return cmd_pretrain(common, data_dir, out_path);
    if (cache_cmd->parsed() && cache_build->parsed())
      return cmd_cache_build(common, data_dir, shots, out_path);
    if (tp->parsed())
      return cmd_train_prompt(common, data_dir, shots, init, prompt_file, out_path, prompt_out);
    if (tr->parsed())
      return cmd_train(common, data_dir, shots, strategy, init, prompt_file, alpha, beta,
                       cache_file, out_path);
    if (mt->parsed()) return cmd_multitask_init(common, data_dirs, shots, out_path);
    if (ev->parsed())
      return cmd_eval(common, data_dir, method, ev_init, ev_strategy, shots, prompt_file);
    if (sw->parsed()) return cmd_sweep(common, data_dir, shots, sw_init, prompt_file, out_path);
    if (gr->parsed()) return cmd_grid(common, workers);
    if (rp->parsed()) return cmd_report(common, rows_path, out_path);
  } catch (const Error& e) {
    log_json("error", e.what());
    bool usage = e.code() == Err::InvalidConfig || e.code() == Err::EmptyGrid ||
                 e.code() == Err::EmptyTaskList;
    return usage ? 1 : 2;
  } catch (const std::exception& e) {
    log_json("error", e.what());
    return 2;
  }
  return 1;
}

}  // namespace pad
