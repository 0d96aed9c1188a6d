#include "pad/config.hpp"

#include <fstream>
#include <set>

#include "pad/checksum.hpp"
#include "pad/error.hpp"
#include "pad/rng.hpp"

#include <nlohmann/json.hpp>

namespace pad {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
  if (!j.is_object()) raise(Err::InvalidConfig, ctx + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) raise(Err::InvalidConfig, "unknown key '" + key + "' in " + ctx);
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

OptimizerConfig opt_from_json(const json& j, OptimizerConfig base, const std::string& ctx) {
  check_keys(j,
             {"kind", "lr", "momentum", "beta1", "beta2", "eps", "weight_decay", "batch_size",
              "epochs", "schedule"},
             ctx);
  if (j.contains("kind")) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "sgd") base.kind = OptKind::Sgd;
    else if (kind == "adamw") base.kind = OptKind::AdamW;
    else raise(Err::InvalidConfig, ctx + ".kind: " + kind);
  }
  get_if(j, "lr", base.lr);
  get_if(j, "momentum", base.momentum);
  get_if(j, "beta1", base.beta1);
  get_if(j, "beta2", base.beta2);
  get_if(j, "eps", base.eps);
  get_if(j, "weight_decay", base.weight_decay);
  get_if(j, "batch_size", base.batch_size);
  get_if(j, "epochs", base.epochs);
  if (j.contains("schedule")) {
    std::string s = j.at("schedule").get<std::string>();
    if (s == "cosine") base.schedule = Schedule::Cosine;
    else if (s == "constant") base.schedule = Schedule::Constant;
    else raise(Err::InvalidConfig, ctx + ".schedule: " + s);
  }
  return base;
}

json opt_to_json(const OptimizerConfig& o) {
  return {{"kind", o.kind == OptKind::Sgd ? "sgd" : "adamw"},
          {"lr", o.lr},
          {"momentum", o.momentum},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"eps", o.eps},
          {"weight_decay", o.weight_decay},
          {"batch_size", o.batch_size},
          {"epochs", o.epochs},
          {"schedule", o.schedule == Schedule::Cosine ? "cosine" : "constant"}};
}

json config_to_json(const ExperimentConfig& c, bool include_output) {
  json j;
  j["encoder"] = {{"seed", c.encoder.seed},       {"vocab", c.encoder.vocab},
                  {"embed_dim", c.encoder.embed_dim}, {"feature_dim", c.encoder.feature_dim},
                  {"blocks", c.encoder.blocks},   {"max_seq", c.encoder.max_seq}};
  j["alignment"] = c.alignment;
  j["contrastive"] = {{"temperature", c.contrastive.temperature},
                      {"epochs", c.contrastive.epochs},
                      {"lr", c.contrastive.lr}};
  j["dataset"] = {{"name", c.dataset.name},
                  {"classes", c.dataset.classes},
                  {"dim", c.dataset.dim},
                  {"sigma", c.dataset.sigma},
                  {"train_per_class", c.dataset.train_per_class},
                  {"val_per_class", c.dataset.val_per_class},
                  {"test_per_class", c.dataset.test_per_class},
                  {"mode", c.dataset.mode},
                  {"separation_cos", c.dataset.separation_cos}};
  json h;
  h["template"] = c.harness.template_tokens;
  h["prompt_length"] = c.harness.prompt_length;
  h["logit_scale"] = c.harness.logit_scale;
  h["alpha_grid"] = c.harness.alpha_grid;
  h["beta_grid"] = c.harness.beta_grid;
  h["reduction"] = c.harness.train.reduction == Reduction::Mean ? "mean" : "sum";
  h["select_best_epoch"] = c.harness.train.select_best_epoch;
  h["renormalize_keys"] = c.harness.train.renormalize_keys;
  h["training"] = {{"prompt", opt_to_json(c.harness.opt_prompt)},
                   {"cache", opt_to_json(c.harness.opt_cache)},
                   {"joint", opt_to_json(c.harness.opt_joint)},
                   {"multitask", opt_to_json(c.harness.opt_multitask)},
                   {"linear_probe", opt_to_json(c.harness.opt_probe)}};
  j["harness"] = h;
  j["datasets"] = c.datasets;
  json methods = json::array();
  for (const MethodSpec& m : c.methods)
    methods.push_back({{"kind", to_string(m.kind)},
                       {"init", to_string(m.init)},
                       {"strategy", to_string(m.strategy)}});
  j["methods"] = methods;
  j["shots"] = c.shots;
  j["seeds"] = c.seeds;
  if (include_output) {
    j["output_dir"] = c.output_dir;
    j["workers"] = c.workers;
  }
  return j;
}

}  // namespace

uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical_json().data(), canonical_json().size()); }

std::string ExperimentConfig::canonical_json() const {
  return config_to_json(*this, false).dump();
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    raise(Err::InvalidConfig, std::string("config parse: ") + e.what());
  }
  check_keys(j,
             {"encoder", "alignment", "contrastive", "dataset", "harness", "datasets", "methods",
              "shots", "seeds", "output_dir", "workers"},
             "config");

  ExperimentConfig c;
  try {
    if (j.contains("encoder")) {
      const json& e = j.at("encoder");
      check_keys(e, {"seed", "vocab", "embed_dim", "feature_dim", "blocks", "max_seq"},
                 "config.encoder");
      get_if(e, "seed", c.encoder.seed);
      get_if(e, "vocab", c.encoder.vocab);
      get_if(e, "embed_dim", c.encoder.embed_dim);
      get_if(e, "feature_dim", c.encoder.feature_dim);
      get_if(e, "blocks", c.encoder.blocks);
      get_if(e, "max_seq", c.encoder.max_seq);
    }
    get_if(j, "alignment", c.alignment);
    if (c.alignment != "auto" && c.alignment != "none" && c.alignment != "dataset" &&
        c.alignment != "union")
      raise(Err::InvalidConfig, "alignment: " + c.alignment);
    if (j.contains("contrastive")) {
      const json& e = j.at("contrastive");
      check_keys(e, {"temperature", "epochs", "lr"}, "config.contrastive");
      get_if(e, "temperature", c.contrastive.temperature);
      get_if(e, "epochs", c.contrastive.epochs);
      get_if(e, "lr", c.contrastive.lr);
    }
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      check_keys(d,
                 {"name", "classes", "dim", "sigma", "train_per_class", "val_per_class",
                  "test_per_class", "mode", "separation_cos"},
                 "config.dataset");
      get_if(d, "name", c.dataset.name);
      get_if(d, "classes", c.dataset.classes);
      get_if(d, "dim", c.dataset.dim);
      get_if(d, "sigma", c.dataset.sigma);
      get_if(d, "train_per_class", c.dataset.train_per_class);
      get_if(d, "val_per_class", c.dataset.val_per_class);
      get_if(d, "test_per_class", c.dataset.test_per_class);
      get_if(d, "mode", c.dataset.mode);
      get_if(d, "separation_cos", c.dataset.separation_cos);
    }
    if (j.contains("harness")) {
      const json& h = j.at("harness");
      check_keys(h,
                 {"template", "prompt_length", "logit_scale", "alpha_grid", "beta_grid",
                  "reduction", "select_best_epoch", "renormalize_keys", "training"},
                 "config.harness");
      get_if(h, "template", c.harness.template_tokens);
      get_if(h, "prompt_length", c.harness.prompt_length);
      get_if(h, "logit_scale", c.harness.logit_scale);
      get_if(h, "alpha_grid", c.harness.alpha_grid);
      get_if(h, "beta_grid", c.harness.beta_grid);
      if (h.contains("reduction")) {
        std::string r = h.at("reduction").get<std::string>();
        if (r == "mean") c.harness.train.reduction = Reduction::Mean;
        else if (r == "sum") c.harness.train.reduction = Reduction::Sum;
        else raise(Err::InvalidConfig, "harness.reduction: " + r);
      }
      get_if(h, "select_best_epoch", c.harness.train.select_best_epoch);
      get_if(h, "renormalize_keys", c.harness.train.renormalize_keys);
      if (h.contains("training")) {
        const json& t = h.at("training");
        check_keys(t, {"prompt", "cache", "joint", "multitask", "linear_probe"},
                   "config.harness.training");
        if (t.contains("prompt"))
          c.harness.opt_prompt = opt_from_json(t.at("prompt"), c.harness.opt_prompt, "training.prompt");
        if (t.contains("cache"))
          c.harness.opt_cache = opt_from_json(t.at("cache"), c.harness.opt_cache, "training.cache");
        if (t.contains("joint"))
          c.harness.opt_joint = opt_from_json(t.at("joint"), c.harness.opt_joint, "training.joint");
        if (t.contains("multitask"))
          c.harness.opt_multitask =
              opt_from_json(t.at("multitask"), c.harness.opt_multitask, "training.multitask");
        if (t.contains("linear_probe"))
          c.harness.opt_probe =
              opt_from_json(t.at("linear_probe"), c.harness.opt_probe, "training.linear_probe");
      }
    }
    get_if(j, "datasets", c.datasets);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const json& m : j.at("methods")) {
        check_keys(m, {"kind", "init", "strategy"}, "config.methods[]");
        MethodSpec spec;
        spec.kind = method_kind_from_string(m.at("kind").get<std::string>());
        if (m.contains("init")) spec.init = prompt_init_from_string(m.at("init").get<std::string>());
        if (m.contains("strategy"))
          spec.strategy = strategy_from_string(m.at("strategy").get<std::string>());
        validate_method(spec);
        c.methods.push_back(spec);
      }
    }
    get_if(j, "shots", c.shots);
    get_if(j, "seeds", c.seeds);
    get_if(j, "output_dir", c.output_dir);
    get_if(j, "workers", c.workers);
  } catch (const json::exception& e) {
    raise(Err::InvalidConfig, std::string("config: ") + e.what());
  }

  // the dataset block and the encoder must agree on the feature dimension
  if (c.dataset.dim != c.encoder.feature_dim)
    raise(Err::InvalidConfig, "dataset.dim must equal encoder.feature_dim");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Err::IoError, "cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json_text(text);
}

void apply_override(std::string& json_text, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos) raise(Err::InvalidConfig, "--set needs key=value: " + assignment);
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);

  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    raise(Err::InvalidConfig, std::string("config parse: ") + e.what());
  }

  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain string
  }

  json* cursor = &j;
  size_t start = 0;
  for (;;) {
    size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) raise(Err::InvalidConfig, "--set path: " + path);
    if (dot == std::string::npos) {
      (*cursor)[key] = parsed;
      break;
    }
    cursor = &(*cursor)[key];
    start = dot + 1;
  }
  json_text = j.dump();
}

std::string default_config_json() {
  return config_to_json(ExperimentConfig{}, true).dump(2);
}

FrozenTextEncoder make_encoder(const ExperimentConfig& cfg,
                               const std::vector<const FewShotDataset*>& datasets) {
  FrozenTextEncoder enc(cfg.encoder);
  std::string mode = cfg.alignment;
  if (mode == "auto") {
    bool all_pretrained = !datasets.empty();
    for (const FewShotDataset* ds : datasets)
      if (ds->provenance != "synthetic-pretrained") all_pretrained = false;
    if (datasets.size() == 1 && all_pretrained) mode = "dataset";
    else if (!all_pretrained || datasets.empty()) mode = "none";
    else
      raise(Err::IncompatibleEncoder,
            "multiple pretrained datasets: set alignment to none/dataset/union explicitly");
  }
  if (mode == "none") return enc;
  if (datasets.empty()) raise(Err::InvalidConfig, "alignment needs at least one dataset");

  for (const FewShotDataset* ds : datasets)
    if (ds->dim != cfg.encoder.feature_dim)
      raise(Err::IncompatibleEncoder, "dataset " + ds->name + " dim vs encoder");

  if (mode == "dataset") {
    const FewShotDataset& ds = *datasets.front();
    LabeledFeatures train = ds.split_view(Split::Train);
    AlignConfig a = cfg.contrastive;
    a.seed = mix64(ds.seed ^ hash_str("align"));
    align_embedding_table(enc, train.features, train.labels, ds.class_tokens,
                          cfg.harness.template_tokens, a);
    return enc;
  }

  // union: pool every task's train pairs; class ids are offset per task
  std::vector<ClassTokenSequence> pooled_classes;
  std::vector<int> labels;
  int total_rows = 0;
  for (const FewShotDataset* ds : datasets) total_rows += ds->split_view(Split::Train).features.rows;
  Mat features(total_rows, cfg.encoder.feature_dim);
  int row = 0;
  uint64_t align_seed = hash_str("align-union");
  for (const FewShotDataset* ds : datasets) {
    int base = static_cast<int>(pooled_classes.size());
    for (const ClassTokenSequence& cls : ds->class_tokens) {
      ClassTokenSequence copy = cls;
      copy.class_id = base + cls.class_id;
      pooled_classes.push_back(copy);
    }
    LabeledFeatures train = ds->split_view(Split::Train);
    for (int i = 0; i < train.features.rows; ++i) {
      std::copy(train.features.row(i), train.features.row(i) + train.features.cols, features.row(row++));
      labels.push_back(base + train.labels[static_cast<size_t>(i)]);
    }
    align_seed = mix64(align_seed ^ ds->seed);
  }
  AlignConfig a = cfg.contrastive;
  a.seed = align_seed;
  align_embedding_table(enc, features, labels, pooled_classes, cfg.harness.template_tokens, a);
  return enc;
}

}  // namespace pad
