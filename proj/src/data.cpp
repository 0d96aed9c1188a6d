#include "pad/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "pad/binio.hpp"
#include "pad/checksum.hpp"
#include "pad/error.hpp"
#include "pad/numerics.hpp"
#include "pad/rng.hpp"

#include <nlohmann/json.hpp>

namespace pad {

namespace {
constexpr char kMagic[4] = {'P', 'A', 'D', 'S'};
constexpr uint16_t kVersion = 1;
}  // namespace

LabeledFeatures FewShotDataset::split_view(Split s) const {
  std::vector<int> rows;
  for (size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == static_cast<uint8_t>(s)) rows.push_back(static_cast<int>(i));
  LabeledFeatures out;
  out.features = Mat(static_cast<int>(rows.size()), dim);
  out.labels.resize(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    std::copy(features.row(rows[i]), features.row(rows[i]) + dim, out.features.row(static_cast<int>(i)));
    out.labels[i] = labels[static_cast<size_t>(rows[i])];
  }
  return out;
}

std::vector<int> FewShotDataset::split_rows(Split s, int cls) const {
  std::vector<int> rows;
  for (size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == static_cast<uint8_t>(s) && labels[i] == cls) rows.push_back(static_cast<int>(i));
  return rows;
}

std::vector<ClassTokenSequence> assign_class_tokens(int classes, int vocab) {
  std::set<std::pair<int, int>> used;
  std::vector<ClassTokenSequence> out;
  out.reserve(static_cast<size_t>(classes));
  for (int i = 0; i < classes; ++i) {
    int first = i % vocab;
    int second = (7 * i + 3) % vocab;
    int attempts = 0;
    while (used.count({first, second})) {
      second = (second + 1) % vocab;
      if (++attempts > vocab * vocab) raise(Err::InvalidConfig, "cannot assign unique class tokens");
    }
    used.insert({first, second});
    out.push_back({i, {first, second}});
  }
  return out;
}

SyntheticWorld generate_synthetic(const DatasetConfig& cfg, uint64_t seed,
                                  const EncoderConfig& enc_cfg, const AlignConfig& align,
                                  std::span<const int> template_tokens) {
  if (cfg.classes < 2) raise(Err::InvalidConfig, "need at least 2 classes");
  if (!(cfg.sigma > 0.0)) raise(Err::InvalidConfig, "sigma must be positive");
  if (cfg.dim != enc_cfg.feature_dim) raise(Err::IncompatibleEncoder, "dataset dim vs encoder");
  if (cfg.mode != "random" && cfg.mode != "pretrained")
    raise(Err::InvalidConfig, "mode must be random or pretrained");

  // prototypes by rejection under the separation constraint
  Rng proto_rng = Rng::substream(seed, "prototypes");
  std::vector<std::vector<double>> prototypes;
  long budget = 1000L * cfg.classes;
  while (static_cast<int>(prototypes.size()) < cfg.classes) {
    if (--budget < 0)
      raise(Err::RejectionBudgetExceeded,
            "cannot place " + std::to_string(cfg.classes) + " prototypes in dim " + std::to_string(cfg.dim));
    EmbeddingVector cand;
    cand.values.resize(static_cast<size_t>(cfg.dim));
    for (double& x : cand.values) x = proto_rng.gaussian();
    cand = l2_normalize(cand);
    bool ok = true;
    for (const std::vector<double>& p : prototypes) {
      double cos = 0.0;
      for (int j = 0; j < cfg.dim; ++j) cos += p[static_cast<size_t>(j)] * cand.values[static_cast<size_t>(j)];
      if (cos >= cfg.separation_cos) {
        ok = false;
        break;
      }
    }
    if (ok) prototypes.push_back(cand.values);
  }

  FewShotDataset ds;
  ds.name = cfg.name.empty() ? "syn-n" + std::to_string(cfg.classes) + "-s" + std::to_string(seed)
                             : cfg.name;
  ds.classes = cfg.classes;
  ds.dim = cfg.dim;
  ds.seed = seed;
  ds.provenance = cfg.mode == "pretrained" ? "synthetic-pretrained" : "synthetic-random";
  ds.class_tokens = assign_class_tokens(cfg.classes, enc_cfg.vocab);

  int per_class = cfg.train_per_class + cfg.val_per_class + cfg.test_per_class;
  ds.features = Mat(cfg.classes * per_class, cfg.dim);
  ds.labels.resize(static_cast<size_t>(ds.features.rows));
  ds.splits.resize(static_cast<size_t>(ds.features.rows));

  int row = 0;
  for (int c = 0; c < cfg.classes; ++c) {
    Rng noise = Rng::substream(seed, "features", static_cast<uint64_t>(c));
    for (int i = 0; i < per_class; ++i) {
      EmbeddingVector f;
      f.values = prototypes[static_cast<size_t>(c)];
      for (double& x : f.values) x += cfg.sigma * noise.gaussian();
      f = l2_normalize(f);
      for (int j = 0; j < cfg.dim; ++j) ds.features.at(row, j) = quantize_f32(f.values[static_cast<size_t>(j)]);
      ds.labels[static_cast<size_t>(row)] = c;
      uint8_t split = i < cfg.train_per_class                       ? 0
                      : i < cfg.train_per_class + cfg.val_per_class ? 1
                                                                    : 2;
      ds.splits[static_cast<size_t>(row)] = split;
      ++row;
    }
  }

  FrozenTextEncoder encoder(enc_cfg);
  if (cfg.mode == "pretrained") {
    LabeledFeatures train = ds.split_view(Split::Train);
    AlignConfig a = align;
    a.seed = mix64(seed ^ hash_str("align"));
    align_embedding_table(encoder, train.features, train.labels, ds.class_tokens, template_tokens, a);
  }
  return {std::move(ds), std::move(encoder)};
}

std::vector<std::vector<int>> sample_few_shot(const FewShotDataset& ds, const EpisodeSpec& spec) {
  if (spec.shots < 1) raise(Err::InvalidConfig, "shots must be at least 1");
  std::vector<std::vector<int>> out(static_cast<size_t>(ds.classes));
  for (int c = 0; c < ds.classes; ++c) {
    std::vector<int> rows = ds.split_rows(Split::Train, c);
    if (static_cast<int>(rows.size()) < spec.shots)
      raise(Err::InsufficientShots, "class " + std::to_string(c) + " has " +
                                        std::to_string(rows.size()) + " train rows, need " +
                                        std::to_string(spec.shots));
    Rng rng = Rng::substream(spec.seed, "episode", static_cast<uint64_t>(c));
    std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(rows.size()), spec.shots);
    std::sort(picks.begin(), picks.end());
    out[static_cast<size_t>(c)].reserve(static_cast<size_t>(spec.shots));
    for (int p : picks) out[static_cast<size_t>(c)].push_back(rows[static_cast<size_t>(p)]);
  }
  return out;
}

LabeledFeatures gather_rows(const FewShotDataset& ds, const std::vector<std::vector<int>>& per_class) {
  size_t total = 0;
  for (const std::vector<int>& rows : per_class) total += rows.size();
  LabeledFeatures out;
  out.features = Mat(static_cast<int>(total), ds.dim);
  out.labels.reserve(total);
  int r = 0;
  for (const std::vector<int>& rows : per_class) {
    for (int src : rows) {
      std::copy(ds.features.row(src), ds.features.row(src) + ds.dim, out.features.row(r++));
      out.labels.push_back(ds.labels[static_cast<size_t>(src)]);
    }
  }
  return out;
}

void save_dataset(const FewShotDataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);

  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.u32(static_cast<uint32_t>(ds.features.rows));
  w.u32(static_cast<uint32_t>(ds.dim));
  for (double x : ds.features.v) w.f32(static_cast<float>(x));
  for (int l : ds.labels) w.u32(static_cast<uint32_t>(l));
  for (uint8_t s : ds.splits) w.u8(s);
  write_file_bytes(dir + "/features.bin", w.data());

  int counts[3] = {0, 0, 0};
  for (uint8_t s : ds.splits) ++counts[s];

  nlohmann::json manifest;
  manifest["name"] = ds.name;
  manifest["classes"] = ds.classes;
  manifest["dim"] = ds.dim;
  manifest["counts"] = {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}};
  nlohmann::json tokens = nlohmann::json::array();
  for (const ClassTokenSequence& cls : ds.class_tokens) tokens.push_back(cls.tokens);
  manifest["class_tokens"] = tokens;
  manifest["provenance"] = ds.provenance;
  manifest["seed"] = ds.seed;
  manifest["features_crc32"] = crc32_bytes(w.data().data(), w.data().size());

  std::ofstream out(dir + "/manifest.json");
  if (!out) raise(Err::IoError, "cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

FewShotDataset load_dataset(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) raise(Err::IoError, "cannot open manifest in " + dir);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    raise(Err::FormatError, std::string("manifest: ") + e.what());
  }

  FewShotDataset ds;
  try {
    ds.name = manifest.at("name").get<std::string>();
    ds.classes = manifest.at("classes").get<int>();
    ds.dim = manifest.at("dim").get<int>();
    for (const nlohmann::json& seq : manifest.at("class_tokens")) {
      ClassTokenSequence cls;
      cls.class_id = static_cast<int>(ds.class_tokens.size());
      cls.tokens = seq.get<std::vector<int>>();
      ds.class_tokens.push_back(std::move(cls));
    }
    ds.provenance = manifest.at("provenance").get<std::string>();
    ds.seed = manifest.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    raise(Err::FormatError, std::string("manifest: ") + e.what());
  }
  if (static_cast<int>(ds.class_tokens.size()) != ds.classes)
    raise(Err::ManifestMismatch, "class token count");

  std::vector<uint8_t> bytes = read_file_bytes(dir + "/features.bin");
  uint32_t crc = crc32_bytes(bytes.data(), bytes.size());
  if (crc != manifest.at("features_crc32").get<uint32_t>())
    raise(Err::ChecksumMismatch, "features.bin crc");

  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kMagic, 4) != 0) raise(Err::FormatError, "bad dataset magic");
  if (r.u16() != kVersion) raise(Err::FormatError, "unsupported dataset version");
  int rows = static_cast<int>(r.u32());
  int dim = static_cast<int>(r.u32());
  if (dim != ds.dim) raise(Err::ManifestMismatch, "dim");
  size_t need = static_cast<size_t>(rows) * dim * 4 + static_cast<size_t>(rows) * 4 +
                static_cast<size_t>(rows);
  if (r.remaining() < need) raise(Err::FormatError, "truncated features.bin");
  if (r.remaining() > need) raise(Err::FormatError, "trailing bytes in features.bin");

  ds.features = Mat(rows, dim);
  for (double& x : ds.features.v) x = static_cast<double>(r.f32());
  ds.labels.resize(static_cast<size_t>(rows));
  for (int& l : ds.labels) {
    uint32_t raw = r.u32();
    if (raw >= static_cast<uint32_t>(ds.classes)) raise(Err::FormatError, "label out of range");
    l = static_cast<int>(raw);
  }
  ds.splits.resize(static_cast<size_t>(rows));
  for (uint8_t& s : ds.splits) {
    s = r.u8();
    if (s > 2) raise(Err::FormatError, "bad split code");
  }

  int counts[3] = {0, 0, 0};
  for (uint8_t s : ds.splits) ++counts[s];
  const nlohmann::json& jc = manifest.at("counts");
  if (counts[0] != jc.at("train").get<int>() || counts[1] != jc.at("val").get<int>() ||
      counts[2] != jc.at("test").get<int>())
    raise(Err::ManifestMismatch, "row counts");
  return ds;
}

}  // namespace pad
