#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pad/encoder.hpp"
#include "pad/mat.hpp"
#include "pad/training.hpp"

namespace pad {

enum class Split : uint8_t { Train = 0, Val = 1, Test = 2 };

struct FewShotDataset {
  std::string name;
  int classes = 0;
  int dim = 0;
  std::vector<ClassTokenSequence> class_tokens;
  Mat features;                 // rows × dim, unit-norm (to f32 precision)
  std::vector<int> labels;      // < classes
  std::vector<uint8_t> splits;  // 0 train, 1 val, 2 test
  std::string provenance;       // synthetic-random | synthetic-pretrained | imported
  uint64_t seed = 0;

  LabeledFeatures split_view(Split s) const;
  std::vector<int> split_rows(Split s, int cls) const;
};

struct DatasetConfig {
  std::string name;  // defaults to a seed-derived name when empty
  int classes = 10;
  int dim = 16;
  double sigma = 0.35;
  int train_per_class = 32;
  int val_per_class = 20;
  int test_per_class = 100;
  std::string mode = "pretrained";  // random | pretrained
  double separation_cos = 0.5;      // prototype rejection threshold
};

struct SyntheticWorld {
  FewShotDataset dataset;
  FrozenTextEncoder encoder;
};

// Class prototypes on the unit sphere with pairwise cosine below the
// separation threshold; features are noisy copies, re-normalized and
// quantized to f32 so file round trips are exact. mode=pretrained fits the
// encoder's token-embedding table on the train split so zero-shot carries
// signal.
SyntheticWorld generate_synthetic(const DatasetConfig& cfg, uint64_t seed,
                                  const EncoderConfig& enc_cfg, const AlignConfig& align,
                                  std::span<const int> template_tokens);

struct EpisodeSpec {
  int shots = 1;
  uint64_t seed = 0;
};

// K train rows per class, without replacement, class-major, each class
// block sorted by row index. Deterministic in spec.seed.
std::vector<std::vector<int>> sample_few_shot(const FewShotDataset& ds, const EpisodeSpec& spec);

LabeledFeatures gather_rows(const FewShotDataset& ds, const std::vector<std::vector<int>>& per_class);

void save_dataset(const FewShotDataset& ds, const std::string& dir);
FewShotDataset load_dataset(const std::string& dir);

// Deterministic per-class token sequences: class i starts from
// (i mod V, (7i+3) mod V), bumping the second token on collision.
std::vector<ClassTokenSequence> assign_class_tokens(int classes, int vocab);

}  // namespace pad
