#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pad/mat.hpp"
#include "pad/tape.hpp"

namespace pad {

struct EncoderConfig {
  uint64_t seed = 1;
  int vocab = 64;        // V
  int embed_dim = 32;    // d_e, token-embedding space
  int feature_dim = 16;  // d, joint embedding space
  int blocks = 1;        // L_b
  int max_seq = 32;      // S
};

// M learnable context vectors in token-embedding space.
struct PromptContext {
  Mat vectors;  // M × d_e
  bool learnable = true;
  int length() const { return vectors.rows; }
};

struct ClassTokenSequence {
  int class_id = 0;
  std::vector<int> tokens;  // length ≥ 1, each < vocab
};

// Optimizer settings for the toy contrastive alignment of the token
// embedding table (the only weights that ever move inside the encoder).
struct AlignConfig {
  double temperature = 0.07;
  int epochs = 150;
  double lr = 0.01;
  uint64_t seed = 0;
};

// Deterministic stand-in for a contrastively pretrained text encoder:
// token embedding + sinusoidal positions + pre-norm transformer blocks
// (single-head attention, tanh feed-forward) + output projection, all
// weights a pure function of the config seed. Frozen during adaptation;
// gradients flow through it into the prompt (and, during toy contrastive
// pretraining only, into the embedding table).
class FrozenTextEncoder {
 public:
  explicit FrozenTextEncoder(const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }
  const Mat& embedding_table() const { return embedding_; }
  const Mat& projection_matrix() const { return projection_; }
  uint64_t weight_checksum() const;

  // Tape handles to the weights; push once per tape, reuse across encodes.
  struct Weights {
    int table = -1;  // V × d_e
    struct Block {
      int wq, wk, wv, wo, w1, w2;
    };
    std::vector<Block> blocks;
    int projection = -1;  // d_e × d
  };
  Weights push_weights(GradientTape& tape) const;

  // Forward pass on the tape; returns a 1×d unit-norm node. prompt_node < 0
  // means no prompt rows (M = 0).
  int encode_node(GradientTape& tape, const Weights& w, int prompt_node,
                  const ClassTokenSequence& cls) const;
  // Variant for contrastive pretraining: the prompt rows are looked up from
  // the (learnable) table node so gradients reach the embedding table.
  int encode_node_tokens(GradientTape& tape, const Weights& w, std::span<const int> prompt_tokens,
                         const ClassTokenSequence& cls) const;
  // N×d node, row i = encode of classes[i].
  int classifier_node(GradientTape& tape, const Weights& w, int prompt_node,
                      const std::vector<ClassTokenSequence>& classes) const;

  EmbeddingVector encode_text(const PromptContext& prompt, const ClassTokenSequence& cls) const;
  Mat build_classifier_weights(const PromptContext& prompt,
                               const std::vector<ClassTokenSequence>& classes) const;

  PromptContext manual_prompt(std::span<const int> template_tokens) const;

  // Pretraining hook; adaptation code never calls this.
  void replace_embedding_table(Mat table);

 private:
  void check_sequence(int prompt_len, const ClassTokenSequence& cls) const;

  EncoderConfig cfg_;
  Mat embedding_;   // V × d_e
  Mat positional_;  // S × d_e
  struct BlockWeights {
    Mat wq, wk, wv, wo;  // d_e × d_e
    Mat w1;              // d_e × 4d_e
    Mat w2;              // 4d_e × d_e
  };
  std::vector<BlockWeights> blocks_;
  Mat projection_;  // d_e × d
};

// Exact gradient of `loss` (built on the tape from the N×d classifier node)
// with respect to the prompt vectors. Frozen weights receive no updates.
Mat prompt_gradient(const FrozenTextEncoder& enc, const PromptContext& prompt,
                    const std::vector<ClassTokenSequence>& classes,
                    const std::function<int(GradientTape&, int)>& loss_builder);

// Toy contrastive pretraining (image-to-text + text-to-image, sum-reduced):
// fits only the token embedding table against fixed image features, one
// feature per class per step, AdamW without weight decay. Returns the
// per-epoch loss trace. Deterministic in cfg.seed.
std::vector<double> align_embedding_table(FrozenTextEncoder& enc, const Mat& features,
                                          const std::vector<int>& labels,
                                          const std::vector<ClassTokenSequence>& classes,
                                          std::span<const int> template_tokens,
                                          const AlignConfig& cfg);

}  // namespace pad
