#include "pad/encoder.hpp"

#include <cmath>
#include <string>

#include "pad/checksum.hpp"
#include "pad/error.hpp"
#include "pad/optim.hpp"
#include "pad/rng.hpp"

namespace pad {

namespace {

Mat gaussian_matrix(uint64_t seed, std::string_view role, uint64_t block, int rows, int cols,
                    double stddev) {
  Rng rng = Rng::substream(seed, role, block);
  Mat m(rows, cols);
  for (double& x : m.v) x = stddev * rng.gaussian();
  return m;
}

Mat sinusoidal_positions(int max_seq, int dim) {
  Mat pos(max_seq, dim);
  for (int p = 0; p < max_seq; ++p) {
    for (int j = 0; j < dim; ++j) {
      double exponent = static_cast<double>(j - (j % 2)) / dim;
      double angle = p / std::pow(10000.0, exponent);
      pos.at(p, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pos;
}

}  // namespace

FrozenTextEncoder::FrozenTextEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.vocab < 1 || cfg.embed_dim < 1 || cfg.feature_dim < 1 || cfg.blocks < 0 || cfg.max_seq < 1)
    raise(Err::InvalidConfig, "encoder dimensions");
  double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
  embedding_ = gaussian_matrix(cfg.seed, "embed", 0, cfg.vocab, cfg.embed_dim, stddev);
  positional_ = sinusoidal_positions(cfg.max_seq, cfg.embed_dim);
  blocks_.reserve(static_cast<size_t>(cfg.blocks));
  for (int b = 0; b < cfg.blocks; ++b) {
    BlockWeights w;
    uint64_t bi = static_cast<uint64_t>(b);
    w.wq = gaussian_matrix(cfg.seed, "wq", bi, cfg.embed_dim, cfg.embed_dim, stddev);
    w.wk = gaussian_matrix(cfg.seed, "wk", bi, cfg.embed_dim, cfg.embed_dim, stddev);
    w.wv = gaussian_matrix(cfg.seed, "wv", bi, cfg.embed_dim, cfg.embed_dim, stddev);
    w.wo = gaussian_matrix(cfg.seed, "wo", bi, cfg.embed_dim, cfg.embed_dim, stddev);
    w.w1 = gaussian_matrix(cfg.seed, "ffn1", bi, cfg.embed_dim, 4 * cfg.embed_dim, stddev);
    w.w2 = gaussian_matrix(cfg.seed, "ffn2", bi, 4 * cfg.embed_dim, cfg.embed_dim, stddev);
    blocks_.push_back(std::move(w));
  }
  projection_ = gaussian_matrix(cfg.seed, "proj", 0, cfg.embed_dim, cfg.feature_dim, stddev);
}

uint64_t FrozenTextEncoder::weight_checksum() const {
  uint64_t h = mat_checksum(embedding_);
  h = fnv1a64(&h, sizeof(h), mat_checksum(positional_));
  for (const BlockWeights& b : blocks_) {
    for (const Mat* m : {&b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.w2}) {
      uint64_t c = mat_checksum(*m);
      h = fnv1a64(&c, sizeof(c), h);
    }
  }
  uint64_t c = mat_checksum(projection_);
  return fnv1a64(&c, sizeof(c), h);
}

FrozenTextEncoder::Weights FrozenTextEncoder::push_weights(GradientTape& tape) const {
  Weights w;
  w.table = tape.leaf(embedding_);
  for (const BlockWeights& b : blocks_) {
    Weights::Block nb;
    nb.wq = tape.leaf(b.wq);
    nb.wk = tape.leaf(b.wk);
    nb.wv = tape.leaf(b.wv);
    nb.wo = tape.leaf(b.wo);
    nb.w1 = tape.leaf(b.w1);
    nb.w2 = tape.leaf(b.w2);
    w.blocks.push_back(nb);
  }
  w.projection = tape.leaf(projection_);
  return w;
}

void FrozenTextEncoder::check_sequence(int prompt_len, const ClassTokenSequence& cls) const {
  if (cls.tokens.empty()) raise(Err::Empty, "class token sequence");
  for (int t : cls.tokens)
    if (t < 0 || t >= cfg_.vocab) raise(Err::TokenOutOfVocab, "token " + std::to_string(t));
  if (prompt_len + static_cast<int>(cls.tokens.size()) > cfg_.max_seq)
    raise(Err::SequenceTooLong, std::to_string(prompt_len + static_cast<int>(cls.tokens.size())) +
                                    " > " + std::to_string(cfg_.max_seq));
}

int FrozenTextEncoder::encode_node(GradientTape& tape, const Weights& w, int prompt_node,
                                   const ClassTokenSequence& cls) const {
  int prompt_len = prompt_node >= 0 ? tape.value(prompt_node).rows : 0;
  check_sequence(prompt_len, cls);

  int cls_rows = tape.gather_rows(w.table, cls.tokens);
  int seq = prompt_len > 0 ? tape.concat_rows(prompt_node, cls_rows) : cls_rows;
  int len = prompt_len + static_cast<int>(cls.tokens.size());

  Mat pos(len, cfg_.embed_dim);
  std::copy(positional_.v.begin(), positional_.v.begin() + static_cast<long>(pos.size()),
            pos.v.begin());
  seq = tape.add(seq, tape.leaf(std::move(pos)));

  double attn_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.embed_dim));
  for (const Weights::Block& b : w.blocks) {
    int h = tape.rms_norm_rows(seq);
    int q = tape.matmul(h, b.wq);
    int k = tape.matmul(h, b.wk);
    int v = tape.matmul(h, b.wv);
    int attn = tape.row_softmax(tape.affine(tape.matmul_nt(q, k), attn_scale, 0.0));
    seq = tape.add(seq, tape.matmul(tape.matmul(attn, v), b.wo));
    int h2 = tape.rms_norm_rows(seq);
    seq = tape.add(seq, tape.matmul(tape.tanh_act(tape.matmul(h2, b.w1)), b.w2));
  }

  int last = tape.slice_rows(seq, len - 1, 1);
  return tape.l2_normalize_rows(tape.matmul(last, w.projection));
}

int FrozenTextEncoder::encode_node_tokens(GradientTape& tape, const Weights& w,
                                          std::span<const int> prompt_tokens,
                                          const ClassTokenSequence& cls) const {
  for (int t : prompt_tokens)
    if (t < 0 || t >= cfg_.vocab) raise(Err::TokenOutOfVocab, "token " + std::to_string(t));
  int prompt_node = -1;
  if (!prompt_tokens.empty())
    prompt_node = tape.gather_rows(w.table, std::vector<int>(prompt_tokens.begin(), prompt_tokens.end()));
  return encode_node(tape, w, prompt_node, cls);
}

int FrozenTextEncoder::classifier_node(GradientTape& tape, const Weights& w, int prompt_node,
                                       const std::vector<ClassTokenSequence>& classes) const {
  if (classes.size() < 2) raise(Err::InvalidConfig, "classifier needs at least 2 classes");
  int stacked = -1;
  for (const ClassTokenSequence& cls : classes) {
    int row = encode_node(tape, w, prompt_node, cls);
    stacked = stacked < 0 ? row : tape.concat_rows(stacked, row);
  }
  return stacked;
}

EmbeddingVector FrozenTextEncoder::encode_text(const PromptContext& prompt,
                                               const ClassTokenSequence& cls) const {
  GradientTape tape;
  Weights w = push_weights(tape);
  int prompt_node = prompt.length() > 0 ? tape.leaf(prompt.vectors) : -1;
  int out = encode_node(tape, w, prompt_node, cls);
  EmbeddingVector v;
  v.values = tape.value(out).v;
  v.normalized = true;
  return v;
}

Mat FrozenTextEncoder::build_classifier_weights(const PromptContext& prompt,
                                                const std::vector<ClassTokenSequence>& classes) const {
  if (classes.size() < 2) raise(Err::InvalidConfig, "classifier needs at least 2 classes");
  Mat out(static_cast<int>(classes.size()), cfg_.feature_dim);
  for (size_t i = 0; i < classes.size(); ++i) {
    EmbeddingVector row = encode_text(prompt, classes[i]);
    std::copy(row.values.begin(), row.values.end(), out.row(static_cast<int>(i)));
  }
  return out;
}

PromptContext FrozenTextEncoder::manual_prompt(std::span<const int> template_tokens) const {
  PromptContext p;
  p.vectors = Mat(static_cast<int>(template_tokens.size()), cfg_.embed_dim);
  for (size_t i = 0; i < template_tokens.size(); ++i) {
    int t = template_tokens[i];
    if (t < 0 || t >= cfg_.vocab) raise(Err::TokenOutOfVocab, "token " + std::to_string(t));
    std::copy(embedding_.row(t), embedding_.row(t) + cfg_.embed_dim,
              p.vectors.row(static_cast<int>(i)));
  }
  p.learnable = false;
  return p;
}

void FrozenTextEncoder::replace_embedding_table(Mat table) {
  if (table.rows != cfg_.vocab || table.cols != cfg_.embed_dim)
    raise(Err::ShapeMismatch, "embedding table");
  embedding_ = std::move(table);
}

Mat prompt_gradient(const FrozenTextEncoder& enc, const PromptContext& prompt,
                    const std::vector<ClassTokenSequence>& classes,
                    const std::function<int(GradientTape&, int)>& loss_builder) {
  if (!prompt.learnable) raise(Err::NotLearnable, "prompt is frozen");
  GradientTape tape;
  FrozenTextEncoder::Weights w = enc.push_weights(tape);
  int prompt_node = tape.leaf(prompt.vectors, true);
  int wc = enc.classifier_node(tape, w, prompt.length() > 0 ? prompt_node : -1, classes);
  int loss = loss_builder(tape, wc);
  tape.backward(loss);
  return tape.grad(prompt_node);
}

std::vector<double> align_embedding_table(FrozenTextEncoder& enc, const Mat& features,
                                          const std::vector<int>& labels,
                                          const std::vector<ClassTokenSequence>& classes,
                                          std::span<const int> template_tokens,
                                          const AlignConfig& cfg) {
  int num_classes = static_cast<int>(classes.size());
  if (num_classes < 2) raise(Err::InvalidConfig, "alignment needs at least 2 classes");
  if (static_cast<int>(labels.size()) != features.rows)
    raise(Err::LengthMismatch, "alignment features vs labels");

  // one feature per class per step, drawn from per-class pools shuffled once
  std::vector<std::vector<int>> pools(static_cast<size_t>(num_classes));
  for (int r = 0; r < features.rows; ++r) pools[static_cast<size_t>(labels[static_cast<size_t>(r)])].push_back(r);
  for (int c = 0; c < num_classes; ++c) {
    if (pools[static_cast<size_t>(c)].empty())
      raise(Err::EmptySplit, "alignment class " + std::to_string(c));
    Rng rng = Rng::substream(cfg.seed, "align-order", static_cast<uint64_t>(c));
    rng.shuffle(pools[static_cast<size_t>(c)]);
  }

  std::vector<int> diag(static_cast<size_t>(num_classes));
  for (int i = 0; i < num_classes; ++i) diag[static_cast<size_t>(i)] = i;

  OptimizerConfig opt;
  opt.kind = OptKind::AdamW;
  opt.lr = cfg.lr;
  opt.weight_decay = 0.0;
  opt.schedule = Schedule::Constant;
  OptimizerState state;

  std::vector<double> losses;
  losses.reserve(static_cast<size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Mat batch(num_classes, features.cols);
    for (int c = 0; c < num_classes; ++c) {
      const std::vector<int>& pool = pools[static_cast<size_t>(c)];
      int row = pool[static_cast<size_t>(epoch) % pool.size()];
      std::copy(features.row(row), features.row(row) + features.cols, batch.row(c));
    }

    GradientTape tape;
    FrozenTextEncoder::Weights w = enc.push_weights(tape);
    int images = tape.leaf(std::move(batch));
    int texts = -1;
    for (const ClassTokenSequence& cls : classes) {
      int row = enc.encode_node_tokens(tape, w, template_tokens, cls);
      texts = texts < 0 ? row : tape.concat_rows(texts, row);
    }
    int sims = tape.affine(tape.matmul_nt(images, texts), 1.0 / cfg.temperature, 0.0);
    int i2t = tape.cross_entropy_loss(sims, diag, Reduction::Sum);
    int t2i = tape.cross_entropy_loss(tape.transpose(sims), diag, Reduction::Sum);
    int loss = tape.add(i2t, t2i);
    tape.backward(loss);
    losses.push_back(tape.value(loss).v[0]);

    Mat table = enc.embedding_table();
    optimizer_step(table.v, tape.grad(w.table).v, state, opt, opt.lr);
    enc.replace_embedding_table(std::move(table));
  }
  return losses;
}

}  // namespace pad
