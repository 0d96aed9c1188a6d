#include <doctest.h>

#include <cmath>

#include "pad/encoder.hpp"
#include "pad/error.hpp"
#include "pad/numerics.hpp"
#include "pad/rng.hpp"

using namespace pad;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.seed = 11;
  cfg.vocab = 32;
  cfg.embed_dim = 16;
  cfg.feature_dim = 8;
  cfg.blocks = 1;
  cfg.max_seq = 16;
  return cfg;
}

PromptContext random_prompt(int m, int d_e, uint64_t seed) {
  Rng rng(seed);
  PromptContext p;
  p.vectors = Mat(m, d_e);
  for (double& x : p.vectors.v) x = 0.2 * rng.gaussian();
  p.learnable = true;
  return p;
}

double vector_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("encoder weights are a pure function of the seed") {
  EncoderConfig cfg = small_config();
  FrozenTextEncoder a(cfg);
  FrozenTextEncoder b(cfg);
  CHECK(a.weight_checksum() == b.weight_checksum());

  cfg.seed = 12;
  FrozenTextEncoder c(cfg);
  CHECK(a.weight_checksum() != c.weight_checksum());
}

TEST_CASE("encode_text is unit-norm and bit-deterministic") {
  FrozenTextEncoder enc(small_config());
  PromptContext prompt = random_prompt(3, 16, 77);
  ClassTokenSequence cls{0, {5, 9}};

  EmbeddingVector once = enc.encode_text(prompt, cls);
  EmbeddingVector twice = enc.encode_text(prompt, cls);
  CHECK(std::abs(vector_norm(once.values) - 1.0) < 1e-9);
  CHECK(once.normalized);
  REQUIRE(once.values.size() == twice.values.size());
  for (size_t i = 0; i < once.values.size(); ++i) CHECK(once.values[i] == twice.values[i]);
}

TEST_CASE("no-block encoder matches a straight-line recompute") {
  EncoderConfig cfg = small_config();
  cfg.blocks = 0;
  FrozenTextEncoder enc(cfg);
  PromptContext empty;
  empty.vectors = Mat(0, cfg.embed_dim);
  ClassTokenSequence cls{0, {7}};
  EmbeddingVector out = enc.encode_text(empty, cls);

  // independent recompute: E[7] + pos_0, project, normalize
  std::vector<double> state(static_cast<size_t>(cfg.embed_dim));
  for (int j = 0; j < cfg.embed_dim; ++j) {
    double exponent = static_cast<double>(j - (j % 2)) / cfg.embed_dim;
    double angle = 0.0 / std::pow(10000.0, exponent);
    double pos = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    state[static_cast<size_t>(j)] = enc.embedding_table().at(7, j) + pos;
  }
  std::vector<double> proj(static_cast<size_t>(cfg.feature_dim));
  for (int k = 0; k < cfg.feature_dim; ++k) {
    double acc = 0.0;
    for (int j = 0; j < cfg.embed_dim; ++j)
      acc += state[static_cast<size_t>(j)] * enc.projection_matrix().at(j, k);
    proj[static_cast<size_t>(k)] = acc;
  }
  double norm = vector_norm(proj);
  for (int k = 0; k < cfg.feature_dim; ++k)
    CHECK(out.values[static_cast<size_t>(k)] == doctest::Approx(proj[static_cast<size_t>(k)] / norm).epsilon(1e-14));
}

TEST_CASE("encode_text input validation") {
  EncoderConfig cfg = small_config();
  FrozenTextEncoder enc(cfg);
  PromptContext prompt = random_prompt(15, 16, 3);
  CHECK_THROWS_AS(enc.encode_text(prompt, {0, {1, 2}}), Error);  // 17 > max_seq
  PromptContext ok = random_prompt(2, 16, 3);
  CHECK_THROWS_AS(enc.encode_text(ok, {0, {32}}), Error);  // token out of vocab
  CHECK_THROWS_AS(enc.encode_text(ok, {0, {}}), Error);    // empty class tokens
}

TEST_CASE("build_classifier_weights stacks per-class encodings") {
  FrozenTextEncoder enc(small_config());
  PromptContext prompt = random_prompt(2, 16, 5);
  std::vector<ClassTokenSequence> classes{{0, {1, 2}}, {1, {3, 4}}, {2, {1, 2}}};
  Mat wc = enc.build_classifier_weights(prompt, classes);
  CHECK(wc.rows == 3);
  CHECK(wc.cols == 8);
  for (int i = 0; i < wc.rows; ++i) CHECK(std::abs(row_norm(wc, i) - 1.0) < 1e-9);

  // duplicated class sequence gives identical rows
  for (int j = 0; j < wc.cols; ++j) CHECK(wc.at(0, j) == wc.at(2, j));

  // each row equals the standalone encode path exactly
  for (int i = 0; i < wc.rows; ++i) {
    EmbeddingVector row = enc.encode_text(prompt, classes[static_cast<size_t>(i)]);
    for (int j = 0; j < wc.cols; ++j) CHECK(wc.at(i, j) == row.values[static_cast<size_t>(j)]);
  }
}

TEST_CASE("prompt_gradient passes finite differences") {
  EncoderConfig cfg = small_config();
  cfg.embed_dim = 16;
  cfg.blocks = 1;
  FrozenTextEncoder enc(cfg);
  std::vector<ClassTokenSequence> classes{{0, {1, 2}}, {1, {3, 4}}, {2, {5, 6}}};
  Rng rng(19);
  Mat feats(4, cfg.feature_dim);
  for (double& x : feats.v) x = rng.gaussian();
  l2_normalize_rows_inplace(feats);
  std::vector<int> labels{0, 2, 1, 0};

  auto loss_builder = [&](GradientTape& tape, int wc) {
    int x = tape.leaf(feats);
    int logits = tape.matmul_nt(x, wc);
    return tape.cross_entropy_loss(logits, labels, Reduction::Mean);
  };

  for (int m : {4, 1}) {
    PromptContext prompt = random_prompt(m, cfg.embed_dim, 100 + static_cast<uint64_t>(m));
    Mat grad = prompt_gradient(enc, prompt, classes, loss_builder);

    auto f = [&](const std::vector<double>& p) {
      PromptContext probe = prompt;
      probe.vectors.v = p;
      GradientTape tape;
      FrozenTextEncoder::Weights w = enc.push_weights(tape);
      int pn = tape.leaf(probe.vectors);
      int wc = enc.classifier_node(tape, w, pn, classes);
      return tape.value(loss_builder(tape, wc)).v[0];
    };
    CHECK(finite_difference_check(f, prompt.vectors.v, grad.v) < 1e-5);
  }
}

TEST_CASE("prompt_gradient of a prompt-independent loss is exactly zero") {
  FrozenTextEncoder enc(small_config());
  std::vector<ClassTokenSequence> classes{{0, {1}}, {1, {2}}};
  PromptContext prompt = random_prompt(2, 16, 8);
  Mat grad = prompt_gradient(enc, prompt, classes, [](GradientTape& tape, int wc) {
    return tape.affine(tape.sum_all(wc), 0.0, 5.0);
  });
  for (double g : grad.v) CHECK(g == 0.0);
}

TEST_CASE("prompt_gradient rejects frozen prompts") {
  FrozenTextEncoder enc(small_config());
  PromptContext frozen = enc.manual_prompt(std::vector<int>{1, 2});
  std::vector<ClassTokenSequence> classes{{0, {1}}, {1, {2}}};
  CHECK_THROWS_AS(prompt_gradient(enc, frozen, classes,
                                  [](GradientTape& t, int wc) { return t.sum_all(wc); }),
                  Error);
}

TEST_CASE("encoder weights stay frozen through gradient work") {
  FrozenTextEncoder enc(small_config());
  uint64_t before = enc.weight_checksum();
  PromptContext prompt = random_prompt(2, 16, 9);
  std::vector<ClassTokenSequence> classes{{0, {1}}, {1, {2}}};
  prompt_gradient(enc, prompt, classes,
                  [](GradientTape& t, int wc) { return t.sum_all(t.hadamard(wc, wc)); });
  enc.encode_text(prompt, classes[0]);
  CHECK(enc.weight_checksum() == before);
}

TEST_CASE("output is not invariant under prompt-row permutation") {
  FrozenTextEncoder enc(small_config());
  ClassTokenSequence cls{0, {4, 5}};
  int differing = 0;
  for (uint64_t trial = 0; trial < 5; ++trial) {
    PromptContext prompt = random_prompt(3, 16, 50 + trial);
    PromptContext permuted = prompt;
    for (int j = 0; j < 16; ++j) {
      permuted.vectors.at(0, j) = prompt.vectors.at(2, j);
      permuted.vectors.at(2, j) = prompt.vectors.at(0, j);
    }
    EmbeddingVector a = enc.encode_text(prompt, cls);
    EmbeddingVector b = enc.encode_text(permuted, cls);
    double diff = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) diff += std::abs(a.values[i] - b.values[i]);
    if (diff > 1e-9) ++differing;
  }
  CHECK(differing == 5);
}

TEST_CASE("manual_prompt copies embedding rows and is frozen") {
  FrozenTextEncoder enc(small_config());
  std::vector<int> tokens{3, 14, 15, 9};
  PromptContext p = enc.manual_prompt(tokens);
  CHECK(p.length() == 4);
  CHECK_FALSE(p.learnable);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 16; ++j)
      CHECK(p.vectors.at(i, j) == enc.embedding_table().at(tokens[static_cast<size_t>(i)], j));

  ClassTokenSequence cls{0, {1}};
  EmbeddingVector a = enc.encode_text(p, cls);
  EmbeddingVector b = enc.encode_text(enc.manual_prompt(tokens), cls);
  for (size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);

  CHECK_THROWS_AS(enc.manual_prompt(std::vector<int>{40}), Error);
}

TEST_CASE("embedding-table gradient through the token path passes finite differences") {
  EncoderConfig cfg;
  cfg.seed = 21;
  cfg.vocab = 8;
  cfg.embed_dim = 4;
  cfg.feature_dim = 3;
  cfg.blocks = 1;
  cfg.max_seq = 8;
  FrozenTextEncoder enc(cfg);
  std::vector<int> tmpl{1, 2};
  ClassTokenSequence cls{0, {5}};
  Rng rng(33);
  Mat target(1, 3);
  for (double& x : target.v) x = rng.gaussian();

  auto build = [&](GradientTape& tape, const Mat& table) {
    FrozenTextEncoder::Weights w = enc.push_weights(tape);
    // swap in the probed table
    GradientTape fresh;
    (void)fresh;
    int tnode = tape.leaf(table, true);
    FrozenTextEncoder::Weights probed = w;
    probed.table = tnode;
    int out = enc.encode_node_tokens(tape, probed, tmpl, cls);
    int diff = tape.sub(out, tape.leaf(target));
    return std::pair<int, int>(tape.sum_all(tape.hadamard(diff, diff)), tnode);
  };

  GradientTape tape;
  auto [loss, table_node] = build(tape, enc.embedding_table());
  tape.backward(loss);
  std::vector<double> analytic = tape.grad(table_node).v;

  auto f = [&](const std::vector<double>& p) {
    Mat probe = enc.embedding_table();
    probe.v = p;
    GradientTape t;
    return t.value(build(t, probe).first).v[0];
  };
  CHECK(finite_difference_check(f, enc.embedding_table().v, analytic) < 1e-5);
}

TEST_CASE("contrastive alignment reduces the loss and moves only the table") {
  EncoderConfig cfg = small_config();
  FrozenTextEncoder enc(cfg);
  std::vector<ClassTokenSequence> classes{{0, {1, 2}}, {1, {3, 4}}, {2, {5, 6}}};
  Rng rng(41);
  Mat feats(9, cfg.feature_dim);
  for (double& x : feats.v) x = rng.gaussian();
  l2_normalize_rows_inplace(feats);
  std::vector<int> labels{0, 0, 0, 1, 1, 1, 2, 2, 2};

  Mat projection_before = enc.projection_matrix();
  AlignConfig a;
  a.epochs = 40;
  a.seed = 17;
  std::vector<int> tmpl{7, 8};
  std::vector<double> losses = align_embedding_table(enc, feats, labels, classes, tmpl, a);
  REQUIRE(losses.size() == 40);
  CHECK(losses.back() < losses.front());
  for (size_t i = 0; i < projection_before.size(); ++i)
    CHECK(enc.projection_matrix().v[i] == projection_before.v[i]);
}
