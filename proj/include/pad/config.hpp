#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pad/data.hpp"
#include "pad/encoder.hpp"
#include "pad/harness.hpp"

namespace pad {

// Everything that affects results, content-addressed. Unknown keys in the
// JSON are rejected; output_dir and workers stay outside the hash.
struct ExperimentConfig {
  EncoderConfig encoder;
  std::string alignment = "auto";  // auto | none | dataset | union
  AlignConfig contrastive;         // toy pretraining settings
  DatasetConfig dataset;
  HarnessConfig harness;
  std::vector<std::string> datasets;  // dataset directories
  std::vector<MethodSpec> methods;
  std::vector<int> shots = {16};
  std::vector<uint64_t> seeds = {0, 1, 2};
  std::string output_dir = "out";
  int workers = 1;

  uint64_t hash() const;
  std::string canonical_json() const;  // hash input, sorted keys
};

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// `--set a.b.c=value` style override; value parsed as JSON when possible.
void apply_override(std::string& json_text, const std::string& assignment);

std::string default_config_json();

// Rebuilds the encoder deterministically: seeded weights, then the
// alignment re-fit implied by `alignment` and the dataset provenance
// (weights are never serialized).
FrozenTextEncoder make_encoder(const ExperimentConfig& cfg,
                               const std::vector<const FewShotDataset*>& datasets);

}  // namespace pad
