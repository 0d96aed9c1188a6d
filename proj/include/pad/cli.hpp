#pragma once

#include <string>
#include <vector>

#include "pad/encoder.hpp"

namespace pad {

// Runs one CLI invocation; args exclude the program name. Returns the exit
// code: 0 success, 1 validation/usage error, 2 runtime failure.
int dispatch(const std::vector<std::string>& args);

void save_prompt(const std::string& path, const PromptContext& prompt);
PromptContext load_prompt(const std::string& path, int expect_embed_dim);

}  // namespace pad
