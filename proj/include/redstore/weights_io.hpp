#pragma once

#include <string>

#include "redstore/encoder.hpp"

namespace redstore {

// Weights-file layout (bit-exact round trip):
//   bytes "SVLM1\n"
//   header line: "resolution patch_size embed_dim hidden_dim n_categories\n"
//   sections, each "name length\n" followed by `length` little-endian
//   64-bit floats. Section order is fixed: patch_proj, ln_gamma, ln_beta,
//   mlp_w1, mlp_b1, mlp_w2, mlp_b2, out_proj, then one "category:<label>"
//   section per category. n_categories == 0 stores a bare encoder.
void save_weights(const std::string& path, const Scorer& scorer);
Scorer load_weights(const std::string& path);

void save_encoder(const std::string& path, const PatchEncoder& encoder);
PatchEncoder load_encoder(const std::string& path);

// The four ensemble members live as ensemble-0.svlm .. ensemble-3.svlm
// inside a directory.
void save_ensemble(const std::string& dir, const ScorerEnsemble& ensemble);
ScorerEnsemble load_ensemble(const std::string& dir);

std::string ensemble_member_path(const std::string& dir, std::size_t index);

}  // namespace redstore
