#pragma once

#include <span>
#include <string>
#include <vector>

#include "redstore/rng.hpp"
#include "redstore/tensor.hpp"

namespace redstore {

// Patch-projection vision encoder: linear patch projection -> layer norm ->
// two-layer relu MLP -> mean pool over patches -> output projection ->
// l2 normalize. Weight tensors may carry tape node ids (bound by a trainer);
// unbound weights act as constants, which keeps attack tapes small.
struct PatchEncoder {
  std::size_t resolution = 96;
  std::size_t patch = 16;
  std::size_t embed = 32;
  std::size_t hidden = 64;

  Tensor w_patch;             // (3*patch*patch, embed)
  Tensor ln_gamma, ln_beta;   // (embed)
  Tensor w1, b1;              // (embed, hidden), (hidden)
  Tensor w2, b2;              // (hidden, embed), (embed)
  Tensor w_out;               // (embed, embed)

  std::size_t patches() const { return (resolution / patch) * (resolution / patch); }
  std::vector<Tensor*> weights();
  std::vector<const Tensor*> weights() const;
};

PatchEncoder init_encoder(std::size_t resolution, std::size_t patch, std::size_t embed,
                          std::size_t hidden, Rng& rng);

// Unit embedding of a (3,H,W) image in [0,1]; dims must match the encoder
// resolution (resize first with ops::bilinear_resize otherwise).
Tensor encode(Tape* tape, const PatchEncoder& enc, const Tensor& image);

// (B,3,H,W) -> (B,embed); each row unit-norm.
Tensor encode_batch(Tape* tape, const PatchEncoder& enc, const Tensor& images);

struct CategoryEmbeddings {
  std::vector<std::string> labels;
  Tensor matrix;  // (K, embed), rows unit-norm

  std::size_t index_of(const std::string& label) const;  // DomainError if unknown
  Tensor row(std::size_t k) const;
};

CategoryEmbeddings make_category_embeddings(std::vector<std::string> labels, Tensor matrix);

// Vision-language scorer: encoder plus category directions. Logit of
// category k is temperature * cos(embedding, category_k).
struct Scorer {
  PatchEncoder encoder;
  CategoryEmbeddings categories;
  double temperature = 20.0;
};

// Logits over all labels; resizes the crop to the encoder resolution inside
// the graph, so gradients flow back to the crop.
Tensor score_all(Tape* tape, const Scorer& scorer, const Tensor& crop);

// Logits for a caller-chosen subset/order of categories.
Tensor score_categories(Tape* tape, const Scorer& scorer, const Tensor& crop,
                        std::span<const std::string> categories);

struct Prediction {
  std::size_t index = 0;
  double confidence = 0.0;  // max softmax probability
};
Prediction predict(const Scorer& scorer, const Tensor& crop);

// Four fixed surrogate encoders mirroring (patch, resolution) =
// (32,224), (16,224), (14,224), (14,336); equal embed dims.
struct ScorerEnsemble {
  std::vector<PatchEncoder> members;
};

inline constexpr std::size_t kEnsembleSize = 4;
extern const std::size_t kEnsemblePatch[kEnsembleSize];
extern const std::size_t kEnsembleResolution[kEnsembleSize];

void validate_ensemble(const ScorerEnsemble& ensemble);

}  // namespace redstore
