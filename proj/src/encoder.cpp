#include "redstore/encoder.hpp"

#include <cmath>

namespace redstore {

const std::size_t kEnsemblePatch[kEnsembleSize] = {32, 16, 14, 14};
const std::size_t kEnsembleResolution[kEnsembleSize] = {224, 224, 224, 336};

std::vector<Tensor*> PatchEncoder::weights() {
  return {&w_patch, &ln_gamma, &ln_beta, &w1, &b1, &w2, &b2, &w_out};
}

std::vector<const Tensor*> PatchEncoder::weights() const {
  return {&w_patch, &ln_gamma, &ln_beta, &w1, &b1, &w2, &b2, &w_out};
}

PatchEncoder init_encoder(std::size_t resolution, std::size_t patch, std::size_t embed,
                          std::size_t hidden, Rng& rng) {
  if (patch == 0 || resolution % patch != 0)
    throw DomainError("encoder: patch size must divide the resolution");
  if (embed == 0 || hidden == 0) throw DomainError("encoder: zero width");
  PatchEncoder e;
  e.resolution = resolution;
  e.patch = patch;
  e.embed = embed;
  e.hidden = hidden;
  const std::size_t pdim = 3 * patch * patch;
  e.w_patch = Tensor::normal(rng, {pdim, embed}, 1.0 / std::sqrt(static_cast<double>(pdim)));
  e.ln_gamma = Tensor::constant({embed}, 1.0);
  e.ln_beta = Tensor::zeros({embed});
  e.w1 = Tensor::normal(rng, {embed, hidden}, 1.0 / std::sqrt(static_cast<double>(embed)));
  e.b1 = Tensor::zeros({hidden});
  e.w2 = Tensor::normal(rng, {hidden, embed}, 1.0 / std::sqrt(static_cast<double>(hidden)));
  e.b2 = Tensor::zeros({embed});
  e.w_out = Tensor::normal(rng, {embed, embed}, 1.0 / std::sqrt(static_cast<double>(embed)));
  return e;
}

static void check_input(const PatchEncoder& enc, const Tensor& image, bool batched) {
  const std::size_t want_rank = batched ? 4 : 3;
  if (image.rank() != want_rank)
    throw ShapeError("encode: expected rank " + std::to_string(want_rank) + " input, got " +
                     shape_str(image.shape));
  const std::size_t off = batched ? 1 : 0;
  if (image.shape[off] != 3 || image.shape[off + 1] != enc.resolution ||
      image.shape[off + 2] != enc.resolution)
    throw ShapeError("encode: input " + shape_str(image.shape) + " does not match encoder resolution " +
                     std::to_string(enc.resolution));
  const double lo = image.data.minCoeff(), hi = image.data.maxCoeff();
  if (lo < -1e-9 || hi > 1.0 + 1e-9)
    throw DomainError("encode: pixel values outside [0,1]");
}

static Tensor encode_rows(Tape* tape, const PatchEncoder& enc, const Tensor& images,
                          std::size_t batch) {
  // (B*P, 3p^2) patch rows through projection, norm and MLP
  Tensor rows = ops::patchify(tape, images, enc.patch);
  Tensor proj = ops::matmul(tape, rows, enc.w_patch);
  Tensor normed = ops::layer_norm(tape, proj, enc.ln_gamma, enc.ln_beta);
  Tensor h = ops::relu(tape, ops::add_rows(tape, ops::matmul(tape, normed, enc.w1), enc.b1));
  Tensor feat = ops::add_rows(tape, ops::matmul(tape, h, enc.w2), enc.b2);
  Tensor stacked = ops::reshape(tape, feat, {batch, enc.patches(), enc.embed});
  Tensor pooled = ops::mean_pool(tape, stacked, 1);  // (B, embed)
  Tensor out = ops::matmul(tape, pooled, enc.w_out);
  return ops::l2_normalize(tape, out);
}

Tensor encode(Tape* tape, const PatchEncoder& enc, const Tensor& image) {
  check_input(enc, image, false);
  Tensor z = encode_rows(tape, enc, image, 1);
  return ops::reshape(tape, z, {enc.embed});
}

Tensor encode_batch(Tape* tape, const PatchEncoder& enc, const Tensor& images) {
  check_input(enc, images, true);
  return encode_rows(tape, enc, images, images.shape[0]);
}

std::size_t CategoryEmbeddings::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return i;
  throw DomainError("unknown category: " + label);
}

Tensor CategoryEmbeddings::row(std::size_t k) const {
  if (k >= labels.size()) throw DomainError("category index out of range");
  const std::size_t e = matrix.shape[1];
  Tensor out = Tensor::zeros({e});
  out.data = matrix.data.segment(static_cast<Eigen::Index>(k * e), static_cast<Eigen::Index>(e));
  return out;
}

CategoryEmbeddings make_category_embeddings(std::vector<std::string> labels, Tensor matrix) {
  if (labels.empty()) throw DomainError("category embeddings: empty label set");
  if (matrix.rank() != 2 || matrix.shape[0] != labels.size())
    throw ShapeError("category embeddings: matrix " + shape_str(matrix.shape) + " for " +
                     std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j)
      if (labels[i] == labels[j]) throw DomainError("duplicate category label: " + labels[i]);
  CategoryEmbeddings c;
  c.labels = std::move(labels);
  c.matrix = ops::l2_normalize(nullptr, matrix);
  return c;
}

Tensor score_all(Tape* tape, const Scorer& scorer, const Tensor& crop) {
  if (crop.rank() != 3 || crop.shape[0] != 3)
    throw ShapeError("score: crop must be (3,H,W), got " + shape_str(crop.shape));
  Tensor input = crop;
  if (crop.shape[1] != scorer.encoder.resolution || crop.shape[2] != scorer.encoder.resolution)
    input = ops::bilinear_resize(tape, crop, scorer.encoder.resolution, scorer.encoder.resolution);
  Tensor z = encode(tape, scorer.encoder, input);
  Tensor zrow = ops::reshape(tape, z, {1, scorer.encoder.embed});
  Tensor logits = ops::matmul(tape, zrow, ops::transpose(tape, scorer.categories.matrix));
  logits = ops::scalar_mul(tape, logits, scorer.temperature);
  return ops::reshape(tape, logits, {scorer.categories.labels.size()});
}

Tensor score_categories(Tape* tape, const Scorer& scorer, const Tensor& crop,
                        std::span<const std::string> categories) {
  if (categories.empty()) throw DomainError("score_categories: empty category set");
  const std::size_t e = scorer.encoder.embed;
  Tensor sel = Tensor::zeros({categories.size(), e});
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const std::size_t k = scorer.categories.index_of(categories[i]);
    sel.data.segment(static_cast<Eigen::Index>(i * e), static_cast<Eigen::Index>(e)) =
        scorer.categories.matrix.data.segment(static_cast<Eigen::Index>(k * e),
                                              static_cast<Eigen::Index>(e));
  }
  Tensor input = crop;
  if (crop.shape[1] != scorer.encoder.resolution || crop.shape[2] != scorer.encoder.resolution)
    input = ops::bilinear_resize(tape, crop, scorer.encoder.resolution, scorer.encoder.resolution);
  Tensor z = encode(tape, scorer.encoder, input);
  Tensor zrow = ops::reshape(tape, z, {1, e});
  Tensor logits = ops::matmul(tape, zrow, ops::transpose(tape, sel));
  logits = ops::scalar_mul(tape, logits, scorer.temperature);
  return ops::reshape(tape, logits, {categories.size()});
}

Prediction predict(const Scorer& scorer, const Tensor& crop) {
  Tensor logits = score_all(nullptr, scorer, crop);
  Tensor probs = ops::softmax(nullptr, logits);
  Prediction p;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs.at(i) > probs.at(p.index)) p.index = i;
  p.confidence = probs.at(p.index);
  return p;
}

void validate_ensemble(const ScorerEnsemble& ensemble) {
  if (ensemble.members.size() != kEnsembleSize)
    throw DomainError("ensemble: expected exactly " + std::to_string(kEnsembleSize) +
                      " encoders, got " + std::to_string(ensemble.members.size()));
  const std::size_t embed = ensemble.members[0].embed;
  for (std::size_t i = 0; i < kEnsembleSize; ++i) {
    const PatchEncoder& m = ensemble.members[i];
    if (m.patch != kEnsemblePatch[i] || m.resolution != kEnsembleResolution[i])
      throw DomainError("ensemble: member " + std::to_string(i) + " must be patch " +
                        std::to_string(kEnsemblePatch[i]) + " at resolution " +
                        std::to_string(kEnsembleResolution[i]));
    if (m.embed != embed) throw DomainError("ensemble: embed dims differ");
  }
}

}  // namespace redstore
