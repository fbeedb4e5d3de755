#include "redstore/train.hpp"

#include <cmath>
#include <cstring>

namespace redstore {

namespace {

// Samples are rasterized at source_dim and resized to the encoder input.
// Downsizing is done once at build time; upsizing (ensemble members above
// the catalog size) is done per batch so the cache stays at source_dim.
struct Cache {
  std::vector<double> pixels;  // n * 3*store_dim*store_dim
  std::vector<std::size_t> labels;
  std::size_t store_dim = 0;
  std::size_t sample_size = 0;

  Tensor batch(std::size_t begin, std::size_t count, std::size_t res) const {
    if (store_dim == res) {
      Tensor out = Tensor::zeros({count, 3, res, res});
      std::memcpy(out.data.data(), pixels.data() + begin * sample_size,
                  count * sample_size * sizeof(double));
      return out;
    }
    Tensor out = Tensor::zeros({count, 3, res, res});
    const std::size_t out_size = 3 * res * res;
    for (std::size_t i = 0; i < count; ++i) {
      Tensor img({3, store_dim, store_dim},
                 Eigen::Map<const Eigen::VectorXd>(
                     pixels.data() + (begin + i) * sample_size,
                     static_cast<Eigen::Index>(sample_size)));
      Tensor resized = ops::bilinear_resize(nullptr, img, res, res);
      out.data.segment(static_cast<Eigen::Index>(i * out_size),
                       static_cast<Eigen::Index>(out_size)) = resized.data;
    }
    return out;
  }
};

Cache build_cache(const DatasetSpec& spec, const TrainConfig& cfg, std::uint64_t image_seed) {
  Cache cache;
  const std::size_t n = spec.size();
  cache.store_dim = std::min(cfg.resolution, cfg.source_dim);
  cache.sample_size = 3 * cache.store_dim * cache.store_dim;
  cache.pixels.resize(n * cache.sample_size);
  cache.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    DatasetSample s = dataset_sample(spec, image_seed, i, cfg.source_dim);
    Tensor img = s.image;
    if (cfg.source_dim != cache.store_dim)
      img = ops::bilinear_resize(nullptr, img, cache.store_dim, cache.store_dim);
    std::memcpy(cache.pixels.data() + i * cache.sample_size, img.data.data(),
                cache.sample_size * sizeof(double));
    cache.labels[i] = s.label;
  }
  return cache;
}

Tensor class_loss(Tape* tape, const PatchEncoder& enc, const Tensor& cats_raw, double tau,
                  const Tensor& images, const std::vector<std::size_t>& labels) {
  Tensor z = encode_batch(tape, enc, images);
  Tensor cn = ops::l2_normalize(tape, cats_raw);
  Tensor logits = ops::scalar_mul(tape, ops::matmul(tape, z, ops::transpose(tape, cn)), tau);
  Tensor ce = ops::cross_entropy_rows(tape, logits, labels);
  return ops::mean_pool(tape, ce, 0);
}

TrainedScorer train_impl(const DatasetSpec& spec, const TrainConfig& cfg,
                         const InnerAttack* inner, std::uint64_t seed) {
  if (spec.categories.size() < 2)
    throw DomainError("train: need at least two categories, got " +
                      std::to_string(spec.categories.size()));
  if (spec.per_category == 0) throw DomainError("train: empty dataset");
  if (cfg.batch == 0) throw DomainError("train: batch size must be positive");
  if (!(cfg.lr > 0.0)) throw DomainError("train: lr must be positive");
  if (inner && inner->steps > 0) {
    if (!(inner->epsilon >= 0.0 && inner->alpha >= 0.0))
      throw DomainError("train: inner attack budget must be non-negative");
  }

  Rng init_rng(derive_seed(seed, 1));
  PatchEncoder enc = init_encoder(cfg.resolution, cfg.patch, cfg.embed, cfg.hidden, init_rng);
  Tensor cats_raw = Tensor::normal(init_rng, {spec.categories.size(), cfg.embed}, 1.0);

  const std::uint64_t image_seed = derive_seed(seed, 2);
  Cache cache = build_cache(spec, cfg, image_seed);
  const std::size_t n = spec.size();

  std::vector<Tensor*> params = enc.weights();
  params.push_back(&cats_raw);
  AdamState adam;

  TrainReport report;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch) {
      const std::size_t count = std::min(cfg.batch, n - begin);
      Tensor images = cache.batch(begin, count, cfg.resolution);
      std::vector<std::size_t> labels(cache.labels.begin() + static_cast<long>(begin),
                                      cache.labels.begin() + static_cast<long>(begin + count));

      if (inner && inner->steps > 0) {
        // craft the batch perturbation against the current weights
        Tensor delta = Tensor::zeros(images.shape);
        for (std::size_t s = 0; s < inner->steps; ++s) {
          Tape tape;
          Tensor dl = tape.leaf(delta);
          Tensor adv = ops::clamp(&tape, ops::add(&tape, images, dl), 0.0, 1.0);
          Tensor loss = class_loss(&tape, enc, cats_raw, cfg.temperature, adv, labels);
          const NodeId want[] = {dl.node};
          Tensor g = backward(tape, loss.node, want).at(dl.node);
          delta.data += inner->alpha * g.data.array().sign().matrix();
          delta.data = delta.data.cwiseMax(-inner->epsilon).cwiseMin(inner->epsilon);
          delta.data = (images.data + delta.data).cwiseMax(0.0).cwiseMin(1.0) - images.data;
        }
        images.data += delta.data;
      }

      Tape tape;
      PatchEncoder bound = enc;
      std::vector<Tensor*> bound_params = bound.weights();
      std::vector<NodeId> param_nodes;
      for (Tensor* w : bound_params) {
        *w = tape.leaf(*w);
        param_nodes.push_back(w->node);
      }
      Tensor cats_leaf = tape.leaf(cats_raw);
      param_nodes.push_back(cats_leaf.node);

      Tensor loss = class_loss(&tape, bound, cats_leaf, cfg.temperature, images, labels);
      loss_sum += loss.value() * static_cast<double>(count);

      GradientMap grads = backward(tape, loss.node, param_nodes);
      std::vector<const Tensor*> grad_ptrs;
      for (NodeId id : param_nodes) grad_ptrs.push_back(&grads.at(id));
      adam_step(params, grad_ptrs, adam, cfg.lr);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(n));
  }

  TrainedScorer out;
  out.scorer.encoder = std::move(enc);
  out.scorer.categories = make_category_embeddings(spec.categories, cats_raw);
  out.scorer.temperature = cfg.temperature;
  out.report = std::move(report);
  out.report.heldout_accuracy =
      evaluate_accuracy(out.scorer, spec, seed, n,
                        spec.categories.size() * cfg.heldout_per_category, cfg.source_dim);
  return out;
}

}  // namespace

TrainedScorer train_surrogate(const DatasetSpec& spec, const TrainConfig& config,
                              std::uint64_t seed) {
  return train_impl(spec, config, nullptr, seed);
}

TrainedScorer adversarial_train(const DatasetSpec& spec, const TrainConfig& config,
                                const InnerAttack& inner, std::uint64_t seed) {
  return train_impl(spec, config, &inner, seed);
}

double evaluate_accuracy(const Scorer& scorer, const DatasetSpec& spec, std::uint64_t seed,
                         std::size_t offset, std::size_t count, std::size_t source_dim) {
  if (count == 0) return 0.0;
  const std::uint64_t image_seed = derive_seed(seed, 2);
  std::size_t correct = 0;
  for (std::size_t j = 0; j < count; ++j) {
    DatasetSample s = dataset_sample(spec, image_seed, offset + j, source_dim);
    if (predict(scorer, s.image).index == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(count);
}

ScorerEnsemble train_ensemble(const DatasetSpec& spec, std::uint64_t seed,
                              std::size_t per_category, std::size_t epochs) {
  ScorerEnsemble ensemble;
  for (std::size_t i = 0; i < kEnsembleSize; ++i) {
    TrainConfig cfg;
    cfg.resolution = kEnsembleResolution[i];
    cfg.patch = kEnsemblePatch[i];
    cfg.embed = 16;
    cfg.hidden = 32;
    cfg.epochs = epochs;
    cfg.heldout_per_category = 50;
    DatasetSpec member_spec = spec;
    member_spec.per_category = per_category;
    TrainedScorer trained =
        train_surrogate(member_spec, cfg, derive_seed(seed, 0xE5E0 + i));
    ensemble.members.push_back(std::move(trained.scorer.encoder));
  }
  validate_ensemble(ensemble);
  return ensemble;
}

}  // namespace redstore
