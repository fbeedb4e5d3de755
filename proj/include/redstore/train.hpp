#pragma once

#include "redstore/dataset.hpp"
#include "redstore/encoder.hpp"

namespace redstore {

struct TrainConfig {
  std::size_t resolution = 96;
  std::size_t patch = 16;
  std::size_t embed = 32;
  std::size_t hidden = 64;
  std::size_t epochs = 10;
  std::size_t batch = 64;
  double lr = 1e-2;
  double temperature = 20.0;
  // Images are rasterized at catalog size and bilinearly resized to the
  // encoder resolution, matching what storefront crops look like.
  std::size_t source_dim = 192;
  std::size_t heldout_per_category = 200;
};

// Inner perturbation schedule for adversarial training: `steps` sign-gradient
// ascent steps of size alpha on the true-class loss, projected to the
// epsilon ball, starting from zero. steps == 0 degenerates to plain training
// with identical randomness.
struct InnerAttack {
  double epsilon = 16.0 / 255.0;
  double alpha = 6.0 / 255.0;
  std::size_t steps = 3;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // per-epoch mean training loss
  double heldout_accuracy = 0.0;
};

struct TrainedScorer {
  Scorer scorer;
  TrainReport report;
};

TrainedScorer train_surrogate(const DatasetSpec& spec, const TrainConfig& config,
                              std::uint64_t seed);

TrainedScorer adversarial_train(const DatasetSpec& spec, const TrainConfig& config,
                                const InnerAttack& inner, std::uint64_t seed);

// Accuracy over `count` fresh samples starting at stream index `offset`
// (the training run occupies indices [0, spec.size()) of the same stream).
double evaluate_accuracy(const Scorer& scorer, const DatasetSpec& spec, std::uint64_t seed,
                         std::size_t offset, std::size_t count, std::size_t source_dim);

// The four-member surrogate ensemble, each trained on the same procedural
// task with its own initialization. Category heads are discarded.
ScorerEnsemble train_ensemble(const DatasetSpec& spec, std::uint64_t seed,
                              std::size_t per_category = 500, std::size_t epochs = 5);

}  // namespace redstore
