#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "redstore/attacks.hpp"
#include "redstore/train.hpp"
#include "test_support.hpp"

using namespace redstore;
using redstore::testing::close;
using redstore::testing::max_abs_diff;

namespace {

constexpr double kEps16 = 16.0 / 255.0;

// two-class linear logits over a flattened (3,8,8) image
struct LinearModel {
  Tensor w;  // (2, 192)

  LogitsFn fn() const {
    return [this](Tape* tape, const Tensor& image) {
      Tensor flat = ops::reshape(tape, image, {image.size(), 1});
      Tensor logits = ops::matmul(tape, w, flat);
      return ops::reshape(tape, logits, {2});
    };
  }

  // untargeted ascent direction of the true-class loss
  Tensor loss_gradient_sign(std::size_t true_class) const {
    Tensor g = Tensor::zeros({192});
    for (std::size_t i = 0; i < 192; ++i) {
      const double diff = w.at(1 - true_class, i) - w.at(true_class, i);
      g.at(i) = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
    }
    return g;
  }
};

LinearModel make_linear(std::uint64_t seed, int zero_columns = 8) {
  Rng rng(seed);
  LinearModel m;
  m.w = Tensor::zeros({2, 192});
  for (std::size_t i = 0; i < 192; ++i) {
    m.w.at(0, i) = rng.uniform(-1.0, 1.0);
    m.w.at(1, i) = rng.uniform(-1.0, 1.0);
  }
  for (int k = 0; k < zero_columns; ++k) {
    const std::size_t i = rng.index(192);
    m.w.at(0, i) = 0.0;  // gradient exactly zero there
    m.w.at(1, i) = 0.0;
  }
  return m;
}

Scorer tiny_trained_scorer() {
  DatasetSpec spec;
  spec.categories = default_categories();
  spec.per_category = 60;
  TrainConfig cfg;
  cfg.resolution = 64;
  cfg.patch = 16;
  cfg.embed = 8;
  cfg.hidden = 16;
  cfg.epochs = 4;
  cfg.batch = 16;
  cfg.source_dim = 64;
  cfg.heldout_per_category = 10;
  return train_surrogate(spec, cfg, 77).scorer;
}

ScorerEnsemble random_ensemble(std::uint64_t seed) {
  Rng rng(seed);
  ScorerEnsemble e;
  for (std::size_t i = 0; i < kEnsembleSize; ++i)
    e.members.push_back(init_encoder(kEnsembleResolution[i], kEnsemblePatch[i], 8, 16, rng));
  return e;
}

}  // namespace

TEST_CASE("project_linf clamps, saturates and is idempotent") {
  CHECK(max_abs_diff(project_linf(Tensor::zeros({3, 4, 4}), kEps16),
                     Tensor::zeros({3, 4, 4})) == 0.0);
  Tensor ones = Tensor::constant({3, 4, 4}, 1.0);
  Tensor sat = project_linf(ones, kEps16);
  for (Eigen::Index i = 0; i < sat.data.size(); ++i) CHECK(sat.data[i] == kEps16);

  Rng rng(1);
  Tensor d = Tensor::uniform(rng, {5, 5}, -0.5, 0.5);
  Tensor p = project_linf(d, kEps16);
  CHECK(p.data.cwiseAbs().maxCoeff() <= kEps16);
  CHECK(max_abs_diff(project_linf(p, kEps16), p) == 0.0);
  CHECK_THROWS_AS(project_linf(d, -0.1), DomainError);
}

TEST_CASE("attack config invariants are enforced") {
  AttackConfig bad;
  bad.alpha = 0.2;  // above epsilon
  CHECK_THROWS_AS(validate_attack_config(bad), DomainError);
  bad = AttackConfig{};
  bad.early_stop_confidence = 0.0;
  CHECK_THROWS_AS(validate_attack_config(bad), DomainError);
  bad = AttackConfig{};
  bad.check_every = 0;
  CHECK_THROWS_AS(validate_attack_config(bad), DomainError);
}

TEST_CASE("linear oracle: BIM reaches the epsilon sign corner") {
  LinearModel m = make_linear(2);
  Tensor clean = Tensor::constant({3, 8, 8}, 0.5);
  AttackConfig cfg;
  cfg.mode = AttackMode::untargeted;
  cfg.max_iters = 20;       // >= ceil(eps/alpha) = 16
  cfg.check_every = 1000;   // keep periodic checks out of the oracle's way
  AdversarialResult r =
      iterative_sign_attack(m.fn(), clean, /*true=*/0, std::nullopt, cfg, false);

  Tensor gsign = m.loss_gradient_sign(0);
  int nonzero = 0;
  for (std::size_t i = 0; i < 192; ++i) {
    const double expect = kEps16 * gsign.at(i);
    if (gsign.at(i) != 0.0) {
      CHECK(close(r.delta.data[static_cast<Eigen::Index>(i)], expect, 1e-12));
      ++nonzero;
    } else {
      CHECK(r.delta.data[static_cast<Eigen::Index>(i)] == 0.0);
    }
  }
  CHECK(nonzero > 150);
}

TEST_CASE("linear oracle: PGD converges to the same corner from any seed") {
  LinearModel m = make_linear(3);
  Tensor clean = Tensor::constant({3, 8, 8}, 0.5);
  Tensor gsign = m.loss_gradient_sign(0);
  for (std::uint64_t seed : {0ULL, 7ULL, 99ULL}) {
    AttackConfig cfg;
    cfg.mode = AttackMode::untargeted;
    cfg.max_iters = 40;  // worst-case traversal is 2*eps/alpha = 32
    cfg.check_every = 1000;
    cfg.seed = seed;
    AdversarialResult r =
        iterative_sign_attack(m.fn(), clean, 0, std::nullopt, cfg, true);
    for (std::size_t i = 0; i < 192; ++i)
      if (gsign.at(i) != 0.0)
        CHECK(close(r.delta.data[static_cast<Eigen::Index>(i)], kEps16 * gsign.at(i), 1e-12));
  }
}

TEST_CASE("linear oracle: objective is non-decreasing in the budget") {
  LinearModel m = make_linear(4);
  Tensor clean = Tensor::constant({3, 8, 8}, 0.5);
  double last = -1e300;
  for (double eps : {2.0 / 255, 4.0 / 255, 8.0 / 255, 16.0 / 255}) {
    AttackConfig cfg;
    cfg.mode = AttackMode::untargeted;
    cfg.epsilon = eps;
    cfg.max_iters = 40;
    cfg.check_every = 1000;
    AdversarialResult r = iterative_sign_attack(m.fn(), clean, 0, std::nullopt, cfg, false);
    double best = -1e300;
    for (double v : r.loss_trace) best = std::max(best, v);
    CHECK(best >= last - 1e-12);
    last = best;
  }
}

TEST_CASE("PGD initialization stays inside the ball and is seed-deterministic") {
  LinearModel m = make_linear(5);
  Tensor clean = Tensor::constant({3, 8, 8}, 0.5);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    AttackConfig cfg;
    cfg.mode = AttackMode::untargeted;
    cfg.alpha = 0.0;  // keep delta at its initialization
    cfg.max_iters = 1;
    cfg.check_every = 1000;
    cfg.seed = seed;
    AdversarialResult r = iterative_sign_attack(m.fn(), clean, 0, std::nullopt, cfg, true);
    CHECK(r.delta.data.cwiseAbs().maxCoeff() <= kEps16);
  }

  AttackConfig cfg;
  cfg.mode = AttackMode::untargeted;
  cfg.seed = 1234;
  cfg.max_iters = 10;
  AdversarialResult a = iterative_sign_attack(m.fn(), clean, 0, std::nullopt, cfg, true);
  AdversarialResult b = iterative_sign_attack(m.fn(), clean, 0, std::nullopt, cfg, true);
  CHECK(max_abs_diff(a.delta, b.delta) == 0.0);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.iterations_used == b.iterations_used);
  CHECK(a.success == b.success);
}

TEST_CASE("epsilon zero returns the clean image; success needs a confident misprediction") {
  Scorer scorer = tiny_trained_scorer();
  Tensor img = generate_product_image("sweater", 5, 64);
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  cfg.alpha = 0.0;
  cfg.max_iters = 3;
  cfg.mode = AttackMode::untargeted;
  AdversarialResult r = bim_attack(scorer, img, "pants", "sweater", std::nullopt, cfg);
  CHECK(max_abs_diff(r.adversarial_image, img) == 0.0);
  CHECK(r.delta.data.cwiseAbs().maxCoeff() == 0.0);

  const Prediction p = predict(scorer, img);
  const bool expect_success = p.index != scorer.categories.index_of("sweater") &&
                              p.confidence >= cfg.early_stop_confidence;
  CHECK(r.success == expect_success);
}

TEST_CASE("targeted success implies a confident prediction of the target") {
  Scorer scorer = tiny_trained_scorer();
  Tensor img = generate_product_image("sweater", 11, 64);
  AttackConfig cfg;  // defaults: targeted, eps 16/255
  cfg.max_iters = 60;
  AdversarialResult r = bim_attack(scorer, img, "pants", "sweater", "pants", cfg);
  if (r.success) {
    const Prediction p = predict(scorer, r.adversarial_image);
    CHECK(p.index == scorer.categories.index_of("pants"));
    CHECK(p.confidence >= cfg.early_stop_confidence);
  }
  CHECK(r.delta.data.cwiseAbs().maxCoeff() <= cfg.epsilon + 1e-12);
  CHECK(r.adversarial_image.data.minCoeff() >= 0.0);
  CHECK(r.adversarial_image.data.maxCoeff() <= 1.0);
  // returned delta achieves the best recorded objective (min targeted loss)
  double best = 1e300;
  for (double v : r.loss_trace) best = std::min(best, v);
  Tape tape;
  Tensor logits = score_all(nullptr, scorer, r.adversarial_image);
  const double loss =
      ops::cross_entropy(nullptr, logits, scorer.categories.index_of("pants")).value();
  CHECK(close(loss, best, 1e-9));
}

TEST_CASE("targeted mode rejects target == true and unknown categories") {
  Scorer scorer = tiny_trained_scorer();
  Tensor img = generate_product_image("sweater", 3, 64);
  AttackConfig cfg;
  CHECK_THROWS_AS(bim_attack(scorer, img, "sweater", "sweater", "sweater", cfg), DomainError);
  CHECK_THROWS_AS(bim_attack(scorer, img, "hat", "sweater", "hat", cfg), DomainError);
}

TEST_CASE("budget invariants hold across randomized configurations") {
  Scorer scorer = tiny_trained_scorer();
  Rng rng(21);
  for (int i = 0; i < 30; ++i) {
    AttackConfig cfg;
    cfg.epsilon = rng.uniform(0.0, 0.12);
    cfg.alpha = cfg.epsilon * rng.uniform(0.0, 1.0);
    cfg.max_iters = 1 + static_cast<int>(rng.index(8));
    cfg.check_every = 1 + static_cast<int>(rng.index(4));
    cfg.mode = rng.uniform() < 0.5 ? AttackMode::targeted : AttackMode::untargeted;
    cfg.seed = rng.bits();
    Tensor img = generate_product_image("pants", rng.bits(), 64);
    AdversarialResult r =
        rng.uniform() < 0.5
            ? bim_attack(scorer, img, "sweater", "pants", "sweater", cfg)
            : pgd_attack(scorer, img, "sweater", "pants", "sweater", cfg);
    CHECK(r.delta.data.cwiseAbs().maxCoeff() <= cfg.epsilon + 1e-12);
    CHECK(r.adversarial_image.data.minCoeff() >= 0.0);
    CHECK(r.adversarial_image.data.maxCoeff() <= 1.0);
    CHECK(max_abs_diff(r.adversarial_image,
                       Tensor(img.shape, (img.data + r.delta.data).cwiseMax(0.0).cwiseMin(1.0))) ==
          0.0);
  }
}

TEST_CASE("spectral attack: degenerate budget returns the clean image") {
  ScorerEnsemble e = random_ensemble(31);
  Tensor img = generate_product_image("golf-bag", 1, 64);
  AttackConfig cfg;
  cfg.mode = AttackMode::untargeted;
  cfg.max_iters = 0;
  AdversarialResult r = spectral_ensemble_attack(e, img, cfg);
  CHECK(max_abs_diff(r.adversarial_image, img) == 0.0);
  CHECK(r.iterations_used == 0);
  CHECK_FALSE(r.success);
}

TEST_CASE("spectral attack raises the ensemble distance and is deterministic") {
  ScorerEnsemble e = random_ensemble(32);
  Rng rng(33);
  for (int run = 0; run < 3; ++run) {
    Tensor img = generate_product_image("sweater", 100 + run, 64);
    AttackConfig cfg;
    cfg.mode = AttackMode::untargeted;
    cfg.max_iters = 15;
    AdversarialResult r = spectral_ensemble_attack(e, img, cfg);
    CHECK(r.loss_trace.back() > r.loss_trace.front());
    CHECK(r.delta.data.cwiseAbs().maxCoeff() <= cfg.epsilon + 1e-12);
    CHECK(r.adversarial_image.data.minCoeff() >= 0.0);
    CHECK(r.adversarial_image.data.maxCoeff() <= 1.0);

    AdversarialResult r2 = spectral_ensemble_attack(e, img, cfg);
    CHECK(max_abs_diff(r.delta, r2.delta) == 0.0);
  }
}

TEST_CASE("spectral attack requires the four-encoder ensemble") {
  ScorerEnsemble e = random_ensemble(34);
  e.members.pop_back();
  Tensor img = generate_product_image("pants", 2, 64);
  CHECK_THROWS_AS(spectral_ensemble_attack(e, img, AttackConfig{}), DomainError);
}
