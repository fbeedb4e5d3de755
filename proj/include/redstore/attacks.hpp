#pragma once

#include <functional>
#include <optional>

#include "redstore/dct.hpp"
#include "redstore/encoder.hpp"

namespace redstore {

enum class AttackMode { targeted, untargeted };

struct AttackConfig {
  double epsilon = 16.0 / 255.0;
  double alpha = 1.0 / 255.0;
  int max_iters = 100;
  double early_stop_confidence = 0.95;
  AttackMode mode = AttackMode::targeted;
  int check_every = 5;  // iterations between full-pipeline success checks
  std::uint64_t seed = 0;
};

void validate_attack_config(const AttackConfig& config);

struct AdversarialResult {
  Tensor adversarial_image;  // clamp(clean + delta, 0, 1)
  Tensor delta;              // max-norm <= epsilon
  int iterations_used = 0;
  bool success = false;
  double final_confidence = 0.0;
  std::vector<double> loss_trace;  // objective at each evaluated iterate
};

// Elementwise clamp onto the epsilon ball; idempotent.
Tensor project_linf(Tensor delta, double epsilon);

// Full-label-set logits of a candidate image; must be differentiable
// w.r.t. the image when a tape is passed.
using LogitsFn = std::function<Tensor(Tape*, const Tensor& image)>;

// Shared BIM/PGD core over an arbitrary differentiable logits function.
// Targeted mode descends cross-entropy toward `target_index`; untargeted
// ascends cross-entropy of `true_index`. Every `check_every` iterations the
// logits are re-evaluated and the attack stops once the (mis)prediction is
// confident. The best-objective iterate recorded in loss_trace is returned.
AdversarialResult iterative_sign_attack(const LogitsFn& logits_fn, const Tensor& clean,
                                        std::size_t true_index,
                                        std::optional<std::size_t> target_index,
                                        const AttackConfig& config, bool random_start);

// delta_0 = 0
AdversarialResult bim_attack(const Scorer& scorer, const Tensor& clean_image,
                             const std::string& command_category,
                             const std::string& true_category,
                             const std::optional<std::string>& target_category,
                             const AttackConfig& config);

// delta_0 ~ Uniform(-epsilon, epsilon) from config.seed
AdversarialResult pgd_attack(const Scorer& scorer, const Tensor& clean_image,
                             const std::string& command_category,
                             const std::string& true_category,
                             const std::optional<std::string>& target_category,
                             const AttackConfig& config);

// Untargeted transfer attack: maximizes the ensemble-mean cosine distance
// between clean and perturbed embeddings, stepping on DCT coefficients and
// reconstructing the pixel perturbation through the inverse transform.
// Success against a held-out target scorer is the caller's to judge; the
// returned success flag is always false and the full budget is spent.
AdversarialResult spectral_ensemble_attack(const ScorerEnsemble& ensemble, const Tensor& clean_image,
                                           const AttackConfig& config);

}  // namespace redstore
