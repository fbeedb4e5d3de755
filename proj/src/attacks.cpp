#include "redstore/attacks.hpp"

#include <cmath>
#include <limits>

namespace redstore {

void validate_attack_config(const AttackConfig& config) {
  if (!(config.epsilon >= 0.0 && config.epsilon <= 1.0))
    throw DomainError("attack: epsilon must lie in [0,1]");
  if (!(config.alpha >= 0.0 && config.alpha <= config.epsilon))
    throw DomainError("attack: alpha must lie in [0, epsilon]");
  if (config.max_iters < 0) throw DomainError("attack: max_iters must be non-negative");
  if (!(config.early_stop_confidence > 0.0 && config.early_stop_confidence <= 1.0))
    throw DomainError("attack: early_stop_confidence must lie in (0,1]");
  if (config.check_every < 1) throw DomainError("attack: check_every must be positive");
}

Tensor project_linf(Tensor delta, double epsilon) {
  if (epsilon < 0.0) throw DomainError("project_linf: negative epsilon");
  delta.node = kNoNode;
  delta.data = delta.data.cwiseMax(-epsilon).cwiseMin(epsilon);
  return delta;
}

namespace {

void check_clean_image(const Tensor& clean) {
  if (clean.rank() != 3 || clean.shape[0] != 3)
    throw ShapeError("attack: clean image must be (3,H,W), got " + shape_str(clean.shape));
  if (clean.data.minCoeff() < -1e-9 || clean.data.maxCoeff() > 1.0 + 1e-9)
    throw DomainError("attack: clean image values outside [0,1]");
}

// keep both constraints exact: delta in the epsilon ball and clean+delta in [0,1]
void project_and_box(Tensor& delta, const Tensor& clean, double epsilon) {
  delta.data = delta.data.cwiseMax(-epsilon).cwiseMin(epsilon);
  delta.data = (clean.data + delta.data).cwiseMax(0.0).cwiseMin(1.0) - clean.data;
}

struct CheckOutcome {
  Prediction pred;
  double loss = 0.0;
};

CheckOutcome run_check(const LogitsFn& logits_fn, const Tensor& clean, const Tensor& delta,
                       std::size_t loss_class) {
  Tensor adv(clean.shape, (clean.data + delta.data).cwiseMax(0.0).cwiseMin(1.0));
  Tensor logits = logits_fn(nullptr, adv);
  Tensor probs = ops::softmax(nullptr, logits);
  CheckOutcome out;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs.at(i) > probs.at(out.pred.index)) out.pred.index = i;
  out.pred.confidence = probs.at(out.pred.index);
  out.loss = ops::cross_entropy(nullptr, logits, loss_class).value();
  return out;
}

AdversarialResult finalize(const Tensor& clean, const Tensor& best_delta) {
  AdversarialResult r;
  r.delta = best_delta;
  r.delta.node = kNoNode;
  r.adversarial_image =
      Tensor(clean.shape, (clean.data + best_delta.data).cwiseMax(0.0).cwiseMin(1.0));
  return r;
}

}  // namespace

AdversarialResult iterative_sign_attack(const LogitsFn& logits_fn, const Tensor& clean,
                                        std::size_t true_index,
                                        std::optional<std::size_t> target_index,
                                        const AttackConfig& config, bool random_start) {
  validate_attack_config(config);
  check_clean_image(clean);
  const bool targeted = config.mode == AttackMode::targeted;
  if (targeted) {
    if (!target_index) throw DomainError("attack: targeted mode needs a target category");
    if (*target_index == true_index)
      throw DomainError("attack: target category equals the true category");
  }
  const std::size_t loss_class = targeted ? *target_index : true_index;

  Tensor delta = Tensor::zeros(clean.shape);
  if (random_start) {
    Rng rng(config.seed);
    delta = Tensor::uniform(rng, clean.shape, -config.epsilon, config.epsilon);
  }
  project_and_box(delta, clean, config.epsilon);

  // targeted runs minimize the loss, untargeted runs maximize it
  const double sign = targeted ? -1.0 : 1.0;
  double best_obj = -std::numeric_limits<double>::infinity();
  Tensor best_delta = delta;
  std::vector<double> trace;

  auto consider = [&](double loss, const Tensor& d) {
    trace.push_back(loss);
    const double obj = sign * loss;
    if (obj > best_obj) {
      best_obj = obj;
      best_delta = d;
    }
  };

  bool success = false;
  double final_confidence = 0.0;
  int iters = 0;

  for (int t = 0; t < config.max_iters; ++t) {
    Tape tape;
    Tensor dl = tape.leaf(delta);
    Tensor adv = ops::clamp(&tape, ops::add(&tape, clean, dl), 0.0, 1.0);
    Tensor logits = logits_fn(&tape, adv);
    Tensor loss = ops::cross_entropy(&tape, logits, loss_class);
    consider(loss.value(), delta);

    const NodeId want[] = {dl.node};
    Tensor g = backward(tape, loss.node, want).at(dl.node);
    delta.data += sign * config.alpha * g.data.array().sign().matrix();
    project_and_box(delta, clean, config.epsilon);
    iters = t + 1;

    if ((t + 1) % config.check_every == 0) {
      CheckOutcome check = run_check(logits_fn, clean, delta, loss_class);
      const bool hit = targeted
                           ? (check.pred.index == *target_index &&
                              check.pred.confidence >= config.early_stop_confidence)
                           : (check.pred.index != true_index &&
                              check.pred.confidence >= config.early_stop_confidence);
      if (hit) {
        consider(check.loss, delta);
        success = true;
        final_confidence = check.pred.confidence;
        break;
      }
    }
  }

  if (!success) {
    CheckOutcome check = run_check(logits_fn, clean, delta, loss_class);
    consider(check.loss, delta);
    success = targeted ? (check.pred.index == *target_index &&
                          check.pred.confidence >= config.early_stop_confidence)
                       : (check.pred.index != true_index &&
                          check.pred.confidence >= config.early_stop_confidence);
    final_confidence = check.pred.confidence;
  }

  AdversarialResult r = finalize(clean, best_delta);
  r.iterations_used = iters;
  r.success = success;
  r.final_confidence = final_confidence;
  r.loss_trace = std::move(trace);
  return r;
}

namespace {

AdversarialResult scorer_attack(const Scorer& scorer, const Tensor& clean,
                                const std::string& command_category,
                                const std::string& true_category,
                                const std::optional<std::string>& target_category,
                                const AttackConfig& config, bool random_start) {
  const std::size_t true_idx = scorer.categories.index_of(true_category);
  scorer.categories.index_of(command_category);  // must be known
  std::optional<std::size_t> target_idx;
  if (config.mode == AttackMode::targeted) {
    const std::string& target = target_category ? *target_category : command_category;
    target_idx = scorer.categories.index_of(target);
  } else if (target_category) {
    target_idx = scorer.categories.index_of(*target_category);
  }
  LogitsFn fn = [&scorer](Tape* tape, const Tensor& image) {
    return score_all(tape, scorer, image);
  };
  return iterative_sign_attack(fn, clean, true_idx, target_idx, config, random_start);
}

}  // namespace

AdversarialResult bim_attack(const Scorer& scorer, const Tensor& clean_image,
                             const std::string& command_category,
                             const std::string& true_category,
                             const std::optional<std::string>& target_category,
                             const AttackConfig& config) {
  return scorer_attack(scorer, clean_image, command_category, true_category, target_category,
                       config, /*random_start=*/false);
}

AdversarialResult pgd_attack(const Scorer& scorer, const Tensor& clean_image,
                             const std::string& command_category,
                             const std::string& true_category,
                             const std::optional<std::string>& target_category,
                             const AttackConfig& config) {
  return scorer_attack(scorer, clean_image, command_category, true_category, target_category,
                       config, /*random_start=*/true);
}

AdversarialResult spectral_ensemble_attack(const ScorerEnsemble& ensemble,
                                           const Tensor& clean_image,
                                           const AttackConfig& config) {
  validate_attack_config(config);
  validate_ensemble(ensemble);
  check_clean_image(clean_image);

  // clean embeddings are fixed anchors
  std::vector<Tensor> anchors;
  for (const PatchEncoder& m : ensemble.members) {
    Tensor resized = ops::bilinear_resize(nullptr, clean_image, m.resolution, m.resolution);
    anchors.push_back(encode(nullptr, m, resized));
  }

  auto ensemble_distance = [&](Tape* tape, const Tensor& adv) {
    Tensor acc;
    for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
      const PatchEncoder& m = ensemble.members[i];
      Tensor resized = ops::bilinear_resize(tape, adv, m.resolution, m.resolution);
      Tensor z = encode(tape, m, resized);
      Tensor dist = ops::sub(tape, Tensor::scalar(1.0), ops::cosine_similarity(tape, z, anchors[i]));
      acc = i == 0 ? dist : ops::add(tape, acc, dist);
    }
    return ops::scalar_mul(tape, acc, 1.0 / static_cast<double>(ensemble.members.size()));
  };

  Tensor coeffs = Tensor::zeros(clean_image.shape);
  Tensor delta = Tensor::zeros(clean_image.shape);
  double best_obj = -std::numeric_limits<double>::infinity();
  Tensor best_delta = delta;
  std::vector<double> trace;
  Rng tie_break(config.seed);

  auto consider = [&](double dist, const Tensor& d) {
    trace.push_back(dist);
    if (dist > best_obj) {
      best_obj = dist;
      best_delta = d;
    }
  };

  for (int t = 0; t < config.max_iters; ++t) {
    Tape tape;
    Tensor dl = tape.leaf(delta);
    Tensor adv = ops::clamp(&tape, ops::add(&tape, clean_image, dl), 0.0, 1.0);
    Tensor loss = ensemble_distance(&tape, adv);
    consider(loss.value(), delta);

    const NodeId want[] = {dl.node};
    Tensor pixel_grad = backward(tape, loss.node, want).at(dl.node);
    Tensor coeff_grad = spectral_gradient(pixel_grad);
    if (coeff_grad.data.cwiseAbs().maxCoeff() == 0.0) {
      // the cosine distance is stationary at the clean image (z' == z);
      // break the dead start with a seeded sign draw
      for (Eigen::Index i = 0; i < coeff_grad.data.size(); ++i)
        coeff_grad.data[i] = tie_break.uniform() < 0.5 ? -1.0 : 1.0;
    }
    coeffs.data += config.alpha * coeff_grad.data.array().sign().matrix();

    delta = idct2_channels(coeffs);
    project_and_box(delta, clean_image, config.epsilon);
  }

  {  // score the final iterate so the trace covers every candidate
    Tensor adv(clean_image.shape,
               (clean_image.data + delta.data).cwiseMax(0.0).cwiseMin(1.0));
    consider(ensemble_distance(nullptr, adv).value(), delta);
  }

  AdversarialResult r = finalize(clean_image, best_delta);
  r.iterations_used = config.max_iters;
  r.success = false;  // judged by the caller against a held-out scorer
  r.final_confidence = 0.0;
  r.loss_trace = std::move(trace);
  return r;
}

}  // namespace redstore
