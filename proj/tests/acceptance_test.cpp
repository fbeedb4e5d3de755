// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. Heavy fixtures (trained profiles, the surrogate ensemble) are built
// once and shared.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "redstore/cli.hpp"
#include "redstore/dct.hpp"
#include "redstore/experiment.hpp"
#include "redstore/image.hpp"
#include "redstore/server.hpp"
#include "redstore/train.hpp"
#include "redstore/weights_io.hpp"
#include "test_support.hpp"

using namespace redstore;
using redstore::testing::random_away_from_zero;
using redstore::testing::random_tensor;

namespace {

void report(int criterion, const char* name, bool pass) {
  std::printf("[acceptance %2d] %-28s %s\n", criterion, name, pass ? "PASS" : "FAIL");
  std::fflush(stdout);
}

const Scorer& standard_scorer() {
  static TrainedScorer t = train_surrogate(default_dataset_spec(), TrainConfig{}, 1);
  return t.scorer;
}

const Scorer& robust_scorer() {
  static TrainedScorer t =
      adversarial_train(default_dataset_spec(), TrainConfig{}, InnerAttack{}, 2);
  return t.scorer;
}

const ScorerEnsemble& surrogate_ensemble() {
  static ScorerEnsemble e = train_ensemble(default_dataset_spec(), 3);
  return e;
}

// small scorer for gradient checks; the full-size one would make finite
// differences needlessly slow
Scorer tiny_scorer(std::uint64_t seed) {
  Rng rng(seed);
  PatchEncoder enc = init_encoder(8, 4, 6, 12, rng);
  CategoryEmbeddings cats =
      make_category_embeddings(default_categories(), Tensor::normal(rng, {3, 6}, 1.0));
  return Scorer{enc, cats, 20.0};
}

ScorerEnsemble tiny_ensemble(std::uint64_t seed) {
  Rng rng(seed);
  ScorerEnsemble e;
  for (std::size_t i = 0; i < kEnsembleSize; ++i)
    e.members.push_back(init_encoder(kEnsembleResolution[i], kEnsemblePatch[i], 4, 8, rng));
  return e;
}

std::vector<TrialRecord> run_condition(const std::string& attack, const Scorer& target,
                                       const std::string& label, std::size_t trials,
                                       std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.profile = label;
  cfg.attack = attack;
  cfg.trials = trials;
  cfg.base_seed = seed;
  cfg.jobs = 2;
  return run_experiment(cfg, target, &surrogate_ensemble());
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("criterion 1: gradient fidelity") {
  Rng rng(11);
  const double tol = 1e-5;
  const int cases = 50;
  double worst = 0.0;
  auto track = [&](double err) {
    worst = std::max(worst, err);
    return err <= tol;
  };
  bool ok = true;

  using redstore::testing::probed;
  for (int i = 0; i < cases; ++i) {
    {  // add, sub, mul, scalar_mul
      Tensor b = random_tensor(rng, {3, 4});
      Tensor probe = random_tensor(rng, {3, 4});
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& x) { return ops::add(t, x, b); }, probe),
          random_tensor(rng, {3, 4}), 1e-5));
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& x) { return ops::sub(t, b, x); }, probe),
          random_tensor(rng, {3, 4}), 1e-5));
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& x) { return ops::mul(t, x, b); }, probe),
          random_tensor(rng, {3, 4}), 1e-5));
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& x) { return ops::scalar_mul(t, x, 1.7); }, probe),
          random_tensor(rng, {3, 4}), 1e-5));
    }
    {  // matmul (both operands), transpose, reshape
      Tensor b = random_tensor(rng, {4, 2});
      Tensor probe = random_tensor(rng, {3, 2});
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& x) { return ops::matmul(t, x, b); }, probe),
          random_tensor(rng, {3, 4}), 1e-5));
      Tensor a = random_tensor(rng, {3, 4});
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& x) { return ops::matmul(t, a, x); }, probe),
          random_tensor(rng, {4, 2}), 1e-5));
      ok &= track(finite_diff_check(
          probed([](Tape* t, const Tensor& x) { return ops::transpose(t, x); },
                 random_tensor(rng, {4, 3})),
          random_tensor(rng, {3, 4}), 1e-5));
      ok &= track(finite_diff_check(
          probed([](Tape* t, const Tensor& x) { return ops::reshape(t, x, {12}); },
                 random_tensor(rng, {12})),
          random_tensor(rng, {3, 4}), 1e-5));
    }
    {  // relu and clamp away from their kinks
      Tensor probe = random_tensor(rng, {3, 4});
      ok &= track(finite_diff_check(
          probed([](Tape* t, const Tensor& x) { return ops::relu(t, x); }, probe),
          random_away_from_zero(rng, {3, 4}), 1e-5));
      Tensor x = Tensor::zeros({3, 4});
      for (Eigen::Index j = 0; j < x.data.size(); ++j) {
        double v = rng.uniform(0.0, 1.0);
        while (std::abs(v - 0.3) < 0.02 || std::abs(v - 0.7) < 0.02) v = rng.uniform(0.0, 1.0);
        x.data[j] = v;
      }
      ok &= track(finite_diff_check(
          probed([](Tape* t, const Tensor& v) { return ops::clamp(t, v, 0.3, 0.7); }, probe),
          x, 1e-5));
    }
    {  // reductions and row ops
      ok &= track(finite_diff_check(
          probed([](Tape* t, const Tensor& x) { return ops::mean_pool(t, x, 1); },
                 random_tensor(rng, {2, 4})),
          random_tensor(rng, {2, 3, 4}), 1e-5));
      ok &= track(finite_diff_check([](Tape* t, const Tensor& x) { return ops::sum(t, x); },
                                    random_tensor(rng, {5}), 1e-5));
      Tensor bias = random_tensor(rng, {4});
      Tensor probe = random_tensor(rng, {3, 4});
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& x) { return ops::add_rows(t, x, bias); }, probe),
          random_tensor(rng, {3, 4}), 1e-5));
      Tensor a = random_tensor(rng, {3, 4});
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& b2) { return ops::add_rows(t, a, b2); }, probe),
          bias, 1e-5));
    }
    {  // layer_norm w.r.t. all three operands
      Tensor gamma = random_tensor(rng, {4}, 0.5, 1.5);
      Tensor beta = random_tensor(rng, {4}, -0.5, 0.5);
      Tensor probe = random_tensor(rng, {3, 4});
      Tensor x = random_tensor(rng, {3, 4});
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& v) { return ops::layer_norm(t, v, gamma, beta); },
                 probe),
          x, 1e-5));
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& g) { return ops::layer_norm(t, x, g, beta); },
                 probe),
          gamma, 1e-5));
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& b2) { return ops::layer_norm(t, x, gamma, b2); },
                 probe),
          beta, 1e-5));
    }
    {  // softmax, cross entropies, l2 normalize, cosine
      Tensor probe = random_tensor(rng, {2, 5});
      ok &= track(finite_diff_check(
          probed([](Tape* t, const Tensor& x) { return ops::softmax(t, x); }, probe),
          random_tensor(rng, {2, 5}, -2, 2), 1e-5));
      ok &= track(finite_diff_check(
          [](Tape* t, const Tensor& x) { return ops::cross_entropy(t, x, 2); },
          random_tensor(rng, {5}, -2, 2), 1e-5));
      std::vector<std::size_t> cls = {1, 3};
      ok &= track(finite_diff_check(
          probed([&](Tape* t, const Tensor& x) { return ops::cross_entropy_rows(t, x, cls); },
                 random_tensor(rng, {2})),
          random_tensor(rng, {2, 5}, -2, 2), 1e-5));
      ok &= track(finite_diff_check(
          probed([](Tape* t, const Tensor& x) { return ops::l2_normalize(t, x); }, probe),
          random_away_from_zero(rng, {2, 5}), 1e-5));
      Tensor v = random_away_from_zero(rng, {5});
      ok &= track(finite_diff_check(
          [&](Tape* t, const Tensor& u) { return ops::cosine_similarity(t, u, v); },
          random_away_from_zero(rng, {5}), 1e-5));
    }
    {  // patchify, bilinear
      ok &= track(finite_diff_check(
          probed([](Tape* t, const Tensor& x) { return ops::patchify(t, x, 2); },
                 random_tensor(rng, {4, 12})),
          random_tensor(rng, {3, 4, 4}), 1e-5));
      ok &= track(finite_diff_check(
          probed([](Tape* t, const Tensor& x) { return ops::bilinear_resize(t, x, 6, 5); },
                 random_tensor(rng, {3, 6, 5})),
          random_tensor(rng, {3, 4, 4}), 1e-5));
    }
  }

  // the BIM/PGD loss: cross-entropy of scorer logits through clamp + resize
  Scorer tiny = tiny_scorer(21);
  auto bim_loss = [&](Tape* t, const Tensor& x) {
    Tensor adv = ops::clamp(t, x, 0.0, 1.0);
    Tensor logits = score_all(t, tiny, adv);
    return ops::cross_entropy(t, logits, 1);
  };
  for (int i = 0; i < cases; ++i)
    ok &= track(finite_diff_check(bim_loss, random_tensor(rng, {3, 6, 6}, 0.05, 0.95), 1e-5));

  // the spectral loss: ensemble-mean cosine distance at the real member dims
  ScorerEnsemble tiny_e = tiny_ensemble(22);
  Tensor anchor_img = random_tensor(rng, {3, 6, 6}, 0.0, 1.0);
  std::vector<Tensor> anchors;
  for (const auto& m : tiny_e.members)
    anchors.push_back(encode(
        nullptr, m, ops::bilinear_resize(nullptr, anchor_img, m.resolution, m.resolution)));
  auto spectral_loss = [&](Tape* t, const Tensor& x) {
    Tensor adv = ops::clamp(t, x, 0.0, 1.0);
    Tensor acc;
    for (std::size_t i = 0; i < tiny_e.members.size(); ++i) {
      const auto& m = tiny_e.members[i];
      Tensor z = encode(t, m, ops::bilinear_resize(t, adv, m.resolution, m.resolution));
      Tensor d = ops::sub(t, Tensor::scalar(1.0), ops::cosine_similarity(t, z, anchors[i]));
      acc = i == 0 ? d : ops::add(t, acc, d);
    }
    return ops::scalar_mul(t, acc, 0.25);
  };
  for (int i = 0; i < cases; ++i)
    ok &= track(
        finite_diff_check(spectral_loss, random_tensor(rng, {3, 6, 6}, 0.05, 0.95), 1e-5));

  std::printf("         worst relative error %.3g\n", worst);
  report(1, "gradient fidelity", ok);
  CHECK(ok);
}

TEST_CASE("criterion 2: DCT correctness") {
  Rng rng(31);
  bool ok = true;
  const double tol = 1e-9;
  const double pi = 3.14159265358979323846;

  auto direct_dct2 = [&](const Tensor& x) {
    const std::size_t h = x.shape[0], w = x.shape[1];
    Tensor out = Tensor::zeros({h, w});
    for (std::size_t j1 = 0; j1 < h; ++j1)
      for (std::size_t j2 = 0; j2 < w; ++j2) {
        double acc = 0.0;
        for (std::size_t k1 = 0; k1 < h; ++k1)
          for (std::size_t k2 = 0; k2 < w; ++k2)
            acc += x.at(k1, k2) * std::cos(pi * (2.0 * k1 + 1.0) * j1 / (2.0 * h)) *
                   std::cos(pi * (2.0 * k2 + 1.0) * j2 / (2.0 * w));
        out.at(j1, j2) = (j1 == 0 ? std::sqrt(1.0 / h) : std::sqrt(2.0 / h)) *
                         (j2 == 0 ? std::sqrt(1.0 / w) : std::sqrt(2.0 / w)) * acc;
      }
    return out;
  };

  for (std::size_t n : {1, 2, 3, 5, 8, 12, 16, 24, 31, 32}) {
    Tensor x = random_tensor(rng, {n, n});
    Tensor y = dct2(x);
    ok &= std::abs(y.data.squaredNorm() - x.data.squaredNorm()) <= tol;           // Parseval
    ok &= (idct2(y).data - x.data).cwiseAbs().maxCoeff() <= tol;                  // round trip
    ok &= (y.data - direct_dct2(x).data).cwiseAbs().maxCoeff() <= tol;            // definition
    Tensor c = random_tensor(rng, {n, n});
    ok &= (dct2(idct2(c)).data - c.data).cwiseAbs().maxCoeff() <= tol;            // round trip
    Tensor g = random_tensor(rng, {n, n});
    ok &= std::abs(idct2(c).data.dot(g.data) - c.data.dot(dct2(g).data)) <= tol;  // adjoint
  }
  report(2, "DCT correctness", ok);
  CHECK(ok);
}

TEST_CASE("criterion 3: linear-model oracle") {
  Rng rng(41);
  bool ok = true;
  for (int rep = 0; rep < 3; ++rep) {
    Tensor w = Tensor::zeros({2, 192});
    for (std::size_t i = 0; i < 192; ++i) {
      w.at(0, i) = rng.uniform(-1.0, 1.0);
      w.at(1, i) = rng.uniform(-1.0, 1.0);
    }
    LogitsFn fn = [&w](Tape* tape, const Tensor& image) {
      Tensor flat = ops::reshape(tape, image, {image.size(), 1});
      return ops::reshape(tape, ops::matmul(tape, w, flat), {2});
    };
    Tensor clean = Tensor::constant({3, 8, 8}, 0.5);

    AttackConfig cfg;  // epsilon 16/255, alpha 1/255 as stated
    cfg.mode = AttackMode::untargeted;
    cfg.max_iters = 40;
    cfg.check_every = 1000;
    AdversarialResult bim = iterative_sign_attack(fn, clean, 0, std::nullopt, cfg, false);
    cfg.seed = 1234 + static_cast<std::uint64_t>(rep);
    AdversarialResult pgd = iterative_sign_attack(fn, clean, 0, std::nullopt, cfg, true);

    for (std::size_t i = 0; i < 192; ++i) {
      const double diff = w.at(1, i) - w.at(0, i);
      if (diff == 0.0) continue;
      const double expect = (diff > 0 ? 1.0 : -1.0) * (16.0 / 255.0);
      ok &= std::abs(bim.delta.data[static_cast<Eigen::Index>(i)] - expect) <= 1e-12;
      ok &= std::abs(pgd.delta.data[static_cast<Eigen::Index>(i)] - expect) <= 1e-12;
    }
  }
  report(3, "linear-model oracle", ok);
  CHECK(ok);
}

TEST_CASE("criterion 4: budget invariants over 1000 randomized runs") {
  Scorer tiny = tiny_scorer(51);
  ScorerEnsemble tiny_e = tiny_ensemble(52);
  const double eps = 16.0 / 255.0;
  Rng rng(53);
  std::atomic<int> violations{0};
  std::atomic<std::size_t> next{0};

  struct Job {
    int kind;  // 0 bim, 1 pgd, 2 spectral
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < 400; ++i) jobs.push_back({0, rng.bits()});
  for (int i = 0; i < 400; ++i) jobs.push_back({1, rng.bits()});
  for (int i = 0; i < 200; ++i) jobs.push_back({2, rng.bits()});

  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      Rng local(jobs[j].seed);
      AttackConfig cfg;
      cfg.epsilon = eps;
      cfg.alpha = eps * local.uniform(0.02, 1.0);
      cfg.max_iters = 1 + static_cast<int>(local.index(jobs[j].kind == 2 ? 6 : 12));
      cfg.check_every = 1 + static_cast<int>(local.index(4));
      cfg.seed = local.bits();
      Tensor img = Tensor::uniform(local, {3, 16, 16}, 0.0, 1.0);
      AdversarialResult r;
      if (jobs[j].kind == 2) {
        cfg.mode = AttackMode::untargeted;
        r = spectral_ensemble_attack(tiny_e, img, cfg);
      } else {
        cfg.mode = local.uniform() < 0.5 ? AttackMode::targeted : AttackMode::untargeted;
        const std::string cmd = "pants";
        r = jobs[j].kind == 0 ? bim_attack(tiny, img, cmd, "sweater", cmd, cfg)
                              : pgd_attack(tiny, img, cmd, "sweater", cmd, cfg);
      }
      const bool bad = r.delta.data.cwiseAbs().maxCoeff() > eps + 1e-12 ||
                       r.adversarial_image.data.minCoeff() < 0.0 ||
                       r.adversarial_image.data.maxCoeff() > 1.0;
      if (bad) violations.fetch_add(1);
    }
  };
  std::thread t1(worker), t2(worker);
  t1.join();
  t2.join();

  report(4, "budget invariants (n=1000)", violations.load() == 0);
  CHECK(violations.load() == 0);
}

TEST_CASE("criterion 5: clean baseline analogue") {
  std::vector<TrialRecord> std_clean =
      run_condition("none", standard_scorer(), "standard", 200, 1001);
  std::vector<TrialRecord> rob_clean =
      run_condition("none", robust_scorer(), "robust", 200, 1002);
  const AsrRow s = compute_asr(std_clean);
  const AsrRow r = compute_asr(rob_clean);
  std::printf("         standard clean correct %.3f, robust clean correct %.3f\n",
              s.correct_rate, r.correct_rate);
  const bool ok = s.correct_rate >= 0.90 && r.correct_rate >= 0.90;
  report(5, "clean baseline >= 0.90", ok);
  CHECK(ok);
}

TEST_CASE("criterion 6: attack effectiveness vs the standard profile") {
  const AsrRow clean =
      compute_asr(run_condition("none", standard_scorer(), "standard", 200, 1001));
  bool ok = true;
  for (const std::string attack : {"bim", "pgd", "spectral"}) {
    const AsrRow row =
        compute_asr(run_condition(attack, standard_scorer(), "standard", 200, 2000));
    const bool asr_ok = row.asr >= 0.30;
    const bool ci_ok = row.wilson_high < clean.wilson_low;  // correct-rate CIs disjoint
    std::printf("         %-8s asr %.3f (clean CI low %.3f vs attacked CI high %.3f)\n",
                attack.c_str(), row.asr, clean.wilson_low, row.wilson_high);
    ok &= asr_ok && ci_ok;
  }
  report(6, "attack effectiveness >= 0.30", ok);
  CHECK(ok);
}

TEST_CASE("criterion 7: differential robustness at n=630") {
  bool ok = true;
  for (const std::string attack : {"bim", "pgd", "spectral"}) {
    const AsrRow s =
        compute_asr(run_condition(attack, standard_scorer(), "standard", 630, 3000));
    const AsrRow r = compute_asr(run_condition(attack, robust_scorer(), "robust", 630, 3001));
    // an ASR interval is the mirrored correct-rate interval; disjoint iff these are
    const bool separated = s.asr > r.asr && r.wilson_low > s.wilson_high;
    std::printf("         %-8s ASR standard %.3f [%.3f,%.3f] vs robust %.3f [%.3f,%.3f]\n",
                attack.c_str(), s.asr, 1.0 - s.wilson_high, 1.0 - s.wilson_low, r.asr,
                1.0 - r.wilson_high, 1.0 - r.wilson_low);
    ok &= separated;
  }
  report(7, "differential robustness", ok);
  CHECK(ok);
}

TEST_CASE("criterion 8: spectral transferability beats matched noise") {
  const std::size_t pairs = 200;
  const double eps = 16.0 / 255.0;
  std::atomic<std::size_t> next{0};
  std::vector<int> spectral_wrong(pairs), noise_wrong(pairs);

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pairs) return;
      const std::string category = default_categories()[i % 3];
      Tensor clean = generate_product_image(category, derive_seed(4000, i), 192);
      const std::size_t label = standard_scorer().categories.index_of(category);

      AttackConfig cfg;
      cfg.mode = AttackMode::untargeted;
      cfg.seed = derive_seed(4001, i);
      AdversarialResult adv = spectral_ensemble_attack(surrogate_ensemble(), clean, cfg);

      Rng nrng(derive_seed(4002, i));
      Tensor noise = Tensor::uniform(nrng, clean.shape, -eps, eps);
      Tensor noisy(clean.shape, (clean.data + noise.data).cwiseMax(0.0).cwiseMin(1.0));

      spectral_wrong[i] = predict(standard_scorer(), adv.adversarial_image).index != label;
      noise_wrong[i] = predict(standard_scorer(), noisy).index != label;
    }
  };
  std::thread t1(worker), t2(worker);
  t1.join();
  t2.join();

  std::size_t k_spectral = 0, k_noise = 0, spectral_total = 0, noise_total = 0;
  for (std::size_t i = 0; i < pairs; ++i) {
    spectral_total += spectral_wrong[i];
    noise_total += noise_wrong[i];
    if (spectral_wrong[i] && !noise_wrong[i]) ++k_spectral;
    if (!spectral_wrong[i] && noise_wrong[i]) ++k_noise;
  }
  const double p = sign_test_pvalue(k_spectral, k_spectral + k_noise);
  std::printf("         misclassified: spectral %zu/%zu, noise %zu/%zu, sign test p=%.3g\n",
              spectral_total, pairs, noise_total, pairs, p);
  const bool ok = spectral_total > noise_total && p < 0.01;
  report(8, "spectral transferability", ok);
  CHECK(ok);
}

TEST_CASE("criterion 9: Wilson cross-check") {
  const Interval ci = wilson_interval(568, 630, 0.95);
  bool ok = std::abs(ci.halfwidth() - 0.023) <= 0.001;  // 90.2 +- 2.3 within 0.1pp
  ok &= wilson_interval(0, 630, 0.95).low == 0.0;
  ok &= wilson_interval(630, 630, 0.95).high == 1.0;
  ok &= wilson_interval(0, 7, 0.95).low == 0.0;
  ok &= wilson_interval(7, 7, 0.95).high == 1.0;
  std::printf("         halfwidth %.4f (want 0.023 +- 0.001)\n", ci.halfwidth());
  report(9, "Wilson cross-check", ok);
  CHECK(ok);
}

TEST_CASE("criterion 10: CLI determinism") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "redstore_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto file = [&](const std::string& name) { return (dir / name).string(); };
  bool ok = true;

  // train twice with one seed: byte-identical weights
  ok &= run_cli({"train", "--profile", "standard", "--out", file("standard.svlm"), "--seed",
                 "7", "--per-category", "60", "--epochs", "2"}) == 0;
  ok &= run_cli({"train", "--profile", "standard", "--out", file("w2.svlm"), "--seed", "7",
                 "--per-category", "60", "--epochs", "2"}) == 0;
  ok &= slurp(file("standard.svlm")) == slurp(file("w2.svlm"));

  // attack twice: byte-identical adversarial PPM
  write_ppm(file("clean.ppm"), generate_product_image("sweater", 5, 192));
  for (const char* out : {"a1.ppm", "a2.ppm"})
    ok &= run_cli({"attack", "--method", "pgd", "--in", file("clean.ppm"), "--out", file(out),
                   "--weights", file("standard.svlm"), "--target", "pants", "--true",
                   "sweater", "--iters", "20", "--seed", "13"}) == 0;
  ok &= slurp(file("a1.ppm")) == slurp(file("a2.ppm"));

  // run twice with one seed (different job counts): byte-identical CSV
  for (const char* out : {"r1.csv", "r2.csv"})
    ok &= run_cli({"run", "--profile", "standard", "--attack", "bim", "--trials", "4",
                   "--seed", "21", "--out", file(out), "--weights-dir", dir.string(), "--jobs",
                   out[1] == '1' ? "2" : "1"}) == 0;
  ok &= slurp(file("r1.csv")) == slurp(file("r2.csv"));

  // report twice: byte-identical
  for (const char* out : {"rep1.csv", "rep2.csv"})
    ok &=
        run_cli({"report", "--in", file("r1.csv"), "--format", "csv", "--out", file(out)}) == 0;
  ok &= slurp(file("rep1.csv")) == slurp(file("rep2.csv"));

  fs::remove_all(dir);
  report(10, "CLI determinism", ok);
  CHECK(ok);
}
