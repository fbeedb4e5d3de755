#include "redstore/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <thread>

#include "redstore/experiment.hpp"
#include "redstore/image.hpp"
#include "redstore/server.hpp"
#include "redstore/train.hpp"
#include "redstore/weights_io.hpp"

namespace redstore {

namespace {

// byte values follow the 16-means-16/255 convention; fractions pass through
double parse_budget(double v) { return v >= 1.0 ? v / 255.0 : v; }

struct TrainArgs {
  std::string profile;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<std::string> categories;
  int per_category = -1;
  int epochs = -1;
};

int cmd_train(const TrainArgs& a) {
  DatasetSpec spec = default_dataset_spec();
  if (!a.categories.empty()) spec.categories = a.categories;

  if (a.profile == "ensemble") {
    std::filesystem::create_directories(a.out);
    const std::size_t per = a.per_category >= 0 ? static_cast<std::size_t>(a.per_category) : 500;
    const std::size_t epochs = a.epochs >= 0 ? static_cast<std::size_t>(a.epochs) : 5;
    ScorerEnsemble ensemble = train_ensemble(spec, a.seed, per, epochs);
    save_ensemble(a.out, ensemble);
    std::cout << "trained 4 surrogate encoders -> " << a.out << "\n";
    return 0;
  }

  if (a.per_category >= 0) spec.per_category = static_cast<std::size_t>(a.per_category);
  TrainConfig cfg;
  if (a.epochs >= 0) cfg.epochs = static_cast<std::size_t>(a.epochs);

  TrainedScorer trained = a.profile == "robust"
                              ? adversarial_train(spec, cfg, InnerAttack{}, a.seed)
                              : train_surrogate(spec, cfg, a.seed);
  save_weights(a.out, trained.scorer);
  std::cout << "profile " << a.profile << ": ";
  if (!trained.report.epoch_loss.empty())
    std::cout << "loss " << trained.report.epoch_loss.front() << " -> "
              << trained.report.epoch_loss.back() << ", ";
  std::cout << "held-out accuracy " << trained.report.heldout_accuracy << " -> " << a.out
            << "\n";
  return 0;
}

struct AttackArgs {
  std::string method;
  std::string in;
  std::string out;
  std::string weights;
  double epsilon = 16.0 / 255.0;
  double alpha = 1.0 / 255.0;
  int iters = 100;
  std::string target;
  std::string true_category;
  double confidence = 0.95;
  int check_every = 5;
  std::uint64_t seed = 0;
};

int cmd_attack(const AttackArgs& a) {
  Tensor clean = read_ppm(a.in);
  AttackConfig cfg;
  cfg.epsilon = parse_budget(a.epsilon);
  cfg.alpha = parse_budget(a.alpha);
  cfg.max_iters = a.iters;
  cfg.early_stop_confidence = a.confidence;
  cfg.check_every = a.check_every;
  cfg.seed = a.seed;

  AdversarialResult result;
  if (a.method == "spectral") {
    if (!a.target.empty())
      throw DomainError("attack: the spectral method is untargeted; drop --target");
    cfg.mode = AttackMode::untargeted;
    ScorerEnsemble ensemble = load_ensemble(a.weights);
    result = spectral_ensemble_attack(ensemble, clean, cfg);
  } else {
    Scorer scorer = load_weights(a.weights);
    std::string true_cat = a.true_category;
    if (true_cat.empty())
      true_cat = scorer.categories.labels[predict(scorer, clean).index];
    cfg.mode = a.target.empty() ? AttackMode::untargeted : AttackMode::targeted;
    const std::optional<std::string> target =
        a.target.empty() ? std::nullopt : std::optional<std::string>(a.target);
    const std::string command = a.target.empty() ? true_cat : a.target;
    result = a.method == "bim"
                 ? bim_attack(scorer, clean, command, true_cat, target, cfg)
                 : pgd_attack(scorer, clean, command, true_cat, target, cfg);
  }

  write_ppm(a.out, result.adversarial_image);
  std::cout << a.method << ": iterations " << result.iterations_used << ", success "
            << (result.success ? "yes" : "no") << ", confidence " << result.final_confidence
            << ", objective " << result.loss_trace.front() << " -> "
            << result.loss_trace.back() << " -> " << a.out << "\n";
  return 0;
}

struct ServeArgs {
  int port = 8080;
  std::uint64_t seed = 0;
  std::vector<std::string> categories;
};

int cmd_serve(const ServeArgs& a) {
  std::vector<std::string> cats = a.categories.empty() ? default_categories() : a.categories;
  PageLayout layout;
  auto builder = [cats, layout](std::uint64_t seed) {
    return build_catalog(cats, layout.cell, seed);
  };
  Storefront store(builder(a.seed), layout, builder);
  StorefrontServer server(store, a.port);
  std::cout << "storefront listening on 127.0.0.1:" << server.port()
            << " (GET /catalog /screenshot /state, POST /action /reset)\n";
  for (;;) std::this_thread::sleep_for(std::chrono::seconds(60));
}

struct RunArgs {
  std::string profile = "standard";
  std::string attack = "none";
  std::size_t trials = 630;
  std::uint64_t seed = 0;
  std::string out;
  std::string weights_dir = "weights";
  double epsilon = 16.0 / 255.0;
  double alpha = 1.0 / 255.0;
  int jobs = 0;
};

int cmd_run(const RunArgs& a) {
  const std::string weights_path = a.weights_dir + "/" + a.profile + ".svlm";
  Scorer target = load_weights(weights_path);  // fails before any trial runs
  ScorerEnsemble ensemble;
  const ScorerEnsemble* ensemble_ptr = nullptr;
  if (a.attack == "spectral") {
    ensemble = load_ensemble(a.weights_dir);
    ensemble_ptr = &ensemble;
  }

  ExperimentConfig cfg;
  cfg.profile = a.profile;
  cfg.attack = a.attack;
  cfg.trials = a.trials;
  cfg.epsilon = parse_budget(a.epsilon);
  cfg.alpha = parse_budget(a.alpha);
  cfg.base_seed = a.seed;
  cfg.jobs = a.jobs;

  std::vector<TrialRecord> records = run_experiment(cfg, target, ensemble_ptr);
  write_trial_csv(a.out, records);
  const AsrRow row = compute_asr(records);
  std::cout << a.profile << "/" << a.attack << ": n=" << row.n << " correct "
            << format_percent(row.correct_rate) << "% (ASR " << format_percent(row.asr)
            << "%, CI " << format_percent(row.wilson_low) << "-"
            << format_percent(row.wilson_high) << "%, redirected "
            << format_percent(row.redirected_rate) << "%) -> " << a.out << "\n";
  return 0;
}

struct ReportArgs {
  std::string in;
  std::string format = "csv";
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  std::vector<TrialRecord> records = read_trial_csv(a.in);
  if (records.empty()) throw DomainError("no records in " + a.in);
  std::vector<AsrRow> rows = aggregate_report(records);
  emit_report(a.out, rows, a.format == "markdown" ? ReportFormat::markdown : ReportFormat::csv);
  std::cout << "report (" << a.format << ") -> " << a.out << "\n";
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"red-team toolkit: storefront, surrogate scorers, image-space attacks"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train scorer or surrogate-ensemble weights");
  train->add_option("--profile", train_args.profile, "standard | robust | ensemble")
      ->required()
      ->check(CLI::IsMember({"standard", "robust", "ensemble"}));
  train->add_option("--out", train_args.out, "weights file (directory for ensemble)")
      ->required();
  train->add_option("--seed", train_args.seed, "training seed");
  train->add_option("--categories", train_args.categories, "category labels")->delimiter(',');
  train->add_option("--per-category", train_args.per_category, "samples per category");
  train->add_option("--epochs", train_args.epochs, "training epochs");

  AttackArgs attack_args;
  CLI::App* attack = app.add_subcommand("attack", "craft an adversarial product image");
  attack->add_option("--method", attack_args.method, "bim | pgd | spectral")
      ->required()
      ->check(CLI::IsMember({"bim", "pgd", "spectral"}));
  attack->add_option("--in", attack_args.in, "clean image (PPM)")->required();
  attack->add_option("--out", attack_args.out, "adversarial image (PPM)")->required();
  attack->add_option("--weights", attack_args.weights,
                     "scorer weights file (ensemble directory for spectral)")
      ->required();
  attack->add_option("--epsilon", attack_args.epsilon, "budget; integers mean n/255");
  attack->add_option("--alpha", attack_args.alpha, "step size; integers mean n/255");
  attack->add_option("--iters", attack_args.iters, "iteration budget");
  attack->add_option("--target", attack_args.target, "target category (targeted mode)");
  attack->add_option("--true", attack_args.true_category,
                     "true category (default: scorer prediction)");
  attack->add_option("--confidence", attack_args.confidence, "early-stop confidence");
  attack->add_option("--check-every", attack_args.check_every, "iterations between checks");
  attack->add_option("--seed", attack_args.seed, "random-start seed");

  ServeArgs serve_args;
  CLI::App* serve = app.add_subcommand("serve", "serve a staged storefront over HTTP");
  serve->add_option("--port", serve_args.port, "port (default 8080)");
  serve->add_option("--seed", serve_args.seed, "catalog seed");
  serve->add_option("--categories", serve_args.categories, "category labels")->delimiter(',');

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "run red-team trials end to end");
  run->add_option("--profile", run_args.profile, "standard | robust")
      ->check(CLI::IsMember({"standard", "robust"}));
  run->add_option("--attack", run_args.attack, "none | bim | pgd | spectral")
      ->check(CLI::IsMember({"none", "bim", "pgd", "spectral"}));
  run->add_option("--trials", run_args.trials, "trial count (default 630)");
  run->add_option("--seed", run_args.seed, "base seed");
  run->add_option("--out", run_args.out, "trial records CSV")->required();
  run->add_option("--weights-dir", run_args.weights_dir, "weights directory");
  run->add_option("--epsilon", run_args.epsilon, "budget; integers mean n/255");
  run->add_option("--alpha", run_args.alpha, "step size; integers mean n/255");
  run->add_option("--jobs", run_args.jobs, "worker threads (0 = auto)");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "aggregate trial records into a report");
  report->add_option("--in", report_args.in, "trial records CSV")->required();
  report->add_option("--format", report_args.format, "csv | markdown")
      ->check(CLI::IsMember({"csv", "markdown"}));
  report->add_option("--out", report_args.out, "report file")->required();

  int code = 0;
  train->callback([&] { code = cmd_train(train_args); });
  attack->callback([&] { code = cmd_attack(attack_args); });
  serve->callback([&] { code = cmd_serve(serve_args); });
  run->callback([&] { code = cmd_run(run_args); });
  report->callback([&] { code = cmd_report(report_args); });

  try {
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return code;
}

}  // namespace redstore
