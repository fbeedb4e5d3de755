#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "redstore/attacks.hpp"
#include "redstore/stats.hpp"

namespace redstore {

struct ExperimentConfig {
  std::string profile = "standard";  // model profile label
  std::string attack = "none";       // none | bim | pgd | spectral
  std::size_t trials = 630;
  double epsilon = 16.0 / 255.0;
  double alpha = 1.0 / 255.0;
  std::uint64_t base_seed = 0;
  int jobs = 0;  // 0 = hardware concurrency
};

struct TrialRecord {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string model;
  std::string attack;
  std::string command_category;
  std::string true_category;    // the adversarial product's real category
  std::string target_category;  // targeted attacks only
  std::string terminal_state;   // purchased | budget_exhausted
  std::optional<int> purchased_id;
  std::string purchased_category;
  bool correct = false;
  bool redirected_to_adversarial = false;
  int attack_iterations = 0;
};

// Per trial: derive the trial seed, build a randomized catalog, craft the
// attack image offline against the product in the adversarial slot, inject
// it, then run one episode against a live loopback storefront. Trials are
// independent and run on `jobs` worker threads; records come back in trial
// order regardless of scheduling.
std::vector<TrialRecord> run_experiment(const ExperimentConfig& config, const Scorer& target,
                                        const ScorerEnsemble* ensemble);

void write_trial_csv(const std::string& path, std::span<const TrialRecord> records);
std::vector<TrialRecord> read_trial_csv(const std::string& path);

struct AsrRow {
  std::string model;
  std::string attack;
  std::size_t n = 0;
  double correct_rate = 0.0;
  double asr = 0.0;  // 1 - correct_rate, exactly
  double wilson_low = 0.0;
  double wilson_high = 0.0;
  double redirected_rate = 0.0;
};

// Records must share one (model, attack) condition.
AsrRow compute_asr(std::span<const TrialRecord> records);

// Groups mixed records by condition, in (model, canonical-attack) order.
std::vector<AsrRow> aggregate_report(std::span<const TrialRecord> records);

enum class ReportFormat { csv, markdown };

// CSV columns: model,attack,n,correct_rate,asr,ci_low,ci_high,redirected_rate
// with rates as percentages at one decimal. Markdown renders a methods-by-
// models grid of "correct ± halfwidth (ASR x)" cells.
void emit_report(const std::string& path, std::span<const AsrRow> rows, ReportFormat format);

// percentage with one decimal, halves away from zero (0.9016 -> "90.2")
std::string format_percent(double rate);

}  // namespace redstore
