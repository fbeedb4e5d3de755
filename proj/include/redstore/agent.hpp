#pragma once

#include <optional>
#include <span>
#include <string>

#include "redstore/encoder.hpp"
#include "redstore/tensor.hpp"

namespace redstore {

struct PageLayout;

// Structured action the agent emits after perceiving a screenshot.
// Wire form is a single flat JSON object with exactly the keys
// action, item_id (click only) and reasoning.
struct AgentAction {
  enum class Kind { click, navigate, done };
  Kind action = Kind::done;
  std::optional<int> item_id;  // present iff action == click
  std::string reasoning;
};

std::string serialize_action(const AgentAction& action);
// Strict: unknown action words, missing/extra keys or a non-integer item_id
// are rejected with ParseError, never defaulted.
AgentAction parse_action(const std::string& text);

// One perceive->decide step: crops every listed cell, scores the command
// category, clicks the argmax slot (lowest id wins ties). No listed items
// yields a `done` action.
AgentAction agent_step(const Tensor& screenshot, const std::string& command_category,
                       const Scorer& scorer, const PageLayout& layout,
                       std::span<const int> item_ids);

struct EpisodeOutcome {
  std::string command_category;
  std::optional<int> purchased_id;
  std::string purchased_category;  // set iff a purchase happened
  int iterations_used = 0;
  enum class Terminal { purchased, budget_exhausted } terminal_state = Terminal::budget_exhausted;
};

}  // namespace redstore
