#include "redstore/agent.hpp"

#include <json.hpp>

#include "redstore/storefront.hpp"

namespace redstore {

using nlohmann::json;

std::string serialize_action(const AgentAction& action) {
  json j;
  switch (action.action) {
    case AgentAction::Kind::click: j["action"] = "click"; break;
    case AgentAction::Kind::navigate: j["action"] = "navigate"; break;
    case AgentAction::Kind::done: j["action"] = "done"; break;
  }
  if (action.action == AgentAction::Kind::click) {
    if (!action.item_id) throw DomainError("action: click without item_id");
    j["item_id"] = *action.item_id;
  }
  j["reasoning"] = action.reasoning;
  return j.dump();
}

AgentAction parse_action(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("action: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("action: not a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "action" && key != "item_id" && key != "reasoning")
      throw ParseError("action: unexpected key \"" + key + "\"");
  }
  if (!j.contains("action") || !j["action"].is_string())
    throw ParseError("action: missing string \"action\"");
  if (!j.contains("reasoning") || !j["reasoning"].is_string())
    throw ParseError("action: missing string \"reasoning\"");

  AgentAction out;
  const std::string kind = j["action"].get<std::string>();
  if (kind == "click")
    out.action = AgentAction::Kind::click;
  else if (kind == "navigate")
    out.action = AgentAction::Kind::navigate;
  else if (kind == "done")
    out.action = AgentAction::Kind::done;
  else
    throw ParseError("action: unknown action \"" + kind + "\"");

  if (out.action == AgentAction::Kind::click) {
    if (!j.contains("item_id") || !j["item_id"].is_number_integer())
      throw ParseError("action: click needs integer \"item_id\"");
    out.item_id = j["item_id"].get<int>();
  } else if (j.contains("item_id")) {
    throw ParseError("action: item_id only belongs to click actions");
  }
  out.reasoning = j["reasoning"].get<std::string>();
  return out;
}

AgentAction agent_step(const Tensor& screenshot, const std::string& command_category,
                       const Scorer& scorer, const PageLayout& layout,
                       std::span<const int> item_ids) {
  if (item_ids.empty()) {
    AgentAction done;
    done.action = AgentAction::Kind::done;
    done.reasoning = "no products listed";
    return done;
  }
  const std::string cats[] = {command_category};
  int best_id = item_ids[0];
  double best_logit = 0.0;
  bool first = true;
  for (int id : item_ids) {
    Tensor crop = crop_cell(screenshot, layout, id);
    const double logit = score_categories(nullptr, scorer, crop, cats).value();
    if (first || logit > best_logit) {
      best_logit = logit;
      best_id = id;
      first = false;
    }
  }
  AgentAction act;
  act.action = AgentAction::Kind::click;
  act.item_id = best_id;
  act.reasoning = "product " + std::to_string(best_id) + " matches because it is a " +
                  command_category;
  return act;
}

}  // namespace redstore
