#include "redstore/server.hpp"

#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "redstore/image.hpp"

namespace redstore {

using nlohmann::json;

namespace {

void reply_error(httplib::Response& res, const std::string& message) {
  json body = {{"status", "error"}, {"error", message}};
  res.status = 400;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct StorefrontServer::Impl {
  Storefront& store;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit Impl(Storefront& s) : store(s) {}
};

StorefrontServer::StorefrontServer(Storefront& store, int port)
    : impl_(std::make_unique<Impl>(store)) {
  httplib::Server& srv = impl_->server;

  srv.Get("/catalog", [this](const httplib::Request&, httplib::Response& res) {
    json items = json::array();
    for (const auto& l : impl_->store.listings())
      items.push_back({{"id", l.id}, {"name", l.name}, {"price", l.price}});
    res.set_content(items.dump(), "application/json");
  });

  srv.Get("/screenshot", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(impl_->store.screenshot_ppm(), "image/x-portable-pixmap");
  });

  srv.Post("/action", [this](const httplib::Request& req, httplib::Response& res) {
    AgentAction action;
    try {
      action = parse_action(req.body);
    } catch (const ParseError& e) {
      reply_error(res, e.what());
      return;
    }
    const Storefront::ActionOutcome outcome = impl_->store.apply(action);
    if (!outcome.ok) {
      reply_error(res, outcome.error);
      return;
    }
    json body = {{"status", "ok"}};
    if (outcome.purchased_id) body["purchased_id"] = *outcome.purchased_id;
    res.set_content(body.dump(), "application/json");
  });

  srv.Post("/reset", [this](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t seed = 0;
    try {
      json body = json::parse(req.body);
      if (!body.is_object() || !body.contains("seed") || !body["seed"].is_number_unsigned())
        throw ParseError("reset: body must be {\"seed\": <non-negative integer>}");
      seed = body["seed"].get<std::uint64_t>();
    } catch (const json::parse_error&) {
      reply_error(res, "reset: invalid JSON body");
      return;
    } catch (const ParseError& e) {
      reply_error(res, e.what());
      return;
    }
    try {
      impl_->store.reset(seed);
    } catch (const DomainError& e) {
      reply_error(res, e.what());
      return;
    }
    res.set_content(json({{"status", "ok"}}).dump(), "application/json");
  });

  srv.Get("/state", [this](const httplib::Request&, httplib::Response& res) {
    const Storefront::State st = impl_->store.state();
    json body;
    body["purchased_id"] = st.purchased_id ? json(*st.purchased_id) : json(nullptr);
    body["steps"] = st.steps;
    res.set_content(body.dump(), "application/json");
  });

  if (port == 0) {
    impl_->port = srv.bind_to_any_port("127.0.0.1");
    if (impl_->port <= 0) throw TransportError("storefront: failed to bind a port");
  } else {
    if (!srv.bind_to_port("127.0.0.1", port))
      throw TransportError("storefront: failed to bind port " + std::to_string(port));
    impl_->port = port;
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  srv.wait_until_ready();
}

StorefrontServer::~StorefrontServer() { stop(); }

int StorefrontServer::port() const { return impl_->port; }

void StorefrontServer::stop() {
  if (impl_ && impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

// ---------------------------------------------------------------------------

struct StorefrontClient::Impl {
  httplib::Client client;
  PageLayout layout;

  Impl(const std::string& host, int port, PageLayout l) : client(host, port), layout(l) {
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(30, 0);
  }
};

StorefrontClient::StorefrontClient(const std::string& host, int port, PageLayout layout)
    : impl_(std::make_unique<Impl>(host, port, layout)) {}

StorefrontClient::~StorefrontClient() = default;
StorefrontClient::StorefrontClient(StorefrontClient&&) noexcept = default;
StorefrontClient& StorefrontClient::operator=(StorefrontClient&&) noexcept = default;

const PageLayout& StorefrontClient::layout() const { return impl_->layout; }

std::string StorefrontClient::screenshot_bytes() {
  auto res = impl_->client.Get("/screenshot");
  if (!res || res->status != 200)
    throw TransportError("storefront unreachable: GET /screenshot failed");
  return res->body;
}

Tensor StorefrontClient::screenshot() { return decode_ppm(screenshot_bytes()); }

std::vector<int> StorefrontClient::catalog_ids() {
  auto res = impl_->client.Get("/catalog");
  if (!res || res->status != 200)
    throw TransportError("storefront unreachable: GET /catalog failed");
  std::vector<int> ids;
  try {
    json items = json::parse(res->body);
    for (const auto& item : items) ids.push_back(item.at("id").get<int>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("catalog: malformed listing: ") + e.what());
  }
  return ids;
}

StorefrontClient::ActionReply StorefrontClient::post_action(const AgentAction& action) {
  auto res = impl_->client.Post("/action", serialize_action(action), "application/json");
  if (!res) throw TransportError("storefront unreachable: POST /action failed");
  ActionReply reply;
  try {
    json body = json::parse(res->body);
    reply.ok = body.value("status", "") == "ok";
    if (body.contains("purchased_id") && body["purchased_id"].is_number_integer())
      reply.purchased_id = body["purchased_id"].get<int>();
    reply.error = body.value("error", "");
  } catch (const json::exception& e) {
    throw ParseError(std::string("action reply: malformed JSON: ") + e.what());
  }
  return reply;
}

void StorefrontClient::reset(std::uint64_t seed) {
  json body = {{"seed", seed}};
  auto res = impl_->client.Post("/reset", body.dump(), "application/json");
  if (!res) throw TransportError("storefront unreachable: POST /reset failed");
  if (res->status != 200) throw DomainError("storefront rejected reset: " + res->body);
}

StorefrontClient::State StorefrontClient::state() {
  auto res = impl_->client.Get("/state");
  if (!res || res->status != 200)
    throw TransportError("storefront unreachable: GET /state failed");
  State st;
  try {
    json body = json::parse(res->body);
    if (body.contains("purchased_id") && !body["purchased_id"].is_null())
      st.purchased_id = body["purchased_id"].get<int>();
    st.steps = body.value("steps", 0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("state: malformed JSON: ") + e.what());
  }
  return st;
}

// ---------------------------------------------------------------------------

EpisodeOutcome run_episode(StorefrontClient& client, const std::string& command_category,
                           const Scorer& scorer, const Catalog& truth, int max_iters) {
  if (max_iters < 1) throw DomainError("run_episode: browsing budget must be at least 1");

  EpisodeOutcome outcome;
  outcome.command_category = command_category;

  for (int t = 1; t <= max_iters; ++t) {
    Tensor screenshot = client.screenshot();
    std::vector<int> ids = client.catalog_ids();
    AgentAction action = agent_step(screenshot, command_category, scorer, client.layout(), ids);

    if (action.action == AgentAction::Kind::done) {
      outcome.iterations_used = t;
      outcome.terminal_state = EpisodeOutcome::Terminal::budget_exhausted;
      return outcome;
    }
    StorefrontClient::ActionReply reply = client.post_action(action);
    if (!reply.ok) throw DomainError("storefront rejected action: " + reply.error);
    if (action.action == AgentAction::Kind::click) {
      outcome.iterations_used = t;
      outcome.terminal_state = EpisodeOutcome::Terminal::purchased;
      outcome.purchased_id = reply.purchased_id;
      if (reply.purchased_id) {
        const Product* p = truth.find(*reply.purchased_id);
        if (p) outcome.purchased_category = p->category;
      }
      return outcome;
    }
  }
  outcome.iterations_used = max_iters;
  outcome.terminal_state = EpisodeOutcome::Terminal::budget_exhausted;
  return outcome;
}

}  // namespace redstore
