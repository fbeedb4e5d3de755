#pragma once

#include <memory>
#include <string>

#include "redstore/agent.hpp"
#include "redstore/storefront.hpp"

namespace redstore {

// HTTP/1.1 face of a storefront:
//   GET  /catalog     -> [{"id":..,"name":..,"price":..}, ...]
//   GET  /screenshot  -> binary PPM (P6) bytes
//   POST /action      -> {"status":"ok","purchased_id":k} for clicks
//   POST /reset       -> {"status":"ok"}   (body {"seed": s})
//   GET  /state       -> {"purchased_id": k|null, "steps": n}
// Malformed requests get a 400 with {"status":"error","error": "..."}.
class StorefrontServer {
 public:
  // port 0 binds an OS-assigned loopback port
  explicit StorefrontServer(Storefront& store, int port = 0);
  ~StorefrontServer();

  StorefrontServer(const StorefrontServer&) = delete;
  StorefrontServer& operator=(const StorefrontServer&) = delete;

  int port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class StorefrontClient {
 public:
  StorefrontClient(const std::string& host, int port, PageLayout layout);
  ~StorefrontClient();

  StorefrontClient(StorefrontClient&&) noexcept;
  StorefrontClient& operator=(StorefrontClient&&) noexcept;

  const PageLayout& layout() const;

  Tensor screenshot();            // decoded PPM
  std::string screenshot_bytes();  // raw wire bytes
  std::vector<int> catalog_ids();

  struct ActionReply {
    bool ok = false;
    std::optional<int> purchased_id;
    std::string error;
  };
  ActionReply post_action(const AgentAction& action);
  void reset(std::uint64_t seed);

  struct State {
    std::optional<int> purchased_id;
    int steps = 0;
  };
  State state();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Perceive->decide->act loop against a live storefront. A click purchases
// and terminates; otherwise the loop runs until the browsing budget is
// exhausted. Ground-truth categories come from the experimenter's catalog.
EpisodeOutcome run_episode(StorefrontClient& client, const std::string& command_category,
                           const Scorer& scorer, const Catalog& truth, int max_iters = 10);

}  // namespace redstore
