#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "profcct/profile.h"

namespace profcct {

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using QueryParams = std::multimap<std::string, std::string>;

// Loaded profiles keyed by handle ("0", "1", ...). Snapshots are immutable;
// adding a profile never disturbs requests already holding one.
class Session {
 public:
  explicit Session(std::filesystem::path workspace_root);

  std::string add(ProfileRef profile);
  ProfileRef find(std::string_view handle) const;
  std::vector<std::pair<std::string, ProfileRef>> list() const;
  const std::filesystem::path& workspace_root() const { return root_; }

 private:
  mutable std::mutex mu_;
  std::vector<ProfileRef> profiles_;
  std::filesystem::path root_;
};

// The JSON API, independent of any transport. Endpoints:
//   /api/profiles
//   /api/view?p=H&kind=K&metric=M&threshold=F&maxDepth=N&collapse=1&minWidth=F
//   /api/diff?p1=H&p2=H&metric=M&kind=K&normalize=1
//   /api/aggregate?p=H1,H2,...&metric=M&kind=K&missingAsZero=1
//   /api/node/{id}/histogram?agg=H1,H2,...&metric=M&kind=K
//   /api/node/{id}/hover?p=H
//   /api/correlate?p=H&anchor=ID&from=R&to=R&metric=M
//   /api/search?p=H&q=S&kind=K&metric=M
//   /api/rows?p=H&node=ID&kind=K&metric=M
//   /api/source?file=PATH&from=L1&to=L2   (text/plain)
// M is a metric name or index. Unknown handles, nodes and metrics give 404,
// malformed queries 400, source paths outside the workspace root 403.
class Api {
 public:
  explicit Api(std::shared_ptr<Session> session, std::size_t cache_entries = 32);

  ApiResponse get(std::string_view path, const QueryParams& params) const;

 private:
  ApiResponse dispatch(std::string_view path, const QueryParams& params) const;

  std::shared_ptr<Session> session_;
  std::size_t cache_entries_;
  mutable std::mutex cache_mu_;
  mutable std::map<std::string, ApiResponse> cache_;
};

struct ServerOptions {
  std::string bind = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path ui_dir;  // static assets served at "/", if present
};

// HTTP front end over Api.
class Server {
 public:
  Server(std::shared_ptr<Session> session, ServerOptions options);
  ~Server();

  // Binds and returns the port, or -1 when binding fails.
  int bind();
  // Serves until stop(); call after bind().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace profcct
