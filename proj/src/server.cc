#include "profcct/server.h"

#include <charconv>
#include <fstream>
#include <optional>
#include <regex>

#include <httplib.h>
#include <json.hpp>

#include "profcct/derived.h"
#include "profcct/error.h"
#include "profcct/io.h"
#include "profcct/layout.h"
#include "profcct/multi_profile.h"
#include "profcct/view.h"

namespace profcct {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string message;
};

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUnknownMetric:
    case ErrorKind::kUnknownPath:
    case ErrorKind::kIo:
      return 404;
    default:
      return 400;
  }
}

ApiResponse json_response(int status, const json& body) {
  ApiResponse r;
  r.status = status;
  r.body = body.dump();
  r.body += '\n';
  return r;
}

ApiResponse error_response(int status, const std::string& message) {
  return json_response(status, json{{"error", message}, {"status", status}});
}

std::optional<std::string> param(const QueryParams& params, const std::string& key) {
  auto it = params.find(key);
  if (it == params.end()) return std::nullopt;
  return it->second;
}

std::string required(const QueryParams& params, const std::string& key) {
  auto v = param(params, key);
  if (!v || v->empty()) throw HttpError{400, "missing query parameter '" + key + "'"};
  return *v;
}

std::optional<std::uint64_t> parse_uint(std::string_view text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return v;
}

std::uint64_t uint_param(const QueryParams& params, const std::string& key) {
  auto text = required(params, key);
  auto v = parse_uint(text);
  if (!v) throw HttpError{400, "parameter '" + key + "' must be a non-negative integer"};
  return *v;
}

std::optional<double> double_param(const QueryParams& params, const std::string& key) {
  auto text = param(params, key);
  if (!text || text->empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(text->data(), text->data() + text->size(), v);
  if (ec != std::errc() || ptr != text->data() + text->size()) {
    throw HttpError{400, "parameter '" + key + "' must be a number"};
  }
  return v;
}

bool flag_param(const QueryParams& params, const std::string& key) {
  auto v = param(params, key);
  return v && (*v == "1" || *v == "true" || *v == "yes");
}

ViewKind kind_param(const QueryParams& params) {
  auto text = param(params, "kind");
  if (!text || text->empty()) return ViewKind::kTopDown;
  auto k = parse_view_kind(*text);
  if (!k) throw HttpError{400, "unknown view kind '" + *text + "'"};
  return *k;
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto comma = text.find(',', start);
    out.push_back(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Metric by name or index; the first additive metric when absent.
std::string metric_param(const QueryParams& params, const Profile& p, const char* key = "metric") {
  auto text = param(params, key);
  if (!text || text->empty()) return p.metrics()[default_metric(p)].name;
  if (p.find_metric(*text)) return *text;
  if (auto index = parse_uint(*text); index && *index < p.metrics().size()) {
    return p.metrics()[*index].name;
  }
  throw HttpError{404, "unknown metric '" + *text + "'"};
}

json frame_json(const Profile& p, NodeId node) {
  const Frame& f = p.frame_of(node);
  return json{{"address", f.address}, {"file", f.file_path},      {"function", display_name(f)},
              {"line", f.line},       {"module", f.module_name}};
}

json path_json(const Profile& p, NodeId node) {
  json out = json::array();
  for (auto f : p.path(node)) out.push_back(display_name(p.frame(f)));
  return out;
}

}  // namespace

Session::Session(fs::path workspace_root) : root_(std::move(workspace_root)) {}

std::string Session::add(ProfileRef profile) {
  std::lock_guard lock(mu_);
  profiles_.push_back(std::move(profile));
  return std::to_string(profiles_.size() - 1);
}

ProfileRef Session::find(std::string_view handle) const {
  auto index = parse_uint(handle);
  std::lock_guard lock(mu_);
  if (!index || *index >= profiles_.size()) return nullptr;
  return profiles_[*index];
}

std::vector<std::pair<std::string, ProfileRef>> Session::list() const {
  std::lock_guard lock(mu_);
  std::vector<std::pair<std::string, ProfileRef>> out;
  for (std::size_t i = 0; i < profiles_.size(); ++i) out.emplace_back(std::to_string(i), profiles_[i]);
  return out;
}

Api::Api(std::shared_ptr<Session> session, std::size_t cache_entries)
    : session_(std::move(session)), cache_entries_(cache_entries) {}

ApiResponse Api::get(std::string_view path, const QueryParams& params) const {
  std::string key(path);
  key += '?';
  for (const auto& [k, v] : params) {
    key += k;
    key += '=';
    key += v;
    key += '&';
  }
  const bool cacheable = path != "/api/profiles" && path != "/api/source";
  if (cacheable) {
    std::lock_guard lock(cache_mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }

  ApiResponse response;
  try {
    response = dispatch(path, params);
  } catch (const HttpError& e) {
    response = error_response(e.status, e.message);
  } catch (const Error& e) {
    response = error_response(status_for(e.kind()),
                              std::string(error_kind_name(e.kind())) + ": " + e.what());
  } catch (const std::exception& e) {
    response = error_response(500, e.what());
  }

  if (cacheable && response.status == 200 && cache_entries_ > 0) {
    std::lock_guard lock(cache_mu_);
    if (cache_.size() >= cache_entries_) cache_.clear();
    cache_.emplace(std::move(key), response);
  }
  return response;
}

ApiResponse Api::dispatch(std::string_view path, const QueryParams& params) const {
  auto profile_param = [&](const std::string& key) {
    auto handle = required(params, key);
    auto p = session_->find(handle);
    if (!p) throw HttpError{404, "unknown profile handle '" + handle + "'"};
    return p;
  };
  auto profile_list = [&](const std::string& key) {
    std::vector<ProfileRef> out;
    for (const auto& h : split_commas(required(params, key))) {
      auto p = session_->find(h);
      if (!p) throw HttpError{404, "unknown profile handle '" + h + "'"};
      out.push_back(std::move(p));
    }
    return out;
  };

  if (path == "/api/profiles") {
    json list = json::array();
    for (const auto& [handle, p] : session_->list()) {
      json metrics = json::array();
      for (std::size_t m = 0; m < p->metrics().size(); ++m) {
        const auto& d = p->metrics()[m];
        json entry{{"aggregator", to_string(d.aggregator)},
                   {"kind", to_string(d.kind)},
                   {"name", d.name},
                   {"unit", d.unit}};
        if (d.kind == MetricKind::kDerived) {
          entry["total"] = nullptr;
        } else {
          entry["total"] = total(*p, m);
        }
        metrics.push_back(std::move(entry));
      }
      list.push_back(json{{"collector", p->meta().collector},
                          {"handle", handle},
                          {"metrics", std::move(metrics)},
                          {"name", p->meta().name},
                          {"nodes", p->node_count()},
                          {"properties", p->meta().properties},
                          {"roles", roles(*p)},
                          {"timestamp", p->meta().timestamp}});
    }
    return json_response(200, json{{"profiles", std::move(list)}});
  }

  if (path == "/api/view") {
    auto p = profile_param("p");
    ViewTree view = compute_view(*p, metric_param(params, *p), kind_param(params));
    if (flag_param(params, "collapse")) view = collapse_recursion(view);
    if (param(params, "maxDepth")) view = truncate_depth(view, uint_param(params, "maxDepth"));
    if (auto t = double_param(params, "threshold")) view = prune(view, *t);
    ExportOptions options;
    options.profile = p.get();
    if (auto w = double_param(params, "minWidth")) options.layout.min_width = *w;
    return ApiResponse{200, "application/json", export_view(view, options)};
  }

  if (path == "/api/diff") {
    auto p1 = profile_param("p1");
    auto p2 = profile_param("p2");
    auto metric = metric_param(params, *p1);
    DiffOptions options;
    options.kind = kind_param(params);
    options.normalize_by_total = flag_param(params, "normalize");
    ExportOptions eo;
    if (auto w = double_param(params, "minWidth")) eo.layout.min_width = *w;
    return ApiResponse{200, "application/json", export_diff(diff(*p1, *p2, metric, options), eo)};
  }

  if (path == "/api/aggregate") {
    auto list = profile_list("p");
    std::vector<const Profile*> ptrs;
    for (const auto& p : list) ptrs.push_back(p.get());
    AggregateOptions options;
    options.kind = kind_param(params);
    options.missing_as_zero = flag_param(params, "missingAsZero");
    ExportOptions eo;
    if (auto w = double_param(params, "minWidth")) eo.layout.min_width = *w;
    auto metric = metric_param(params, *list.front());
    return ApiResponse{200, "application/json",
                       export_aggregate(aggregate(ptrs, metric, options), eo)};
  }

  static const std::regex node_route(R"(/api/node/([0-9]+)/(histogram|hover))");
  std::string path_text(path);
  std::smatch match;
  if (std::regex_match(path_text, match, node_route)) {
    auto id = parse_uint(match[1].str());
    if (!id) throw HttpError{404, "unknown node"};
    if (match[2] == "histogram") {
      auto list = profile_list("agg");
      std::vector<const Profile*> ptrs;
      for (const auto& p : list) ptrs.push_back(p.get());
      AggregateOptions options;
      options.kind = kind_param(params);
      options.missing_as_zero = flag_param(params, "missingAsZero");
      auto tree = aggregate(ptrs, metric_param(params, *list.front()), options);
      if (*id >= tree.nodes.size()) throw HttpError{404, "unknown node " + match[1].str()};
      auto node = static_cast<std::uint32_t>(*id);
      json values = json::array();
      for (const auto& v : histogram(tree, node)) values.push_back(v ? json(*v) : json(nullptr));
      return json_response(200, json{{"inputs", tree.inputs},
                                     {"label", tree.label(node)},
                                     {"metric", tree.metric},
                                     {"node", node},
                                     {"path", tree.path_labels(node)},
                                     {"values", std::move(values)}});
    }

    auto p = profile_param("p");
    if (*id >= p->node_count()) throw HttpError{404, "unknown node " + match[1].str()};
    auto node = static_cast<NodeId>(*id);

    // Per metric: the node's own inclusive/exclusive values, and the same
    // for every context attributed to the node's source line.
    const Frame& frame = p->frame_of(node);
    const bool has_line = node != p->root() && !frame.file_path.empty() && frame.line != 0;
    std::vector<bool> on_line(p->node_count(), false);
    json line_nodes = json::array();
    if (has_line) {
      for (NodeId n = 1; n < p->node_count(); ++n) {
        const Frame& f = p->frame_of(n);
        if (f.line == frame.line && f.file_path == frame.file_path) {
          on_line[n] = true;
          line_nodes.push_back(n);
        }
      }
    }
    json metrics = json::array();
    json line_metrics = json::array();
    for (std::size_t m = 0; m < p->metrics().size(); ++m) {
      const auto& d = p->metrics()[m];
      json entry{{"kind", to_string(d.kind)}, {"name", d.name}, {"unit", d.unit}};
      json line_entry{{"name", d.name}};
      if (d.kind == MetricKind::kDerived) {
        auto v = p->real(node, m);
        entry["value"] = v ? json(*v) : json(nullptr);
      } else if (d.kind == MetricKind::kSnapshot) {
        auto v = p->count(node, m);
        entry["value"] = v ? json(*v) : json(nullptr);
        std::uint64_t sum = 0;
        for (NodeId n = 1; n < p->node_count(); ++n) {
          if (on_line[n]) sum += p->count(n, m).value_or(0);
        }
        line_entry["value"] = sum;
      } else {
        std::vector<std::uint64_t> incl(p->node_count());
        for (NodeId n = 0; n < p->node_count(); ++n) incl[n] = p->count(n, m).value_or(0);
        for (NodeId n = static_cast<NodeId>(p->node_count()); n-- > 1;) {
          incl[p->node(n).parent] += incl[n];
        }
        entry["exclusive"] = p->count(node, m).value_or(0);
        entry["inclusive"] = incl[node];
        std::uint64_t line_excl = 0, line_incl = 0;
        // Outermost occurrences only, so nested calls are not counted twice.
        for (NodeId n = 1; n < p->node_count(); ++n) {
          if (!on_line[n]) continue;
          line_excl += p->count(n, m).value_or(0);
          bool outermost = true;
          for (NodeId a = p->node(n).parent; a != p->root(); a = p->node(a).parent) {
            if (on_line[a]) {
              outermost = false;
              break;
            }
          }
          if (outermost) line_incl += incl[n];
        }
        line_entry["exclusive"] = line_excl;
        line_entry["inclusive"] = line_incl;
      }
      metrics.push_back(std::move(entry));
      line_metrics.push_back(std::move(line_entry));
    }
    json body{{"frame", frame_json(*p, node)},
              {"metrics", std::move(metrics)},
              {"node", node},
              {"path", path_json(*p, node)}};
    if (has_line) {
      body["sourceLine"] = json{{"file", frame.file_path},
                                {"line", frame.line},
                                {"metrics", std::move(line_metrics)},
                                {"nodes", std::move(line_nodes)}};
    } else {
      body["sourceLine"] = nullptr;
    }
    return json_response(200, body);
  }

  if (path == "/api/correlate") {
    auto p = profile_param("p");
    auto anchor = uint_param(params, "anchor");
    if (anchor >= p->node_count()) throw HttpError{404, "unknown node " + std::to_string(anchor)};
    Profile projection = correlate(*p, static_cast<NodeId>(anchor), required(params, "from"),
                                   required(params, "to"));
    ViewTree view = compute_view(projection, metric_param(params, projection), ViewKind::kTopDown);
    ExportOptions options;
    options.profile = &projection;
    return ApiResponse{200, "application/json", export_view(view, options)};
  }

  if (path == "/api/search") {
    auto p = profile_param("p");
    auto q = param(params, "q").value_or("");
    if (q.empty()) throw HttpError{400, "empty search query"};
    ViewTree view = compute_view(*p, metric_param(params, *p), kind_param(params));
    auto hits = search(view, q);
    return json_response(200, json{{"count", hits.size()}, {"nodes", hits}, {"query", q}});
  }

  if (path == "/api/rows") {
    auto p = profile_param("p");
    ViewTree view = compute_view(*p, metric_param(params, *p), kind_param(params));
    std::uint32_t node = kNoNode;
    if (param(params, "node")) {
      auto id = uint_param(params, "node");
      if (id >= view.nodes.size()) throw HttpError{404, "unknown node " + std::to_string(id)};
      node = static_cast<std::uint32_t>(id);
    }
    json rows = json::array();
    for (const auto& r : table_rows(view, node)) {
      rows.push_back(json{{"depth", r.depth},
                          {"exclusive", r.exclusive},
                          {"expandable", r.expandable},
                          {"inclusive", r.inclusive},
                          {"label", r.label},
                          {"node", r.node},
                          {"parent", r.parent == kNoNode ? json(nullptr) : json(r.parent)},
                          {"percent", r.percent}});
    }
    return json_response(200, json{{"rows", std::move(rows)}});
  }

  if (path == "/api/source") {
    auto file = required(params, "file");
    std::error_code ec;
    fs::path root = fs::weakly_canonical(fs::absolute(session_->workspace_root()), ec);
    fs::path requested = fs::path(file).is_absolute() ? fs::path(file) : root / file;
    fs::path resolved = fs::weakly_canonical(requested, ec);
    if (ec) throw HttpError{404, "cannot resolve '" + file + "'"};
    auto rel = resolved.lexically_relative(root);
    if (rel.empty() || *rel.begin() == "..") {
      throw HttpError{403, "'" + file + "' is outside the workspace root"};
    }
    if (!fs::is_regular_file(resolved, ec)) throw HttpError{404, "no file '" + file + "'"};
    std::uint64_t from = param(params, "from") ? uint_param(params, "from") : 1;
    std::uint64_t to = param(params, "to") ? uint_param(params, "to") : UINT64_MAX;
    if (from == 0 || to < from) throw HttpError{400, "line range must satisfy 1 <= from <= to"};

    std::string text = read_file(resolved);
    std::string slice;
    std::uint64_t line = 1;
    std::size_t pos = 0;
    while (pos < text.size() && line <= to) {
      auto eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      if (line >= from) {
        slice.append(text, pos, eol - pos);
        slice += '\n';
      }
      pos = eol + 1;
      ++line;
    }
    return ApiResponse{200, "text/plain; charset=utf-8", std::move(slice)};
  }

  throw HttpError{404, "no endpoint " + std::string(path)};
}

struct Server::Impl {
  std::shared_ptr<Session> session;
  ServerOptions options;
  Api api;
  httplib::Server http;
  int port = -1;

  Impl(std::shared_ptr<Session> s, ServerOptions o)
      : session(s), options(std::move(o)), api(std::move(s)) {}
};

namespace {

constexpr const char* kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>profcct</title></head>
<body><h1>profcct server</h1>
<p>No UI assets are installed. The JSON API is available under <code>/api/</code>,
starting with <a href="/api/profiles">/api/profiles</a>.</p>
</body></html>
)";

}  // namespace

Server::Server(std::shared_ptr<Session> session, ServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(session), std::move(options))) {
  auto& http = impl_->http;
  http.Get(R"(/api/.*)", [this](const httplib::Request& req, httplib::Response& res) {
    QueryParams params(req.params.begin(), req.params.end());
    ApiResponse r = impl_->api.get(req.path, params);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  });
  std::error_code ec;
  if (!impl_->options.ui_dir.empty() && fs::is_directory(impl_->options.ui_dir, ec)) {
    http.set_mount_point("/", impl_->options.ui_dir.string());
  } else {
    http.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kPlaceholderPage, "text/html; charset=utf-8");
    });
  }
}

Server::~Server() { stop(); }

int Server::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    impl_->port = impl_->http.bind_to_any_port(o.bind);
  } else {
    impl_->port = impl_->http.bind_to_port(o.bind, o.port) ? o.port : -1;
  }
  return impl_->port;
}

void Server::run() { impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

}  // namespace profcct
