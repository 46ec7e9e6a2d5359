#include "profcct/cli.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "profcct/derived.h"
#include "profcct/error.h"
#include "profcct/ingest.h"
#include "profcct/io.h"
#include "profcct/layout.h"
#include "profcct/multi_profile.h"
#include "profcct/native_format.h"
#include "profcct/server.h"
#include "profcct/view.h"

namespace profcct {

namespace {

namespace fs = std::filesystem;

struct ViewFlags {
  std::string metric;
  std::string view = "topdown";
  std::optional<double> threshold;
  std::optional<std::size_t> max_depth;
  bool collapse = false;
  bool callee_inclusive = false;

  ViewOptions options() const {
    ViewOptions o;
    if (callee_inclusive) o.bottom_up = BottomUpMode::kInclusive;
    return o;
  }
};

void add_view_flags(CLI::App* cmd, ViewFlags& f, bool with_view = true) {
  cmd->add_option("--metric", f.metric, "Metric name (default: first additive metric)");
  if (with_view) {
    cmd->add_option("--view", f.view, "View kind")
        ->check(CLI::IsMember({"topdown", "bottomup", "flat"}));
  }
  cmd->add_option("--threshold", f.threshold, "Prune nodes below this fraction of the total")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--max-depth", f.max_depth, "Truncate the view below this depth");
  cmd->add_flag("--collapse-recursion", f.collapse, "Collapse directly recursive calls");
  cmd->add_flag("--callee-inclusive", f.callee_inclusive,
                "Bottom-up widths from callee subtree cost instead of self cost");
}

struct Loaded {
  Profile profile;
  SourceFormat format;
};

Loaded load(const std::string& path) {
  std::string bytes = read_file(path);
  SourceFormat format = SourceFormat::kFolded;
  if (bytes.find_first_not_of(" \t\r\n") != std::string::npos) format = detect_format(bytes);
  return {load_profile(bytes, fs::path(path).stem().string()), format};
}

std::string metric_or_default(const Profile& p, const std::string& metric) {
  if (metric.empty()) return p.metrics()[default_metric(p)].name;
  p.metric_index(metric);
  return metric;
}

ViewKind view_kind(const std::string& text) { return *parse_view_kind(text); }

ViewTree transform(ViewTree view, const ViewFlags& f) {
  if (f.collapse) view = collapse_recursion(view);
  if (f.max_depth) view = truncate_depth(view, *f.max_depth);
  if (f.threshold) view = prune(view, *f.threshold);
  return view;
}

void emit(const std::string& output, const std::string& content, std::ostream& out) {
  if (output.empty() || output == "-") {
    out << content;
  } else {
    write_file_atomic(output, content);
  }
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string s;
  for (const auto& p : parts) {
    if (!s.empty()) s += sep;
    s += p;
  }
  return s;
}

std::string percent_text(std::uint64_t value, std::uint64_t total) {
  char buf[32];
  double pct = total == 0 ? 0.0 : static_cast<double>(value) / static_cast<double>(total) * 100.0;
  std::snprintf(buf, sizeof(buf), "%.2f", pct);
  return buf;
}

// Resolves a node id or a ';'-separated frame path.
NodeId resolve_anchor(const Profile& p, const std::string& text) {
  if (!text.empty() && std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    NodeId id = static_cast<NodeId>(std::stoul(text));
    if (id >= p.node_count()) throw Error(ErrorKind::kUnknownPath, "no node " + text);
    return id;
  }
  NodeId cur = p.root();
  std::size_t start = 0;
  while (start <= text.size()) {
    auto semi = text.find(';', start);
    std::string part = text.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
    Frame want = parse_folded_frame(part);
    NodeId next = kNoNode;
    for (auto c : p.node(cur).children) {
      if (p.frame_of(c) == want) {
        next = c;
        break;
      }
    }
    if (next == kNoNode) {
      for (auto c : p.node(cur).children) {
        if (display_name(p.frame_of(c)) == part) {
          next = c;
          break;
        }
      }
    }
    if (next == kNoNode) throw Error(ErrorKind::kUnknownPath, "no context '" + text + "'");
    cur = next;
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  return cur;
}

struct TopRow {
  std::string label;
  std::uint64_t value;
};

std::vector<TopRow> top_rows(const ViewTree& view) {
  std::vector<TopRow> rows;
  for (std::uint32_t n = 1; n < view.nodes.size(); ++n) {
    const ViewNode& node = view.nodes[n];
    switch (view.kind) {
      case ViewKind::kTopDown:
        rows.push_back({join(view.path_labels(n), ";"), node.exclusive});
        break;
      case ViewKind::kBottomUp:
        if (node.parent == 0) rows.push_back({view.label(n), view.value(n)});
        break;
      case ViewKind::kFlat:
        if (node.role == ViewRole::kFrame || node.role == ViewRole::kOther ||
            node.role == ViewRole::kDeep) {
          rows.push_back({view.label(n), node.exclusive});
        }
        break;
    }
  }
  std::erase_if(rows, [](const TopRow& r) { return r.value == 0; });
  std::stable_sort(rows.begin(), rows.end(), [](const TopRow& a, const TopRow& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.label < b.label;
  });
  return rows;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const CliOptions& cli_options) {
  CLI::App app{"Profile analysis over calling context trees", "profcct"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "profcct 1.0");

  // convert
  std::string input, output, to;
  ViewFlags vf;
  auto* convert = app.add_subcommand("convert", "Convert a profile to native or folded form");
  convert->add_option("input", input, "Input profile")->required();
  convert->add_option("-o,--output", output, "Output file (default: stdout)");
  convert->add_option("--to", to, "Output format (default: by extension, else native)")
      ->check(CLI::IsMember({"native", "folded"}));
  convert->add_option("--metric", vf.metric, "Metric written to folded output");

  auto* info = app.add_subcommand("info", "Print profile metadata, metrics and sizes");
  info->add_option("input", input, "Input profile")->required();

  std::size_t limit = 10;
  bool pretty = false;
  auto* top = app.add_subcommand("top", "Print the heaviest rows of a view as TSV");
  top->add_option("input", input, "Input profile")->required();
  top->add_option("-n", limit, "Number of rows");
  top->add_flag("--pretty", pretty, "Aligned human-readable table");
  add_view_flags(top, vf);

  double min_width = 1.0 / 2000;
  auto* view = app.add_subcommand("view", "Write a flame-graph export document");
  view->add_option("input", input, "Input profile")->required();
  view->add_option("-o,--output", output, "Output file (default: stdout)");
  view->add_option("--min-width", min_width, "Narrowest rect kept, as a fraction")
      ->check(CLI::Range(0.0, 0.5));
  add_view_flags(view, vf);

  std::vector<std::string> inputs;
  bool normalize = false;
  auto* diff_cmd = app.add_subcommand("diff", "Write a differential export document");
  diff_cmd->add_option("inputs", inputs, "Baseline and comparison profiles")->required()->expected(2);
  diff_cmd->add_option("-o,--output", output, "Output file (default: stdout)");
  diff_cmd->add_flag("--normalize-by-total", normalize, "Rescale the second profile to the first's total");
  diff_cmd->add_option("--min-width", min_width, "Narrowest rect kept, as a fraction")
      ->check(CLI::Range(0.0, 0.5));
  add_view_flags(diff_cmd, vf);

  bool missing_as_zero = false;
  auto* aggregate_cmd = app.add_subcommand("aggregate", "Write an aggregate export document");
  aggregate_cmd->add_option("inputs", inputs, "Profiles, in timeline order")->required()->expected(1, -1);
  aggregate_cmd->add_option("-o,--output", output, "Output file (default: stdout)");
  aggregate_cmd->add_flag("--missing-as-zero", missing_as_zero, "Treat absent contexts as 0");
  aggregate_cmd->add_option("--min-width", min_width, "Narrowest rect kept, as a fraction")
      ->check(CLI::Range(0.0, 0.5));
  aggregate_cmd->add_option("--metric", vf.metric, "Metric name (default: first additive metric)");
  aggregate_cmd->add_option("--view", vf.view, "View kind")
      ->check(CLI::IsMember({"topdown", "bottomup", "flat"}));

  std::string roles_text, anchor;
  auto* correlate_cmd = app.add_subcommand("correlate", "Project multi-context points onto a role");
  correlate_cmd->add_option("input", input, "Input profile")->required();
  correlate_cmd->add_option("--roles", roles_text, "FROM:TO roles")->required();
  correlate_cmd->add_option("--anchor", anchor, "Anchor node id or ';'-separated frame path")->required();
  correlate_cmd->add_option("-o,--output", output, "Output file (default: stdout)");
  correlate_cmd->add_option("--metric", vf.metric, "Metric name (default: first additive metric)");
  correlate_cmd->add_option("--min-width", min_width, "Narrowest rect kept, as a fraction")
      ->check(CLI::Range(0.0, 0.5));

  std::string formula, as;
  bool exclusive = false;
  auto* derive_cmd = app.add_subcommand("derive", "Attach a formula metric and write native output");
  derive_cmd->add_option("input", input, "Input profile")->required();
  derive_cmd->add_option("--formula", formula, "Expression over metric names")->required();
  derive_cmd->add_option("--as", as, "Name of the derived metric")->required();
  derive_cmd->add_flag("--exclusive", exclusive, "Evaluate over exclusive values");
  derive_cmd->add_option("-o,--output", output, "Output file (default: stdout)");

  int port = 8080;
  std::string bind = "127.0.0.1", root = ".", ui;
  auto* serve = app.add_subcommand("serve", "Serve profiles over HTTP for the browser UI");
  serve->add_option("inputs", inputs, "Profiles to load")->required()->expected(1, -1);
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--bind", bind, "Address to bind");
  serve->add_option("--root", root, "Workspace root for source files");
  serve->add_option("--ui", ui, "Directory of UI assets served at /");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "profcct: " << e.what() << "\n";
    err << "Run 'profcct --help' for usage.\n";
    return 1;
  }

  try {
    if (*convert) {
      auto [profile, format] = load(input);
      std::string target = to;
      if (target.empty()) {
        auto ext = fs::path(output).extension().string();
        target = ext == ".folded" || ext == ".txt" || ext == ".collapsed" ? "folded" : "native";
      }
      std::string content = target == "folded"
                                ? emit_folded(profile, metric_or_default(profile, vf.metric))
                                : serialize(profile);
      emit(output, content, out);
    } else if (*info) {
      auto [profile, format] = load(input);
      const auto& meta = profile.meta();
      out << "name\t" << meta.name << '\n';
      out << "format\t" << to_string(format) << '\n';
      out << "collector\t" << meta.collector << '\n';
      out << "timestamp\t" << meta.timestamp << '\n';
      out << "nodes\t" << profile.node_count() << '\n';
      out << "frames\t" << profile.frames().size() << '\n';
      out << "points\t" << profile.points().size() << '\n';
      out << "metrics\t" << profile.metrics().size() << '\n';
      for (std::size_t m = 0; m < profile.metrics().size(); ++m) {
        const auto& d = profile.metrics()[m];
        out << "metric\t" << m << '\t' << d.name << '\t' << d.unit << '\t' << to_string(d.kind)
            << '\t' << to_string(d.aggregator) << '\t';
        if (d.kind == MetricKind::kDerived) {
          out << '-';
        } else {
          out << total(profile, m);
        }
        out << '\n';
      }
      auto r = roles(profile);
      out << "roles\t" << (r.empty() ? "-" : join(r, ",")) << '\n';
      for (const auto& [k, v] : meta.properties) out << "property\t" << k << '\t' << v << '\n';
    } else if (*top) {
      auto [profile, format] = load(input);
      ViewTree tree = transform(
          compute_view(profile, metric_or_default(profile, vf.metric), view_kind(vf.view), vf.options()), vf);
      auto rows = top_rows(tree);
      if (rows.size() > limit) rows.resize(limit);
      // Callee-inclusive bottom-up roots overlap; the self-cost sum is the profile total.
      const std::uint64_t base =
          tree.basis == WidthBasis::kInclusive && tree.kind == ViewKind::kBottomUp ? tree.nodes[0].exclusive
                                                                                   : tree.total();
      if (!pretty) {
        for (const auto& r : rows) {
          out << r.label << '\t' << r.value << '\t' << percent_text(r.value, base) << '\n';
        }
      } else {
        std::size_t label_w = 5, value_w = 5;
        for (const auto& r : rows) {
          label_w = std::max(label_w, r.label.size());
          value_w = std::max(value_w, std::to_string(r.value).size());
        }
        const char* bold = cli_options.color ? "\x1b[1m" : "";
        const char* reset = cli_options.color ? "\x1b[0m" : "";
        out << bold << std::left << std::setw(static_cast<int>(label_w)) << "label" << "  "
            << std::right << std::setw(static_cast<int>(value_w)) << "value" << "  "
            << std::setw(8) << "percent" << reset << '\n';
        for (const auto& r : rows) {
          out << std::left << std::setw(static_cast<int>(label_w)) << r.label << "  " << std::right
              << std::setw(static_cast<int>(value_w)) << r.value << "  " << std::setw(7)
              << percent_text(r.value, base) << "%\n";
        }
      }
    } else if (*view) {
      auto [profile, format] = load(input);
      ViewTree tree = transform(
          compute_view(profile, metric_or_default(profile, vf.metric), view_kind(vf.view), vf.options()), vf);
      ExportOptions eo;
      eo.layout.min_width = min_width;
      eo.profile = &profile;
      emit(output, export_view(tree, eo), out);
    } else if (*diff_cmd) {
      auto a = load(inputs[0]);
      auto b = load(inputs[1]);
      std::string metric = metric_or_default(a.profile, vf.metric);
      if (!b.profile.find_metric(metric)) {
        throw Error(ErrorKind::kMetricMismatch, "'" + inputs[1] + "' has no metric '" + metric + "'");
      }
      ViewKind kind = view_kind(vf.view);
      ViewTree v1 = transform(compute_view(a.profile, metric, kind, vf.options()), vf);
      ViewTree v2 = transform(compute_view(b.profile, metric, kind, vf.options()), vf);
      ExportOptions eo;
      eo.layout.min_width = min_width;
      emit(output, export_diff(diff_views(v1, v2, normalize), eo), out);
    } else if (*aggregate_cmd) {
      std::vector<Profile> profiles;
      for (const auto& path : inputs) profiles.push_back(load(path).profile);
      std::vector<const Profile*> ptrs;
      for (const auto& p : profiles) ptrs.push_back(&p);
      std::string metric = metric_or_default(profiles.front(), vf.metric);
      for (std::size_t i = 0; i < profiles.size(); ++i) {
        if (!profiles[i].find_metric(metric)) {
          throw Error(ErrorKind::kMetricMismatch, "'" + inputs[i] + "' has no metric '" + metric + "'");
        }
      }
      AggregateOptions options;
      options.kind = view_kind(vf.view);
      options.missing_as_zero = missing_as_zero;
      ExportOptions eo;
      eo.layout.min_width = min_width;
      emit(output, export_aggregate(aggregate(ptrs, metric, options), eo), out);
    } else if (*correlate_cmd) {
      auto colon = roles_text.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == roles_text.size()) {
        err << "profcct: --roles expects FROM:TO\n";
        return 1;
      }
      auto [profile, format] = load(input);
      NodeId node = resolve_anchor(profile, anchor);
      Profile projection =
          correlate(profile, node, roles_text.substr(0, colon), roles_text.substr(colon + 1));
      ViewTree tree = compute_view(projection, metric_or_default(projection, vf.metric),
                                   ViewKind::kTopDown);
      ExportOptions eo;
      eo.layout.min_width = min_width;
      eo.profile = &projection;
      emit(output, export_view(tree, eo), out);
    } else if (*derive_cmd) {
      auto [profile, format] = load(input);
      DeriveOptions options;
      options.exclusive = exclusive;
      derive(profile, as, Formula::parse(formula), options);
      emit(output, serialize(profile), out);
    } else if (*serve) {
      auto session = std::make_shared<Session>(fs::path(root));
      for (const auto& path : inputs) {
        session->add(std::make_shared<const Profile>(load(path).profile));
      }
      ServerOptions options;
      options.bind = bind;
      options.port = port;
      options.ui_dir = ui;
      Server server(session, options);
      int bound = server.bind();
      if (bound < 0) {
        err << "profcct: cannot bind " << bind << ":" << port << "\n";
        return 2;
      }
      out << "serving " << inputs.size() << " profile(s) on http://" << bind << ":" << bound << "/\n";
      out.flush();
      server.run();
    }
  } catch (const Error& e) {
    err << "profcct: " << error_kind_name(e.kind()) << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace profcct
