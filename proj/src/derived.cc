#include "profcct/derived.h"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "profcct/error.h"

namespace profcct {

class FormulaParser {
 public:
  explicit FormulaParser(std::string_view text) : text_(text) {}

  Formula run() {
    out_.text_ = std::string(text_);
    expr();
    skip_space();
    if (pos_ < text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return std::move(out_);
  }

 private:
  [[noreturn]] void fail(const std::string& why) {
    throw Error(ErrorKind::kFormula,
                "formula error at column " + std::to_string(pos_) + ": " + why, pos_);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void emit(Formula::Op::Kind kind) { out_.program_.push_back({kind, 0, 0}); }

  void expr() {
    term();
    while (true) {
      if (accept('+')) {
        term();
        emit(Formula::Op::kAdd);
      } else if (accept('-')) {
        term();
        emit(Formula::Op::kSub);
      } else {
        return;
      }
    }
  }

  void term() {
    factor();
    while (true) {
      if (accept('*')) {
        factor();
        emit(Formula::Op::kMul);
      } else if (accept('/')) {
        factor();
        emit(Formula::Op::kDiv);
      } else {
        return;
      }
    }
  }

  static bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  void factor() {
    skip_space();
    if (pos_ >= text_.size()) fail("expected a number, metric name or '(' at end of formula");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      expr();
      if (!accept(')')) fail("expected ')'");
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
        ++pos_;
      }
      if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
        std::size_t save = pos_++;
        if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
        if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
          while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        } else {
          pos_ = save;
        }
      }
      double value = 0;
      auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
      if (ec != std::errc() || ptr != text_.data() + pos_) {
        pos_ = start;
        fail("malformed number");
      }
      out_.program_.push_back({Formula::Op::kNumber, value, 0});
      return;
    }
    if (ident_start(c)) {
      std::size_t start = pos_;
      while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
      std::string name(text_.substr(start, pos_ - start));
      auto& ids = out_.identifiers_;
      auto it = std::find(ids.begin(), ids.end(), name);
      std::size_t index = static_cast<std::size_t>(it - ids.begin());
      if (it == ids.end()) ids.push_back(std::move(name));
      out_.program_.push_back({Formula::Op::kIdent, 0, index});
      return;
    }
    fail("expected a number, metric name or '(' but found '" + std::string(1, c) + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  Formula out_;
};

Formula Formula::parse(std::string_view text) { return FormulaParser(text).run(); }

std::optional<double> Formula::evaluate(std::span<const std::optional<double>> values) const {
  std::vector<std::optional<double>> stack;
  stack.reserve(program_.size());
  for (const auto& op : program_) {
    switch (op.kind) {
      case Op::kNumber: stack.emplace_back(op.number); break;
      case Op::kIdent: stack.push_back(values[op.ident]); break;
      default: {
        auto b = stack.back();
        stack.pop_back();
        auto& a = stack.back();
        if (!a || !b) {
          a.reset();
          break;
        }
        switch (op.kind) {
          case Op::kAdd: *a += *b; break;
          case Op::kSub: *a -= *b; break;
          case Op::kMul: *a *= *b; break;
          case Op::kDiv:
            if (*b == 0) a.reset();
            else *a /= *b;
            break;
          default: break;
        }
      }
    }
  }
  return stack.back();
}

namespace {

// Per metric, per node: the value a formula or callback sees.
std::vector<std::vector<std::optional<double>>> metric_table(const Profile& p,
                                                             const std::vector<std::size_t>& metrics,
                                                             bool exclusive) {
  std::vector<std::vector<std::optional<double>>> table;
  for (auto m : metrics) {
    std::vector<std::optional<double>> col(p.node_count());
    switch (p.metrics()[m].kind) {
      case MetricKind::kAdditive: {
        // A subtree with no recorded value at all stays missing.
        std::vector<Count> v(p.node_count());
        for (NodeId n = 0; n < p.node_count(); ++n) v[n] = p.count(n, m);
        if (!exclusive) {
          for (NodeId n = static_cast<NodeId>(p.node_count()); n-- > 1;) {
            if (!v[n]) continue;
            auto& up = v[p.node(n).parent];
            up = up.value_or(0) + *v[n];
          }
        }
        for (NodeId n = 0; n < p.node_count(); ++n) {
          if (v[n]) col[n] = static_cast<double>(*v[n]);
        }
        break;
      }
      case MetricKind::kSnapshot:
        for (NodeId n = 0; n < p.node_count(); ++n) {
          if (auto c = p.count(n, m)) col[n] = static_cast<double>(*c);
        }
        break;
      case MetricKind::kDerived:
        for (NodeId n = 0; n < p.node_count(); ++n) col[n] = p.real(n, m);
        break;
    }
    table.push_back(std::move(col));
  }
  return table;
}

std::string node_path(const Profile& p, NodeId node) {
  std::string out;
  for (auto f : p.path(node)) {
    if (!out.empty()) out += ';';
    out += display_name(p.frame(f));
  }
  return out.empty() ? std::string(kRootName) : out;
}

}  // namespace

std::vector<std::optional<double>> evaluate_formula(const Profile& profile, const Formula& formula,
                                                    const DeriveOptions& options) {
  std::vector<std::size_t> metrics;
  for (const auto& id : formula.identifiers()) metrics.push_back(profile.metric_index(id));
  auto table = metric_table(profile, metrics, options.exclusive);
  std::vector<std::optional<double>> out(profile.node_count());
  std::vector<std::optional<double>> args(metrics.size());
  for (NodeId n = 0; n < profile.node_count(); ++n) {
    for (std::size_t i = 0; i < metrics.size(); ++i) args[i] = table[i][n];
    out[n] = formula.evaluate(args);
  }
  return out;
}

std::size_t derive(Profile& profile, std::string_view name, const Formula& formula,
                   const DeriveOptions& options) {
  if (profile.find_metric(name)) {
    throw Error(ErrorKind::kDuplicateMetric, "duplicate metric name '" + std::string(name) + "'");
  }
  auto values = evaluate_formula(profile, formula, options);
  MetricDescriptor d;
  d.name = std::string(name);
  d.kind = MetricKind::kDerived;
  return profile.add_derived_metric(std::move(d), std::move(values));
}

std::vector<std::optional<double>> derive_diff(const DiffTree& diff, const Formula& formula) {
  std::vector<int> side;
  for (const auto& id : formula.identifiers()) {
    if (id == "m1") side.push_back(1);
    else if (id == "m2") side.push_back(2);
    else throw Error(ErrorKind::kUnknownMetric, "unknown identifier '" + id + "' (use m1, m2)");
  }
  std::vector<std::optional<double>> out(diff.nodes.size());
  std::vector<std::optional<double>> args(side.size());
  for (std::uint32_t n = 0; n < diff.nodes.size(); ++n) {
    for (std::size_t i = 0; i < side.size(); ++i) {
      const auto& m1 = diff.nodes[n].m1;
      args[i] = side[i] == 1 ? (m1 ? std::optional<double>(static_cast<double>(*m1)) : std::nullopt)
                             : diff.scaled_m2(n);
    }
    out[n] = formula.evaluate(args);
  }
  return out;
}

std::optional<double> MetricContext::operator[](std::string_view metric) const {
  return values[profile.metric_index(metric)];
}

std::string MetricContext::path() const { return node_path(profile, node); }

CallbackRegistry::Handle CallbackRegistry::on_visit(VisitCallback callback) {
  Handle h = next_++;
  visits_.emplace(h, std::move(callback));
  return h;
}

CallbackRegistry::Handle CallbackRegistry::on_metric(std::string name, MetricCallback callback) {
  Handle h = next_++;
  metrics_.emplace(h, std::make_pair(std::move(name), std::move(callback)));
  return h;
}

bool CallbackRegistry::remove(Handle handle) {
  return visits_.erase(handle) + metrics_.erase(handle) > 0;
}

ViewTree CallbackRegistry::apply(const ViewTree& tree, TraversalOrder order) const {
  return apply_visitor(tree, order, [&](const ViewTree& t, std::uint32_t n, std::size_t depth) {
    for (const auto& [handle, cb] : visits_) {
      std::optional<Directive> d;
      try {
        d = cb(t, n, depth);
      } catch (const std::exception& e) {
        std::string path;
        for (const auto& l : t.path_labels(n)) path += (path.empty() ? "" : ";") + l;
        if (path.empty()) path = std::string(kRootName);
        throw Error(ErrorKind::kCallback, "visit callback failed at " + path + ": " + e.what());
      }
      if (d) return *d;
    }
    return Directive::kKeep;
  });
}

void CallbackRegistry::compute(Profile& profile, const DeriveOptions& options) const {
  std::vector<std::size_t> all(profile.metrics().size());
  for (std::size_t m = 0; m < all.size(); ++m) all[m] = m;
  auto table = metric_table(profile, all, options.exclusive);

  std::vector<std::pair<std::string, std::vector<std::optional<double>>>> results;
  std::vector<std::optional<double>> row(all.size());
  for (const auto& [handle, entry] : metrics_) {
    const auto& [name, cb] = entry;
    std::vector<std::optional<double>> values(profile.node_count());
    for (NodeId n = 0; n < profile.node_count(); ++n) {
      for (std::size_t m = 0; m < all.size(); ++m) row[m] = table[m][n];
      MetricContext ctx{profile, n, row};
      try {
        values[n] = cb(ctx);
      } catch (const std::exception& e) {
        throw Error(ErrorKind::kCallback, "metric callback '" + name + "' failed at " +
                                              node_path(profile, n) + ": " + e.what());
      }
    }
    results.emplace_back(name, std::move(values));
  }
  for (const auto& [name, values] : results) {
    if (profile.find_metric(name)) {
      throw Error(ErrorKind::kDuplicateMetric, "duplicate metric name '" + name + "'");
    }
  }
  for (auto& [name, values] : results) {
    MetricDescriptor d;
    d.name = name;
    d.kind = MetricKind::kDerived;
    profile.add_derived_metric(std::move(d), std::move(values));
  }
}

}  // namespace profcct
