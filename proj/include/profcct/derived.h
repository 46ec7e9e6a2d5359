#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "profcct/multi_profile.h"
#include "profcct/profile.h"
#include "profcct/view.h"

namespace profcct {

// Arithmetic over metric identifiers:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := number | ident | '(' expr ')'
// Identifiers are [A-Za-z_][A-Za-z0-9_.]*. Whitespace is ignored.
class Formula {
 public:
  // Throws kFormula with the 0-based column of the offending character.
  static Formula parse(std::string_view text);

  const std::string& text() const { return text_; }
  // Distinct identifiers in order of first appearance.
  const std::vector<std::string>& identifiers() const { return identifiers_; }

  // `values[i]` is the value of identifiers()[i]. Division by zero or a
  // missing operand yields a missing result.
  std::optional<double> evaluate(std::span<const std::optional<double>> values) const;

 private:
  struct Op {
    enum Kind : std::uint8_t { kNumber, kIdent, kAdd, kSub, kMul, kDiv } kind;
    double number = 0;
    std::size_t ident = 0;
  };

  std::string text_;
  std::vector<std::string> identifiers_;
  std::vector<Op> program_;  // postfix

  friend class FormulaParser;
};

struct DeriveOptions {
  bool exclusive = false;  // evaluate over exclusive instead of inclusive values
};

// Per-node values of the formula. Additive inputs are read as inclusive (or
// exclusive) values, snapshot inputs as raw values, derived inputs as stored.
// Throws kUnknownMetric for identifiers that are not metrics.
std::vector<std::optional<double>> evaluate_formula(const Profile& profile, const Formula& formula,
                                                    const DeriveOptions& options = {});

// Evaluates and attaches the result as a derived metric named `name`.
// Returns the new metric's index. Throws kDuplicateMetric, kUnknownMetric.
std::size_t derive(Profile& profile, std::string_view name, const Formula& formula,
                   const DeriveOptions& options = {});

// Per diff node, with identifiers m1 and m2 bound to the two sides (m2 scaled
// when the diff is normalized). Throws kUnknownMetric for other identifiers.
std::vector<std::optional<double>> derive_diff(const DiffTree& diff, const Formula& formula);

// ---- host callbacks ----

// What a metric callback sees: the node and every metric's value there
// (inclusive or exclusive per DeriveOptions, raw for snapshots).
struct MetricContext {
  const Profile& profile;
  NodeId node;
  std::span<const std::optional<double>> values;  // indexed like profile.metrics()

  std::optional<double> operator[](std::string_view metric) const;
  std::string path() const;  // "main;a;b"
};

using VisitCallback =
    std::function<std::optional<Directive>(const ViewTree&, std::uint32_t node, std::size_t depth)>;
using MetricCallback = std::function<std::optional<double>(const MetricContext&)>;

class CallbackRegistry {
 public:
  using Handle = std::uint64_t;

  Handle on_visit(VisitCallback callback);
  // Each metric callback produces one derived metric named `name`.
  Handle on_metric(std::string name, MetricCallback callback);
  bool remove(Handle handle);

  // Applies every visit callback in one traversal; for each node the first
  // callback returning a directive decides. A throwing callback aborts with
  // kCallback naming the node path.
  ViewTree apply(const ViewTree& tree, TraversalOrder order = TraversalOrder::kPre) const;

  // Attaches one derived metric per metric callback, in registration order.
  // A throwing callback aborts with kCallback before the profile is changed.
  void compute(Profile& profile, const DeriveOptions& options = {}) const;

 private:
  Handle next_ = 1;
  std::map<Handle, VisitCallback> visits_;
  std::map<Handle, std::pair<std::string, MetricCallback>> metrics_;
};

}  // namespace profcct
