#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "costar/geometry.hpp"

namespace costar {

enum class SymbolKind { Waypoint, Object, Region, Frame, JointState };

std::string_view toString(SymbolKind kind);
std::optional<SymbolKind> symbolKindFromString(std::string_view s);

struct Symbol {
  std::string name;
  SymbolKind kind = SymbolKind::Frame;
  std::optional<Pose> pose;
  std::optional<std::string> classLabel;
  std::string source;
  std::map<std::string, std::string> attributes;
};

nlohmann::json symbolToJson(const Symbol& s);

/// Argument of a predicate statement: a symbol or label name, a query
/// variable (capitalized or '?'-prefixed identifier), or a number.
struct Term {
  enum class Kind { Name, Variable, Number };
  Kind kind = Kind::Name;
  std::string text;
  double number = 0.0;

  static Term name(std::string s) { return {Kind::Name, std::move(s), 0.0}; }
  static Term variable(std::string s) { return {Kind::Variable, std::move(s), 0.0}; }
  static Term num(double v) { return {Kind::Number, {}, v}; }

  bool operator==(const Term&) const = default;
};

struct PredicateStatement {
  std::string name;
  std::vector<Term> args;

  std::string str() const;
  bool operator==(const PredicateStatement&) const = default;
};

/// Parses `Name(arg, ...)`. Throws Error(SyntaxError).
PredicateStatement parseStatement(std::string_view text);
/// Parses statements joined by '&'. Throws Error(SyntaxError).
std::vector<PredicateStatement> parseConjunction(std::string_view text);

enum class ParamKind { Symbol, Label, Number };

using PredicateArg = std::variant<const Symbol*, std::string, double>;
using PredicateEvaluator = std::function<bool(const std::vector<PredicateArg>&)>;

struct PredicateDef {
  std::string name;
  std::vector<ParamKind> params;
  std::size_t requiredArgs = 0;  // trailing params beyond this are optional
  /// Included in listTruePredicates(). Grounding only uses required params.
  bool enumerable = true;
  std::string source;
  PredicateEvaluator eval;
};

inline constexpr double kDefaultNearRadius = 0.1;

/// Knowledge base of symbols plus the registry of predicate definitions.
///
/// Reads take a shared lock, writes an exclusive one, so every query sees a
/// consistent snapshot of symbol poses.
class Predicator {
 public:
  /// Registers LeftOf, RightOf, InFrontOf, Near and IsClass.
  Predicator();

  void registerPredicate(PredicateDef def);
  std::vector<std::string> predicateNames() const;

  void upsertSymbol(Symbol s);
  bool removeSymbol(const std::string& name);
  /// Drops every symbol of `kind` published by `source`, then inserts `fresh`.
  void replaceSymbols(const std::string& source, SymbolKind kind, std::vector<Symbol> fresh);

  std::optional<Symbol> symbol(const std::string& name) const;
  /// Ordered by name.
  std::vector<Symbol> symbols() const;
  std::uint64_t version() const;

  /// Throws Error(UnknownPredicate | UnknownSymbol | ArityMismatch | InvalidParameter).
  bool evaluate(const PredicateStatement& p) const;

  /// Names of all symbols that make every template true. All templates must
  /// share exactly one free variable. Lexicographic order.
  std::vector<std::string> querySymbols(const std::vector<PredicateStatement>& templates) const;

  /// Every grounded statement over current symbols that evaluates true.
  std::vector<PredicateStatement> listTruePredicates() const;

 private:
  bool evaluateLocked(const PredicateStatement& p) const;

  mutable std::shared_mutex mutex_;
  std::map<std::string, Symbol> symbols_;
  std::map<std::string, PredicateDef> defs_;
  std::uint64_t version_ = 0;
};

}  // namespace costar
