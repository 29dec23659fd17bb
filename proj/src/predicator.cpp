#include "costar/predicator.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <mutex>
#include <set>

#include "costar/error.hpp"
#include "costar/serialization.hpp"

namespace costar {

std::string_view toString(SymbolKind kind) {
  switch (kind) {
    case SymbolKind::Waypoint: return "waypoint";
    case SymbolKind::Object: return "object";
    case SymbolKind::Region: return "region";
    case SymbolKind::Frame: return "frame";
    case SymbolKind::JointState: return "joint-state";
  }
  return "frame";
}

std::optional<SymbolKind> symbolKindFromString(std::string_view s) {
  for (SymbolKind k : {SymbolKind::Waypoint, SymbolKind::Object, SymbolKind::Region, SymbolKind::Frame,
                       SymbolKind::JointState}) {
    if (toString(k) == s) return k;
  }
  return std::nullopt;
}

nlohmann::json symbolToJson(const Symbol& s) {
  nlohmann::json j = {{"name", s.name}, {"kind", std::string(toString(s.kind))}, {"source", s.source}};
  if (s.pose) j["pose"] = poseToJson(*s.pose);
  if (s.classLabel) j["class"] = *s.classLabel;
  if (!s.attributes.empty()) j["attributes"] = s.attributes;
  return j;
}

// ---------------------------------------------------------------------------
// Statement text

namespace {

bool isIdentChar(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == '?';
}

bool isBareName(const std::string& s) {
  if (s.empty() || !std::islower(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return isIdentChar(c) && c != '?'; });
}

std::string formatNumber(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

class StatementReader {
 public:
  explicit StatementReader(std::string_view text) : text_(text) {}

  PredicateStatement statement() {
    skipSpace();
    PredicateStatement st;
    st.name = identifier();
    if (st.name.empty()) fail("expected predicate name");
    expect('(');
    skipSpace();
    if (peek() != ')') {
      for (;;) {
        st.args.push_back(term());
        skipSpace();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        break;
      }
    }
    expect(')');
    return st;
  }

  bool atEnd() {
    skipSpace();
    return pos_ >= text_.size();
  }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void advance() { ++pos_; }
  void skipSpace() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::SyntaxError, what + " at offset " + std::to_string(pos_) + " in '" +
                                            std::string(text_) + "'");
  }

 private:
  std::string identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && isIdentChar(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skipSpace();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  Term term() {
    skipSpace();
    const char c = peek();
    if (c == '"') {
      ++pos_;
      std::string s;
      while (pos_ < text_.size() && text_[pos_] != '"') {
        if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) ++pos_;
        s.push_back(text_[pos_++]);
      }
      if (peek() != '"') fail("unterminated string");
      ++pos_;
      return Term::name(std::move(s));
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+') {
      double v = 0.0;
      const char* first = text_.data() + pos_;
      if (c == '+') ++first;
      auto [p, ec] = std::from_chars(first, text_.data() + text_.size(), v);
      if (ec == std::errc()) {
        pos_ = static_cast<std::size_t>(p - text_.data());
        return Term::num(v);
      }
    }
    std::string id = identifier();
    if (id.empty()) fail("expected argument");
    if (id[0] == '?' || std::isupper(static_cast<unsigned char>(id[0]))) return Term::variable(std::move(id));
    return Term::name(std::move(id));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string PredicateStatement::str() const {
  std::string out = name + "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i > 0) out += ", ";
    const Term& t = args[i];
    switch (t.kind) {
      case Term::Kind::Variable: out += t.text; break;
      case Term::Kind::Number: out += formatNumber(t.number); break;
      case Term::Kind::Name: {
        if (isBareName(t.text)) {
          out += t.text;
        } else {
          out += '"';
          for (char c : t.text) {
            if (c == '"' || c == '\\') out += '\\';
            out += c;
          }
          out += '"';
        }
        break;
      }
    }
  }
  return out + ")";
}

PredicateStatement parseStatement(std::string_view text) {
  StatementReader r(text);
  PredicateStatement st = r.statement();
  if (!r.atEnd()) r.fail("trailing input");
  return st;
}

std::vector<PredicateStatement> parseConjunction(std::string_view text) {
  StatementReader r(text);
  std::vector<PredicateStatement> out;
  if (r.atEnd()) return out;
  for (;;) {
    out.push_back(r.statement());
    if (r.atEnd()) break;
    r.skipSpace();
    if (r.peek() != '&') r.fail("expected '&'");
    r.advance();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Predicator

namespace {

const Symbol* asSymbol(const PredicateArg& a) { return std::get<const Symbol*>(a); }

// Position of `a` expressed in the frame of `ref`; nullopt if either lacks a
// pose or both name the same symbol.
std::optional<Eigen::Vector3d> relativePosition(const PredicateArg& a, const PredicateArg& ref) {
  const Symbol* sa = asSymbol(a);
  const Symbol* sr = asSymbol(ref);
  if (!sa->pose || !sr->pose || sa == sr) return std::nullopt;
  return inverse(*sr->pose).apply(sa->pose->position);
}

}  // namespace

Predicator::Predicator() {
  const std::vector<ParamKind> binary{ParamKind::Symbol, ParamKind::Symbol};
  registerPredicate({"LeftOf", binary, 2, true, "predicator", [](const std::vector<PredicateArg>& a) {
                       auto rel = relativePosition(a[0], a[1]);
                       return rel && rel->y() > 0.0;
                     }});
  registerPredicate({"RightOf", binary, 2, true, "predicator", [](const std::vector<PredicateArg>& a) {
                       auto rel = relativePosition(a[0], a[1]);
                       return rel && rel->y() < 0.0;
                     }});
  registerPredicate({"InFrontOf", binary, 2, true, "predicator", [](const std::vector<PredicateArg>& a) {
                       auto rel = relativePosition(a[0], a[1]);
                       return rel && rel->x() > 0.0;
                     }});
  registerPredicate({"Near",
                     {ParamKind::Symbol, ParamKind::Symbol, ParamKind::Number},
                     2,
                     true,
                     "predicator",
                     [](const std::vector<PredicateArg>& a) {
                       const Symbol* sa = asSymbol(a[0]);
                       const Symbol* sb = asSymbol(a[1]);
                       if (!sa->pose || !sb->pose || sa == sb) return false;
                       const double radius = a.size() > 2 ? std::get<double>(a[2]) : kDefaultNearRadius;
                       return (sa->pose->position - sb->pose->position).norm() <= radius;
                     }});
  registerPredicate({"IsClass", {ParamKind::Symbol, ParamKind::Label}, 2, true, "perception",
                     [](const std::vector<PredicateArg>& a) {
                       const Symbol* s = asSymbol(a[0]);
                       return s->classLabel && *s->classLabel == std::get<std::string>(a[1]);
                     }});
}

void Predicator::registerPredicate(PredicateDef def) {
  if (def.requiredArgs > def.params.size()) {
    throw std::invalid_argument("predicate '" + def.name + "' requires more args than it declares");
  }
  std::unique_lock lock(mutex_);
  const std::string name = def.name;
  defs_.insert_or_assign(name, std::move(def));
}

std::vector<std::string> Predicator::predicateNames() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, def] : defs_) out.push_back(name);
  return out;
}

void Predicator::upsertSymbol(Symbol s) {
  if (s.kind == SymbolKind::Object && (!s.pose || !s.classLabel)) {
    throw std::invalid_argument("object symbol '" + s.name + "' needs a pose and a class");
  }
  std::unique_lock lock(mutex_);
  const std::string name = s.name;
  symbols_.insert_or_assign(name, std::move(s));
  ++version_;
}

bool Predicator::removeSymbol(const std::string& name) {
  std::unique_lock lock(mutex_);
  ++version_;
  return symbols_.erase(name) > 0;
}

void Predicator::replaceSymbols(const std::string& source, SymbolKind kind, std::vector<Symbol> fresh) {
  for (const auto& s : fresh) {
    if (s.kind == SymbolKind::Object && (!s.pose || !s.classLabel)) {
      throw std::invalid_argument("object symbol '" + s.name + "' needs a pose and a class");
    }
  }
  std::unique_lock lock(mutex_);
  std::erase_if(symbols_, [&](const auto& kv) { return kv.second.source == source && kv.second.kind == kind; });
  for (auto& s : fresh) {
    const std::string name = s.name;
    symbols_.insert_or_assign(name, std::move(s));
  }
  ++version_;
}

std::optional<Symbol> Predicator::symbol(const std::string& name) const {
  std::shared_lock lock(mutex_);
  auto it = symbols_.find(name);
  if (it == symbols_.end()) return std::nullopt;
  return it->second;
}

std::vector<Symbol> Predicator::symbols() const {
  std::shared_lock lock(mutex_);
  std::vector<Symbol> out;
  out.reserve(symbols_.size());
  for (const auto& [name, s] : symbols_) out.push_back(s);
  return out;
}

std::uint64_t Predicator::version() const {
  std::shared_lock lock(mutex_);
  return version_;
}

bool Predicator::evaluate(const PredicateStatement& p) const {
  std::shared_lock lock(mutex_);
  return evaluateLocked(p);
}

bool Predicator::evaluateLocked(const PredicateStatement& p) const {
  auto it = defs_.find(p.name);
  if (it == defs_.end()) throw Error(ErrorCode::UnknownPredicate, "unknown predicate '" + p.name + "'");
  const PredicateDef& def = it->second;
  if (p.args.size() < def.requiredArgs || p.args.size() > def.params.size()) {
    throw Error(ErrorCode::ArityMismatch, p.name + " takes " + std::to_string(def.requiredArgs) +
                                              (def.requiredArgs == def.params.size()
                                                   ? ""
                                                   : ".." + std::to_string(def.params.size())) +
                                              " arguments, got " + std::to_string(p.args.size()));
  }
  std::vector<PredicateArg> args;
  args.reserve(p.args.size());
  for (std::size_t i = 0; i < p.args.size(); ++i) {
    const Term& t = p.args[i];
    if (t.kind == Term::Kind::Variable) {
      throw Error(ErrorCode::InvalidParameter, "unbound variable " + t.text + " in " + p.str());
    }
    switch (def.params[i]) {
      case ParamKind::Symbol: {
        if (t.kind != Term::Kind::Name) throw Error(ErrorCode::InvalidParameter, "expected a symbol in " + p.str());
        auto s = symbols_.find(t.text);
        if (s == symbols_.end()) throw Error(ErrorCode::UnknownSymbol, "unknown symbol '" + t.text + "'");
        args.emplace_back(&s->second);
        break;
      }
      case ParamKind::Label:
        if (t.kind == Term::Kind::Number) args.emplace_back(formatNumber(t.number));
        else args.emplace_back(t.text);
        break;
      case ParamKind::Number:
        if (t.kind != Term::Kind::Number) throw Error(ErrorCode::InvalidParameter, "expected a number in " + p.str());
        args.emplace_back(t.number);
        break;
    }
  }
  return def.eval(args);
}

std::vector<std::string> Predicator::querySymbols(const std::vector<PredicateStatement>& templates) const {
  std::set<std::string> vars;
  for (const auto& t : templates) {
    for (const auto& a : t.args) {
      if (a.kind == Term::Kind::Variable) vars.insert(a.text);
    }
  }
  if (vars.size() != 1) {
    throw Error(ErrorCode::InvalidParameter, "query templates must share exactly one free variable");
  }
  for (const auto& t : templates) {
    const bool hasVar = std::any_of(t.args.begin(), t.args.end(),
                                    [](const Term& a) { return a.kind == Term::Kind::Variable; });
    if (!hasVar) throw Error(ErrorCode::InvalidParameter, "template " + t.str() + " has no free variable");
  }
  const std::string var = *vars.begin();

  std::shared_lock lock(mutex_);
  // Unknown predicates and arity errors surface even on an empty knowledge base.
  for (const auto& t : templates) {
    auto it = defs_.find(t.name);
    if (it == defs_.end()) throw Error(ErrorCode::UnknownPredicate, "unknown predicate '" + t.name + "'");
    if (t.args.size() < it->second.requiredArgs || t.args.size() > it->second.params.size()) {
      throw Error(ErrorCode::ArityMismatch, "wrong number of arguments in " + t.str());
    }
  }

  std::vector<std::string> out;
  for (const auto& [name, sym] : symbols_) {
    bool all = true;
    for (const auto& t : templates) {
      PredicateStatement grounded = t;
      for (auto& a : grounded.args) {
        if (a.kind == Term::Kind::Variable) a = Term::name(name);
      }
      if (!evaluateLocked(grounded)) {
        all = false;
        break;
      }
    }
    if (all) out.push_back(name);
  }
  return out;
}

std::vector<PredicateStatement> Predicator::listTruePredicates() const {
  std::shared_lock lock(mutex_);
  std::set<std::string> labels;
  for (const auto& [name, s] : symbols_) {
    if (s.classLabel) labels.insert(*s.classLabel);
  }

  std::vector<PredicateStatement> out;
  for (const auto& [pname, def] : defs_) {
    if (!def.enumerable) continue;
    const std::size_t n = def.requiredArgs;
    if (std::any_of(def.params.begin(), def.params.begin() + static_cast<std::ptrdiff_t>(n),
                    [](ParamKind k) { return k == ParamKind::Number; })) {
      continue;
    }
    // Odometer over the cartesian product of each parameter's domain.
    std::vector<std::vector<std::string>> domains;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> d;
      if (def.params[i] == ParamKind::Symbol) {
        for (const auto& [name, s] : symbols_) d.push_back(name);
      } else {
        d.assign(labels.begin(), labels.end());
      }
      if (d.empty()) break;
      domains.push_back(std::move(d));
    }
    if (domains.size() != n) continue;

    std::vector<std::size_t> idx(n, 0);
    for (;;) {
      PredicateStatement st{pname, {}};
      for (std::size_t i = 0; i < n; ++i) st.args.push_back(Term::name(domains[i][idx[i]]));
      if (evaluateLocked(st)) out.push_back(std::move(st));
      std::size_t k = n;
      while (k > 0) {
        --k;
        if (++idx[k] < domains[k].size()) break;
        idx[k] = 0;
        if (k == 0) {
          k = n + 1;
          break;
        }
      }
      if (k == n + 1 || n == 0) break;
    }
  }
  return out;
}

}  // namespace costar
