#include "costar/plan_dsl.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace costar {

namespace {

enum class Tok { Ident, Number, String, LBrace, RBrace, LParen, RParen, Equals, Comma, Dot, At, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;  // identifier, unescaped string, or number literal
  double number = 0.0;
  SourceSpan span;
};

bool identStart(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool identChar(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string tokName(Tok t) {
  switch (t) {
    case Tok::Ident: return "identifier";
    case Tok::Number: return "number";
    case Tok::String: return "string";
    case Tok::LBrace: return "'{'";
    case Tok::RBrace: return "'}'";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::Equals: return "'='";
    case Tok::Comma: return "','";
    case Tok::Dot: return "'.'";
    case Tok::At: return "'@'";
    case Tok::End: return "end of input";
  }
  return "?";
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skipBlank();
      Token t;
      t.span = here();
      if (pos_ >= src_.size()) {
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (identStart(c)) {
        t.kind = Tok::Ident;
        while (pos_ < src_.size() && identChar(src_[pos_])) t.text += advance();
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+') {
        lexNumber(t);
      } else if (c == '"') {
        lexString(t);
      } else {
        switch (c) {
          case '{': t.kind = Tok::LBrace; break;
          case '}': t.kind = Tok::RBrace; break;
          case '(': t.kind = Tok::LParen; break;
          case ')': t.kind = Tok::RParen; break;
          case '=': t.kind = Tok::Equals; break;
          case ',': t.kind = Tok::Comma; break;
          case '.': t.kind = Tok::Dot; break;
          case '@': t.kind = Tok::At; break;
          default: {
            SourceSpan s = here();
            s.length = 1;
            throw PlanSyntaxError(std::string("unexpected character '") + c + "'", s);
          }
        }
        advance();
      }
      t.span.length = pos_ - t.span.offset;
      out.push_back(std::move(t));
    }
  }

 private:
  SourceSpan here() const { return {line_, col_, pos_, 0}; }

  char advance() {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skipBlank() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  void lexNumber(Token& t) {
    std::size_t end = pos_;
    if (src_[end] == '-' || src_[end] == '+') ++end;
    auto digits = [&] {
      while (end < src_.size() && std::isdigit(static_cast<unsigned char>(src_[end]))) ++end;
    };
    const std::size_t intStart = end;
    digits();
    if (end == intStart) {
      SourceSpan s = here();
      s.length = end - pos_;
      throw PlanSyntaxError("expected digits in number", s);
    }
    if (end < src_.size() && src_[end] == '.') {
      ++end;
      digits();
    }
    if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
      std::size_t e = end + 1;
      if (e < src_.size() && (src_[e] == '-' || src_[e] == '+')) ++e;
      if (e < src_.size() && std::isdigit(static_cast<unsigned char>(src_[e]))) {
        end = e;
        digits();
      }
    }
    std::string_view lit = src_.substr(pos_, end - pos_);
    std::string_view parse = lit.front() == '+' ? lit.substr(1) : lit;
    double v = 0.0;
    auto [p, ec] = std::from_chars(parse.data(), parse.data() + parse.size(), v);
    if (ec != std::errc() || p != parse.data() + parse.size()) {
      SourceSpan s = here();
      s.length = lit.size();
      throw PlanSyntaxError("malformed number '" + std::string(lit) + "'", s);
    }
    t.kind = Tok::Number;
    t.text = std::string(lit);
    t.number = v;
    while (pos_ < end) advance();
    if (pos_ < src_.size() && identChar(src_[pos_])) {
      SourceSpan s = here();
      s.length = 1;
      throw PlanSyntaxError("unexpected character after number", s);
    }
  }

  void lexString(Token& t) {
    const SourceSpan start = here();
    advance();
    t.kind = Tok::String;
    for (;;) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') {
        SourceSpan s = start;
        s.length = pos_ - start.offset;
        throw PlanSyntaxError("unterminated string", s);
      }
      const char c = advance();
      if (c == '"') return;
      if (c != '\\') {
        t.text += c;
        continue;
      }
      if (pos_ >= src_.size()) continue;
      const char e = advance();
      switch (e) {
        case 'n': t.text += '\n'; break;
        case 't': t.text += '\t'; break;
        case '"': t.text += '"'; break;
        case '\\': t.text += '\\'; break;
        default: {
          SourceSpan s{line_, col_ - 2, pos_ - 2, 2};
          throw PlanSyntaxError(std::string("unknown escape '\\") + e + "'", s);
        }
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

class Parser {
 public:
  Parser(std::vector<Token> toks, std::size_t srcLen) : toks_(std::move(toks)), srcLen_(srcLen) {}

  PlanDocument document() {
    PlanDocument doc;
    if (peek().kind == Tok::Ident && peek().text == "plan") {
      next();
      const Token& n = next();
      if (n.kind != Tok::String && n.kind != Tok::Ident) fail("expected plan name after 'plan'", n);
      doc.name = n.text;
    }
    if (peek().kind == Tok::End) fail("expected a node", peek());
    BTNode top = node();
    if (peek().kind != Tok::End) fail("unexpected " + tokName(peek().kind) + " after the top-level node", peek());
    doc.tree = makeRoot(std::move(top));
    assignNodeIds(doc.tree);
    // Spans were recorded in preorder; match them to the freshly assigned ids.
    std::size_t k = 0;
    collect(doc.tree.children.front(), k, doc.spans);
    if (!spans_.empty()) {
      SourceSpan all = spans_.front();
      doc.spans[doc.tree.id] = all;
    }
    return doc;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void fail(const std::string& msg, const Token& at) const {
    SourceSpan s = at.span;
    if (s.offset > srcLen_) s.offset = srcLen_;
    if (s.offset + s.length > srcLen_) s.length = srcLen_ - s.offset;
    throw PlanSyntaxError(msg, s);
  }

  const Token& expect(Tok kind, const std::string& context) {
    if (peek().kind != kind) {
      fail("expected " + tokName(kind) + " " + context + ", found " + tokName(peek().kind), peek());
    }
    return next();
  }

  void collect(const BTNode& n, std::size_t& k, std::map<std::string, SourceSpan>& out) {
    if (k < spans_.size()) out[n.id] = spans_[k];
    ++k;
    for (const auto& c : n.children) collect(c, k, out);
  }

  int countArg(const std::string& keyword) {
    const Token& t = peek();
    if (t.kind != Tok::Number) fail("expected a count after '" + keyword + "'", t);
    if (t.text.find_first_of(".eE+-") != std::string::npos || t.number > 1e9) {
      fail("count after '" + keyword + "' must be a non-negative integer", t);
    }
    next();
    return static_cast<int>(t.number);
  }

  BTNode node() {
    const Token& head = peek();
    if (head.kind != Tok::Ident) fail("expected a node, found " + tokName(head.kind), head);
    const std::size_t spanSlot = spans_.size();
    spans_.push_back(head.span);

    BTNode n;
    if (toks_[pos_ + 1].kind == Tok::Dot) {
      n = leafNode();
    } else {
      const std::string kw = head.text;
      next();
      if (kw == "sequence") {
        n.kind = NodeKind::Sequence;
      } else if (kw == "selector") {
        n.kind = NodeKind::Selector;
      } else if (kw == "repeat") {
        n.kind = NodeKind::Repeat;
        n.count = countArg(kw);
        if (peek().kind == Tok::Ident && peek().text == "strict") {
          next();
          n.strict = true;
        }
      } else if (kw == "reset") {
        n.kind = NodeKind::Reset;
        n.count = countArg(kw);
      } else {
        fail("unknown node keyword '" + kw + "'", head);
      }
      expect(Tok::LBrace, "to open " + kw + " body");
      while (peek().kind != Tok::RBrace) {
        if (peek().kind == Tok::End) fail("unclosed '{' for " + kw, head);
        n.children.push_back(node());
      }
      if (n.children.empty()) fail(kw + " requires at least one child", peek());
      next();
    }
    const Token& last = toks_[pos_ - 1];
    spans_[spanSlot].length = last.span.offset + last.span.length - head.span.offset;
    return n;
  }

  BTNode leafNode() {
    BTNode n;
    n.kind = NodeKind::Leaf;
    n.binding.component = next().text;
    next();  // '.'
    n.binding.operation = expect(Tok::Ident, "for operation name").text;
    expect(Tok::LParen, "after operation name");
    if (peek().kind != Tok::RParen) {
      for (;;) {
        const Token& key = expect(Tok::Ident, "for parameter name");
        expect(Tok::Equals, "after parameter name");
        if (n.binding.params.count(key.text)) fail("duplicate parameter '" + key.text + "'", key);
        n.binding.params[key.text] = value();
        if (peek().kind != Tok::Comma) break;
        next();
      }
    }
    expect(Tok::RParen, "to close parameter list");
    return n;
  }

  ParamValue value() {
    const Token& t = next();
    switch (t.kind) {
      case Tok::Number: return t.number;
      case Tok::String: return t.text;
      case Tok::Ident:
        if (t.text == "true") return true;
        if (t.text == "false") return false;
        return t.text;
      case Tok::At: return SymbolRef{expect(Tok::Ident, "for symbol name after '@'").text};
      default: fail("expected a parameter value, found " + tokName(t.kind), t);
    }
  }

  std::vector<Token> toks_;
  std::size_t srcLen_;
  std::size_t pos_ = 0;
  std::vector<SourceSpan> spans_;
};

bool bareIdentifier(const std::string& s) {
  if (s.empty() || !identStart(s.front())) return false;
  for (char c : s) {
    if (!identChar(c)) return false;
  }
  return s != "true" && s != "false";
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

std::string formatNumber(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::InvalidParameter, "non-finite number in plan");
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string formatValue(const ParamValue& v) {
  if (auto* s = std::get_if<std::string>(&v)) return bareIdentifier(*s) ? *s : quote(*s);
  if (auto* d = std::get_if<double>(&v)) return formatNumber(*d);
  if (auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  return "@" + std::get<SymbolRef>(v).name;
}

void writeNode(const BTNode& n, int depth, std::ostringstream& os) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  if (n.kind == NodeKind::Root) {
    for (const auto& c : n.children) writeNode(c, depth, os);
    return;
  }
  if (n.kind == NodeKind::Leaf) {
    os << pad << n.binding.component << '.' << n.binding.operation << '(';
    bool first = true;
    for (const auto& [k, v] : n.binding.params) {
      if (!first) os << ", ";
      first = false;
      os << k << '=' << formatValue(v);
    }
    os << ")\n";
    return;
  }
  os << pad;
  switch (n.kind) {
    case NodeKind::Sequence: os << "sequence"; break;
    case NodeKind::Selector: os << "selector"; break;
    case NodeKind::Repeat: os << "repeat " << n.count << (n.strict ? " strict" : ""); break;
    case NodeKind::Reset: os << "reset " << n.count; break;
    default: break;
  }
  if (n.children.empty()) {
    os << " { }\n";
    return;
  }
  os << " {\n";
  for (const auto& c : n.children) writeNode(c, depth + 1, os);
  os << pad << "}\n";
}

std::string kindKey(NodeKind k) {
  switch (k) {
    case NodeKind::Root: return "root";
    case NodeKind::Sequence: return "sequence";
    case NodeKind::Selector: return "selector";
    case NodeKind::Repeat: return "repeat";
    case NodeKind::Reset: return "reset";
    case NodeKind::Leaf: return "leaf";
  }
  return "?";
}

}  // namespace

PlanDocument parsePlan(std::string_view text) {
  Lexer lex(text);
  Parser p(lex.run(), text.size());
  return p.document();
}

std::string serializePlan(const PlanDocument& doc) {
  std::ostringstream os;
  if (!doc.name.empty()) os << "plan " << quote(doc.name) << "\n\n";
  writeNode(doc.tree, 0, os);
  return os.str();
}

nlohmann::json paramToJson(const ParamValue& v) {
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  if (auto* d = std::get_if<double>(&v)) return *d;
  if (auto* b = std::get_if<bool>(&v)) return *b;
  return nlohmann::json{{"symbol", std::get<SymbolRef>(v).name}};
}

ParamValue paramFromJson(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number()) return j.get<double>();
  if (j.is_object() && j.size() == 1 && j.contains("symbol") && j["symbol"].is_string()) {
    return SymbolRef{j["symbol"].get<std::string>()};
  }
  throw Error(ErrorCode::MalformedTree, "unsupported parameter value " + j.dump());
}

nlohmann::json nodeToJson(const BTNode& n) {
  nlohmann::json j;
  j["id"] = n.id;
  j["kind"] = kindKey(n.kind);
  if (n.kind == NodeKind::Repeat || n.kind == NodeKind::Reset) j["count"] = n.count;
  if (n.kind == NodeKind::Repeat) j["strict"] = n.strict;
  if (n.kind == NodeKind::Leaf) {
    j["component"] = n.binding.component;
    j["operation"] = n.binding.operation;
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : n.binding.params) params[k] = paramToJson(v);
    j["params"] = params;
  } else {
    nlohmann::json kids = nlohmann::json::array();
    for (const auto& c : n.children) kids.push_back(nodeToJson(c));
    j["children"] = kids;
  }
  return j;
}

BTNode nodeFromJson(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw Error(ErrorCode::MalformedTree, "node must be an object with a string 'kind'");
  }
  BTNode n;
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "root") n.kind = NodeKind::Root;
  else if (kind == "sequence") n.kind = NodeKind::Sequence;
  else if (kind == "selector") n.kind = NodeKind::Selector;
  else if (kind == "repeat") n.kind = NodeKind::Repeat;
  else if (kind == "reset") n.kind = NodeKind::Reset;
  else if (kind == "leaf") n.kind = NodeKind::Leaf;
  else throw Error(ErrorCode::MalformedTree, "unknown node kind '" + kind + "'");

  if (j.contains("id") && j["id"].is_string()) n.id = j["id"].get<std::string>();
  if (n.kind == NodeKind::Repeat || n.kind == NodeKind::Reset) {
    if (!j.contains("count") || !j["count"].is_number_integer()) {
      throw Error(ErrorCode::MalformedTree, kind + " needs an integer 'count'");
    }
    n.count = j["count"].get<int>();
    n.strict = j.value("strict", false);
  }
  if (n.kind == NodeKind::Leaf) {
    if (!j.contains("component") || !j.contains("operation")) {
      throw Error(ErrorCode::MalformedTree, "leaf needs 'component' and 'operation'");
    }
    n.binding.component = j["component"].get<std::string>();
    n.binding.operation = j["operation"].get<std::string>();
    if (j.contains("params")) {
      for (const auto& [k, v] : j["params"].items()) n.binding.params[k] = paramFromJson(v);
    }
  }
  if (j.contains("children")) {
    for (const auto& c : j["children"]) n.children.push_back(nodeFromJson(c));
  }
  return n;
}

nlohmann::json planToJson(const PlanDocument& doc) {
  return {{"name", doc.name}, {"tree", nodeToJson(doc.tree)}};
}

PlanDocument planFromJson(const nlohmann::json& j) {
  PlanDocument doc;
  const nlohmann::json& tree = j.contains("tree") ? j["tree"] : j;
  doc.name = j.value("name", "");
  doc.tree = makeRoot(nodeFromJson(tree));
  assignNodeIds(doc.tree);
  return doc;
}

PlanDocument loadPlanFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open plan file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return planFromJson(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::SyntaxError, std::string("invalid plan JSON: ") + e.what());
    }
  }
  return parsePlan(text);
}

}  // namespace costar
