#include "iotarch/rule.hpp"

#include <cctype>
#include <charconv>
#include <sstream>

namespace iotarch {
namespace {

struct Token {
  enum class Kind { Ident, Number, String, Punct, Cmp, End };
  Kind kind = Kind::End;
  std::string text;
  std::size_t line = 1;
  std::size_t col = 1;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::vector<Token> lex(const std::string& text) {
  std::vector<Token> out;
  std::size_t i = 0, line = 1, col = 1;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Token t;
    t.line = line;
    t.col = col;
    const bool negative_number =
        c == '-' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < text.size() && ident_char(text[j])) ++j;
      t.kind = Token::Kind::Ident;
      t.text = text.substr(i, j - i);
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c)) || negative_number) {
      std::size_t j = i + 1;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j + 1 < text.size() && text[j] == '.' && std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
        j += 2;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      }
      if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < text.size() && (text[k] == '+' || text[k] == '-')) ++k;
        if (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]))) {
          j = k;
          while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        }
      }
      t.kind = Token::Kind::Number;
      t.text = text.substr(i, j - i);
      advance(j - i);
    } else if (c == '"') {
      std::string value;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < text.size()) {
        if (text[j] == '\\' && j + 1 < text.size()) {
          value.push_back(text[j + 1]);
          j += 2;
        } else if (text[j] == '"') {
          closed = true;
          ++j;
          break;
        } else {
          value.push_back(text[j++]);
        }
      }
      if (!closed) {
        throw RuleSyntaxError(Errc::SyntaxError, line, col, {"closing '\"'"}, "unterminated string");
      }
      t.kind = Token::Kind::String;
      t.text = std::move(value);
      advance(j - i);
    } else if (c == '>' || c == '<' || c == '=' || c == '!') {
      const bool two = i + 1 < text.size() && text[i + 1] == '=';
      if ((c == '=' || c == '!') && !two) {
        throw RuleSyntaxError(Errc::SyntaxError, line, col, {"comparator"}, "unexpected character '" + std::string(1, c) + "'");
      }
      t.kind = Token::Kind::Cmp;
      t.text = text.substr(i, two ? 2 : 1);
      advance(t.text.size());
    } else if (c == '(' || c == ')' || c == ',' || c == '.' || c == '/') {
      t.kind = Token::Kind::Punct;
      t.text = std::string(1, c);
      advance(1);
    } else {
      throw RuleSyntaxError(Errc::SyntaxError, line, col, {},
                            "unexpected character '" + std::string(1, c) + "'");
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.line = line;
  end.col = col;
  out.push_back(end);
  return out;
}

const std::map<std::string, Aggregate>& aggregates() {
  static const std::map<std::string, Aggregate> m = {{"MEAN", Aggregate::Mean},
                                                     {"MIN", Aggregate::Min},
                                                     {"MAX", Aggregate::Max},
                                                     {"STDDEV", Aggregate::Stddev},
                                                     {"EWMA", Aggregate::Ewma}};
  return m;
}

const std::map<std::string, Comparator>& comparators() {
  static const std::map<std::string, Comparator> m = {{">", Comparator::Gt},  {">=", Comparator::Ge},
                                                      {"<", Comparator::Lt},  {"<=", Comparator::Le},
                                                      {"==", Comparator::Eq}, {"!=", Comparator::Ne}};
  return m;
}

bool is_keyword(const std::string& s) {
  static const std::set<std::string> kw = {"WHEN", "FOR", "TICKS", "THEN", "PRIORITY", "AND",
                                           "OR", "SET", "NOTIFY", "ESCALATE"};
  return kw.count(s) || aggregates().count(s);
}

std::string describe(const Token& t) {
  if (t.kind == Token::Kind::End) return "end of input";
  if (t.kind == Token::Kind::String) return "string \"" + t.text + "\"";
  return "'" + t.text + "'";
}

class Parser {
 public:
  explicit Parser(const std::string& text) : tokens_(lex(text)) {}

  Rule parse() {
    Rule rule;
    keyword("WHEN");
    rule.condition = cond();
    if (peek_keyword("FOR")) {
      ++pos_;
      rule.for_ticks = static_cast<std::uint32_t>(integer());
      keyword("TICKS");
    }
    keyword("THEN");
    rule.action = action();
    if (peek_keyword("PRIORITY")) {
      ++pos_;
      rule.priority = integer();
    }
    if (peek().kind != Token::Kind::End) fail({"end of rule"});
    return rule;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  bool peek_keyword(const char* kw) const {
    return peek().kind == Token::Kind::Ident && peek().text == kw;
  }
  bool peek_punct(char c) const {
    return peek().kind == Token::Kind::Punct && peek().text.size() == 1 && peek().text[0] == c;
  }

  [[noreturn]] void fail(std::vector<std::string> expected, Errc code = Errc::SyntaxError) const {
    const Token& t = peek();
    std::string message = "unexpected " + describe(t);
    if (!expected.empty()) {
      message += ", expected ";
      for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i) message += " or ";
        message += expected[i];
      }
    }
    throw RuleSyntaxError(code, t.line, t.col, std::move(expected), message);
  }

  void keyword(const char* kw) {
    if (!peek_keyword(kw)) fail({std::string("'") + kw + "'"});
    ++pos_;
  }
  void punct(char c) {
    if (!peek_punct(c)) fail({std::string("'") + c + "'"});
    ++pos_;
  }

  std::int64_t integer() {
    const Token& t = peek();
    std::int64_t v = 0;
    if (t.kind != Token::Kind::Number) fail({"integer"});
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{} || p != t.text.data() + t.text.size()) fail({"integer"});
    ++pos_;
    return v;
  }

  double number() {
    const Token& t = peek();
    if (t.kind != Token::Kind::Number) fail({"number"});
    double v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{} || p != t.text.data() + t.text.size()) fail({"number"});
    ++pos_;
    return v;
  }

  std::string name(const char* what) {
    const Token& t = peek();
    if (t.kind != Token::Kind::Ident || is_keyword(t.text)) fail({what});
    ++pos_;
    return t.text;
  }

  Condition cond() {
    Condition left = term();
    while (peek_keyword("OR")) {
      ++pos_;
      Condition node;
      node.kind = Condition::Kind::Or;
      node.children.push_back(std::move(left));
      node.children.push_back(term());
      left = std::move(node);
    }
    return left;
  }

  Condition term() {
    Condition left = factor();
    while (peek_keyword("AND")) {
      ++pos_;
      Condition node;
      node.kind = Condition::Kind::And;
      node.children.push_back(std::move(left));
      node.children.push_back(factor());
      left = std::move(node);
    }
    return left;
  }

  Condition factor() {
    if (peek_punct('(')) {
      ++pos_;
      Condition inner = cond();
      punct(')');
      return inner;
    }
    Condition leaf;
    leaf.compare.lhs = operand();
    const Token& t = peek();
    if (t.kind != Token::Kind::Cmp) fail({"comparator"});
    leaf.compare.op = comparators().at(t.text);
    ++pos_;
    leaf.compare.rhs = number();
    return leaf;
  }

  Operand operand() {
    const Token& t = peek();
    if (t.kind != Token::Kind::Ident || (is_keyword(t.text) && !aggregates().count(t.text))) {
      fail({"property path", "aggregate", "'('"});
    }
    if (tokens_[pos_ + 1].kind == Token::Kind::Punct && tokens_[pos_ + 1].text == "(") {
      auto agg = aggregates().find(t.text);
      if (agg == aggregates().end()) {
        fail({"MEAN", "MIN", "MAX", "STDDEV", "EWMA"}, Errc::UnknownAggregate);
      }
      Operand op;
      op.aggregate = agg->second;
      pos_ += 2;
      path(op);
      punct(',');
      const Token& wt = peek();
      const std::int64_t w = integer();
      if (w < 1) {
        throw RuleSyntaxError(Errc::SyntaxError, wt.line, wt.col, {"positive window"},
                              "aggregate window must be at least 1");
      }
      op.window = static_cast<std::uint32_t>(w);
      punct(')');
      return op;
    }
    Operand op;
    path(op);
    return op;
  }

  void path(Operand& op) {
    op.thing = name("property path");
    punct('.');
    op.property = name("property name");
  }

  std::string topic() {
    std::string out;
    while (true) {
      const Token& t = peek();
      if (t.kind == Token::Kind::Ident || (t.kind == Token::Kind::Number && t.text[0] != '-')) {
        out += t.text;
        ++pos_;
      } else {
        fail({"topic"});
      }
      if (!peek_punct('/')) break;
      ++pos_;
      out += '/';
    }
    return out;
  }

  std::string string_literal() {
    const Token& t = peek();
    if (t.kind != Token::Kind::String) fail({"string"});
    ++pos_;
    return t.text;
  }

  FrameValue value() {
    const Token& t = peek();
    if (t.kind == Token::Kind::Ident) {
      if (t.text == "on" || t.text == "true") {
        ++pos_;
        return true;
      }
      if (t.text == "off" || t.text == "false") {
        ++pos_;
        return false;
      }
    }
    if (t.kind == Token::Kind::Number) return number();
    if (t.kind == Token::Kind::String) return string_literal();
    fail({"on", "off", "number", "string"});
  }

  RuleAction action() {
    RuleAction a;
    if (peek_keyword("SET")) {
      ++pos_;
      a.kind = RuleAction::Kind::Set;
      punct('(');
      a.device = device_ref("device");
      punct(',');
      a.resource = device_ref("resource");
      punct(',');
      a.value = value();
      punct(')');
    } else if (peek_keyword("NOTIFY")) {
      ++pos_;
      a.kind = RuleAction::Kind::Notify;
      punct('(');
      a.topic = topic();
      punct(',');
      a.message = string_literal();
      punct(')');
    } else if (peek_keyword("ESCALATE")) {
      ++pos_;
      a.kind = RuleAction::Kind::Escalate;
      punct('(');
      a.message = string_literal();
      punct(')');
    } else {
      fail({"SET", "NOTIFY", "ESCALATE"});
    }
    return a;
  }

  std::string device_ref(const char* what) {
    const Token& t = peek();
    if (t.kind == Token::Kind::Number && t.text[0] != '-' && t.text.find_first_of(".eE") == std::string::npos) {
      ++pos_;
      return t.text;
    }
    return name(what);
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

std::string format_number(double v) { return Json(v).dump(); }

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string print_operand(const Operand& op) {
  if (op.aggregate == Aggregate::None) return op.path();
  return to_string(op.aggregate) + "(" + op.path() + ", " + std::to_string(op.window) + ")";
}

std::string print_action(const RuleAction& a) {
  switch (a.kind) {
    case RuleAction::Kind::Set: {
      std::string v;
      if (const auto* b = std::get_if<bool>(&a.value)) {
        v = *b ? "on" : "off";
      } else if (const auto* d = std::get_if<double>(&a.value)) {
        v = format_number(*d);
      } else {
        v = quote(std::get<std::string>(a.value));
      }
      return "SET(" + a.device + ", " + a.resource + ", " + v + ")";
    }
    case RuleAction::Kind::Notify: return "NOTIFY(" + a.topic + ", " + quote(a.message) + ")";
    case RuleAction::Kind::Escalate: return "ESCALATE(" + quote(a.message) + ")";
  }
  return {};
}

void collect_operands(const Condition& c, std::vector<const Operand*>& out) {
  if (c.kind == Condition::Kind::Compare) {
    out.push_back(&c.compare.lhs);
    return;
  }
  for (const auto& child : c.children) collect_operands(child, out);
}

}  // namespace

std::string to_string(Aggregate agg) {
  switch (agg) {
    case Aggregate::None: return "";
    case Aggregate::Mean: return "MEAN";
    case Aggregate::Min: return "MIN";
    case Aggregate::Max: return "MAX";
    case Aggregate::Stddev: return "STDDEV";
    case Aggregate::Ewma: return "EWMA";
  }
  return "";
}

std::string to_string(Comparator cmp) {
  switch (cmp) {
    case Comparator::Gt: return ">";
    case Comparator::Ge: return ">=";
    case Comparator::Lt: return "<";
    case Comparator::Le: return "<=";
    case Comparator::Eq: return "==";
    case Comparator::Ne: return "!=";
  }
  return ">";
}

std::string to_string(RuleAction::Kind kind) {
  switch (kind) {
    case RuleAction::Kind::Set: return "set";
    case RuleAction::Kind::Notify: return "notify";
    case RuleAction::Kind::Escalate: return "escalate";
  }
  return "notify";
}

RuleSyntaxError::RuleSyntaxError(Errc code, std::size_t line, std::size_t col,
                                 std::vector<std::string> expected, const std::string& message)
    : Error(code, "line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + message),
      line_(line),
      col_(col),
      expected_(std::move(expected)) {}

std::string Rule::scope() const {
  if (link.regions.size() > 1) return "global";
  if (link.regions.size() == 1) return *link.regions.begin();
  return {};
}

bool Rule::operator==(const Rule& other) const {
  return condition == other.condition && for_ticks == other.for_ticks && action == other.action &&
         priority == other.priority;
}

Rule parse_rule(const std::string& text, std::string id) {
  Rule rule = Parser(text).parse();
  rule.id = std::move(id);
  rule.text = text;
  return rule;
}

std::string print_condition(const Condition& c) {
  switch (c.kind) {
    case Condition::Kind::Compare:
      return print_operand(c.compare.lhs) + " " + to_string(c.compare.op) + " " +
             format_number(c.compare.rhs);
    case Condition::Kind::Or: {
      const auto& rhs = c.children[1];
      std::string right = print_condition(rhs);
      if (rhs.kind == Condition::Kind::Or) right = "(" + right + ")";
      return print_condition(c.children[0]) + " OR " + right;
    }
    case Condition::Kind::And: {
      const auto& lhs = c.children[0];
      const auto& rhs = c.children[1];
      std::string left = print_condition(lhs);
      std::string right = print_condition(rhs);
      if (lhs.kind == Condition::Kind::Or) left = "(" + left + ")";
      if (rhs.kind != Condition::Kind::Compare) right = "(" + right + ")";
      return left + " AND " + right;
    }
  }
  return {};
}

std::string print_rule(const Rule& rule) {
  std::string out = "WHEN " + print_condition(rule.condition);
  if (rule.for_ticks > 0) out += " FOR " + std::to_string(rule.for_ticks) + " TICKS";
  out += " THEN " + print_action(rule.action);
  if (rule.priority != 0) out += " PRIORITY " + std::to_string(rule.priority);
  return out;
}

void link_rule(Rule& rule, const Registry& registry) {
  RuleLink link;
  std::vector<const Operand*> operands;
  collect_operands(rule.condition, operands);
  std::set<std::string> condition_regions;
  for (const Operand* op : operands) {
    auto info = registry.sensor_for(op->thing, op->property);
    if (!info) {
      throw Error(Errc::UnresolvedReference, "rule " + rule.id + ": no sensor observes " + op->path());
    }
    if (info->value_kind != ValueKind::Float) {
      throw Error(Errc::UnresolvedReference, "rule " + rule.id + ": " + op->path() + " is not numeric");
    }
    link.operands[op->path()] = SeriesKey{info->device_id, info->property};
    condition_regions.insert(info->region);
  }
  if (condition_regions.size() != 1) {
    throw Error(Errc::UnresolvedReference,
                "rule " + rule.id + ": condition operands must be observed in a single region");
  }
  link.home_region = *condition_regions.begin();
  link.regions = condition_regions;
  if (rule.action.kind == RuleAction::Kind::Set) {
    const Device* dev = registry.resolve_device(rule.action.device);
    if (!dev) throw Error(Errc::UnresolvedReference, "rule " + rule.id + ": unknown device '" + rule.action.device + "'");
    auto target = registry.resolve_resource(*dev, rule.action.resource);
    if (!target || target->is_sensor) {
      throw Error(Errc::UnresolvedReference, "rule " + rule.id + ": device '" + rule.action.device +
                                                 "' has no actuator '" + rule.action.resource + "'");
    }
    if (!value_matches(target->value_kind, rule.action.value)) {
      throw Error(Errc::ValueKindMismatch, "rule " + rule.id + ": actuator '" + rule.action.resource +
                                               "' expects a " + to_string(target->value_kind) + " value");
    }
    link.regions.insert(target->region);
    link.target = std::move(target);
  }
  link.linked = true;
  rule.link = std::move(link);
}

std::vector<RuleFileEntry> parse_rule_file(const std::string& content) {
  std::vector<RuleFileEntry> out;
  std::istringstream in(content);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t"));
    if (trimmed.empty() || trimmed[0] == '#') continue;
    RuleFileEntry entry;
    entry.line = number;
    try {
      entry.rule = parse_rule(line, "rule-" + std::to_string(number));
    } catch (const RuleSyntaxError& e) {
      entry.error = RuleSyntaxError(e.code(), number, e.col(), e.expected(),
                                    std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
    }
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace iotarch
