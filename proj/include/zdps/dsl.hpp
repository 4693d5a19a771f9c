#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "zdps/ast.hpp"
#include "zdps/engine.hpp"
#include "zdps/environments.hpp"
#include "zdps/error.hpp"

namespace zdps {

// --- update timing specifications ---------------------------------------

struct TimingSpec {
  enum Kind { Every, Anytime } kind = Anytime;
  enum Unit { Hour, Min, Sec } unit = Sec;
  std::uint64_t n = 1;
  std::string base;  // parsed but ignored in logical time

  bool operator==(const TimingSpec&) const = default;
};

// "every xx (hour|min|sec) [base [yyyy:mm:dd:]hh:mm:ss]" or "anytime".
inline TimingSpec parse_timing(const std::string& s) {
  size_t pos = 0;
  auto skip_ws = [&] { while (pos < s.size() && s[pos] == ' ') ++pos; };
  auto word = [&]() -> std::string {
    skip_ws();
    size_t start = pos;
    while (pos < s.size() && s[pos] != ' ') ++pos;
    return s.substr(start, pos - start);
  };
  auto syntax_error = [&](const std::string& msg) -> void {
    fail(ErrorCode::SyntaxError,
         "timing \"" + s + "\" at offset " + std::to_string(pos) + ": " + msg);
  };

  TimingSpec spec;
  std::string w = word();
  if (w == "anytime") {
    skip_ws();
    if (pos != s.size()) syntax_error("trailing input");
    spec.kind = TimingSpec::Anytime;
    return spec;
  }
  if (w != "every") syntax_error("expected 'every' or 'anytime'");
  spec.kind = TimingSpec::Every;

  std::string num = word();
  if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos)
    syntax_error("expected a number");
  spec.n = std::stoull(num);
  if (spec.n < 1) syntax_error("period must be at least 1");

  std::string unit = word();
  if (unit == "hour") spec.unit = TimingSpec::Hour;
  else if (unit == "min") spec.unit = TimingSpec::Min;
  else if (unit == "sec") spec.unit = TimingSpec::Sec;
  else syntax_error("expected hour, min or sec");

  skip_ws();
  if (pos == s.size()) return spec;
  if (word() != "base") syntax_error("expected 'base'");
  std::string base = word();
  size_t colons = 0;
  for (char c : base) {
    if (c == ':') ++colons;
    else if (c < '0' || c > '9') syntax_error("malformed base time");
  }
  if (colons != 2 && colons != 5) syntax_error("malformed base time");
  spec.base = base;
  skip_ws();
  if (pos != s.size()) syntax_error("trailing input");
  return spec;
}

inline std::uint64_t timing_to_ticks(const TimingSpec& spec,
                                     std::uint64_t tick_seconds) {
  if (spec.kind == TimingSpec::Anytime) return 1;
  std::uint64_t unit_s = spec.unit == TimingSpec::Hour ? 3600
                         : spec.unit == TimingSpec::Min ? 60
                                                        : 1;
  std::uint64_t period = spec.n * unit_s;
  if (period % tick_seconds != 0)
    fail(ErrorCode::IndivisiblePeriod,
         std::to_string(period) + "s is not a multiple of the " +
             std::to_string(tick_seconds) + "s tick");
  return period / tick_seconds;
}

// --- surface syntax -------------------------------------------------------

class SurfaceExpr;
using SurfacePtr = std::shared_ptr<const SurfaceExpr>;

struct SLiteral {  // number or quoted string, interned as an identifier
  std::string text;
  bool quoted = false;
};
struct SName {
  std::string name;
};
struct SCall {
  std::string name;
  std::vector<SurfacePtr> args;
};
struct SDot {
  SurfacePtr recv;
  std::string member;
};
struct SDotCall {
  SurfacePtr recv;
  std::string member;
  std::vector<SurfacePtr> args;
};
struct SNew {
  std::string class_name;
  std::string id;
  std::vector<SurfacePtr> args;
};
struct SSetUpstreams {
  std::string recv;
  std::vector<SurfacePtr> args;
};

class SurfaceExpr {
 public:
  using Data =
      std::variant<SLiteral, SName, SCall, SDot, SDotCall, SNew, SSetUpstreams>;
  explicit SurfaceExpr(Data d) : data_(std::move(d)) {}
  const Data& data() const { return data_; }

 private:
  Data data_;
};

template <typename T>
SurfacePtr make_surface(T&& payload) {
  return std::make_shared<const SurfaceExpr>(
      SurfaceExpr::Data(std::forward<T>(payload)));
}

inline bool surface_equal(const SurfacePtr& a, const SurfacePtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  const auto& da = a->data();
  const auto& db = b->data();
  if (da.index() != db.index()) return false;
  if (const auto* x = std::get_if<SLiteral>(&da)) {
    const auto& y = std::get<SLiteral>(db);
    return x->text == y.text && x->quoted == y.quoted;
  }
  if (const auto* x = std::get_if<SName>(&da))
    return x->name == std::get<SName>(db).name;
  auto args_equal = [](const std::vector<SurfacePtr>& xs,
                       const std::vector<SurfacePtr>& ys) {
    if (xs.size() != ys.size()) return false;
    for (size_t i = 0; i < xs.size(); ++i)
      if (!surface_equal(xs[i], ys[i])) return false;
    return true;
  };
  if (const auto* x = std::get_if<SCall>(&da)) {
    const auto& y = std::get<SCall>(db);
    return x->name == y.name && args_equal(x->args, y.args);
  }
  if (const auto* x = std::get_if<SDot>(&da)) {
    const auto& y = std::get<SDot>(db);
    return x->member == y.member && surface_equal(x->recv, y.recv);
  }
  if (const auto* x = std::get_if<SDotCall>(&da)) {
    const auto& y = std::get<SDotCall>(db);
    return x->member == y.member && surface_equal(x->recv, y.recv) &&
           args_equal(x->args, y.args);
  }
  if (const auto* x = std::get_if<SNew>(&da)) {
    const auto& y = std::get<SNew>(db);
    return x->class_name == y.class_name && x->id == y.id &&
           args_equal(x->args, y.args);
  }
  const auto& x = std::get<SSetUpstreams>(da);
  const auto& y = std::get<SSetUpstreams>(db);
  return x.recv == y.recv && args_equal(x.args, y.args);
}

struct MethodDecl {
  std::string name;
  SurfacePtr body;

  bool operator==(const MethodDecl& o) const {
    return name == o.name && surface_equal(body, o.body);
  }
};

struct SignalDecl {
  std::string name;
  std::string type;  // optional surface type word, informational only
  SurfacePtr body;   // null for persistent signals without an initializer

  bool operator==(const SignalDecl& o) const {
    return name == o.name && type == o.type && surface_equal(body, o.body);
  }
};

struct SignalClassDecl {
  std::string name;
  JoinKind mode = JoinKind::Union;  // default is union
  bool mode_declared = false;
  std::optional<TimingSpec> timing;
  std::optional<std::uint64_t> checkpoint_interval_s;
  std::vector<SignalDecl> persistent_signals;
  std::vector<SignalDecl> derived_signals;
  std::vector<std::pair<std::string, std::string>> upstream_fields;  // slot, class
  std::vector<MethodDecl> methods;

  bool operator==(const SignalClassDecl&) const = default;

  bool has_member(const std::string& n) const {
    for (const auto& s : persistent_signals)
      if (s.name == n) return true;
    for (const auto& s : derived_signals)
      if (s.name == n) return true;
    for (const auto& [slot, cls] : upstream_fields)
      if (slot == n) return true;
    for (const auto& m : methods)
      if (m.name == n) return true;
    return false;
  }
  const std::string* slot_class(const std::string& slot) const {
    for (const auto& [s, c] : upstream_fields)
      if (s == slot) return &c;
    return nullptr;
  }
  bool is_signal(const std::string& n) const {
    for (const auto& s : persistent_signals)
      if (s.name == n) return true;
    for (const auto& s : derived_signals)
      if (s.name == n) return true;
    return false;
  }
  bool is_method(const std::string& n) const {
    for (const auto& m : methods)
      if (m.name == n) return true;
    return false;
  }
};

struct Statement {
  bool is_let = false;
  std::string var;  // let target, empty for expression statements
  SurfacePtr expr;

  bool operator==(const Statement& o) const {
    return is_let == o.is_let && var == o.var && surface_equal(expr, o.expr);
  }
};

struct ParsedProgram {
  std::vector<SignalClassDecl> classes;
  std::vector<Statement> script;

  bool operator==(const ParsedProgram&) const = default;

  const SignalClassDecl* find_class(const std::string& n) const {
    for (const auto& c : classes)
      if (c.name == n) return &c;
    return nullptr;
  }
};

// --- tokenizer ------------------------------------------------------------

namespace detail {

struct Token {
  enum Kind { Ident, Number, Str, Punct, End } kind = End;
  std::string text;
  size_t offset = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorCode::SyntaxError,
         msg + " at offset " + std::to_string(tok_.offset));
  }

 private:
  void advance() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
        continue;
      }
      if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
        continue;
      }
      break;
    }
    tok_.offset = pos_;
    if (pos_ >= src_.size()) {
      tok_ = {Token::End, "", pos_};
      return;
    }
    char c = src_[pos_];
    if (isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (isalnum(static_cast<unsigned char>(src_[pos_])) ||
              src_[pos_] == '_'))
        ++pos_;
      tok_ = {Token::Ident, src_.substr(start, pos_ - start), start};
      return;
    }
    if (isdigit(static_cast<unsigned char>(c))) {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             isdigit(static_cast<unsigned char>(src_[pos_])))
        ++pos_;
      tok_ = {Token::Number, src_.substr(start, pos_ - start), start};
      return;
    }
    if (c == '"') {
      size_t start = ++pos_;
      while (pos_ < src_.size() && src_[pos_] != '"') ++pos_;
      if (pos_ >= src_.size())
        fail(ErrorCode::SyntaxError,
             "unterminated string at offset " + std::to_string(start - 1));
      tok_ = {Token::Str, src_.substr(start, pos_ - start), start - 1};
      ++pos_;
      return;
    }
    tok_ = {Token::Punct, std::string(1, c), pos_};
    ++pos_;
  }

  const std::string& src_;
  size_t pos_ = 0;
  Token tok_;
};

}  // namespace detail

// --- parser -----------------------------------------------------------------

namespace detail {

class ProgramParser {
 public:
  explicit ProgramParser(const std::string& src) : lex_(src) {}

  ParsedProgram parse() {
    ParsedProgram prog;
    while (lex_.peek().kind != Token::End) {
      if (lex_.peek().kind == Token::Ident && lex_.peek().text == "main") {
        lex_.take();
        expect_punct("{");
        while (!try_punct("}")) prog.script.push_back(parse_statement());
        continue;
      }
      prog.classes.push_back(parse_class());
    }
    validate(prog);
    return prog;
  }

 private:
  void expect_punct(const std::string& p) {
    if (lex_.peek().kind != Token::Punct || lex_.peek().text != p)
      lex_.error("expected '" + p + "'");
    lex_.take();
  }
  bool try_punct(const std::string& p) {
    if (lex_.peek().kind == Token::Punct && lex_.peek().text == p) {
      lex_.take();
      return true;
    }
    return false;
  }
  std::string expect_ident() {
    if (lex_.peek().kind != Token::Ident) lex_.error("expected an identifier");
    return lex_.take().text;
  }
  std::string expect_keyword(const std::string& kw) {
    if (lex_.peek().kind != Token::Ident || lex_.peek().text != kw)
      lex_.error("expected '" + kw + "'");
    return lex_.take().text;
  }

  SignalClassDecl parse_class() {
    SignalClassDecl decl;
    while (try_punct("@")) {
      std::string ann = expect_ident();
      expect_punct("(");
      if (ann == "timing") {
        if (lex_.peek().kind != Token::Str) lex_.error("expected a string");
        decl.timing = parse_timing(lex_.take().text);
      } else if (ann == "mode") {
        if (lex_.peek().kind != Token::Str) lex_.error("expected a string");
        std::string m = lex_.take().text;
        if (m == "union") decl.mode = JoinKind::Union;
        else if (m == "intersection") decl.mode = JoinKind::Intersection;
        else lex_.error("mode must be union or intersection");
        decl.mode_declared = true;
      } else if (ann == "checkpointInterval") {
        if (lex_.peek().kind != Token::Number) lex_.error("expected a number");
        decl.checkpoint_interval_s = std::stoull(lex_.take().text);
      } else {
        lex_.error("unknown annotation @" + ann);
      }
      expect_punct(")");
    }
    expect_keyword("signal");
    expect_keyword("class");
    decl.name = expect_ident();
    expect_punct("{");
    while (!try_punct("}")) parse_member(decl);
    return decl;
  }

  static bool is_type_word(const std::string& w) {
    return w == "int" || w == "double" || w == "boolean" || w == "String" ||
           w == "long" || w == "float";
  }

  void parse_member(SignalClassDecl& decl) {
    std::string first = expect_ident();
    if (first == "persistent") {
      expect_keyword("signal");
      parse_signal_decls(decl, /*persistent=*/true);
      return;
    }
    if (first == "signal") {
      parse_signal_decls(decl, /*persistent=*/false);
      return;
    }
    // either an upstream field `Class slot;` or a method `name() { body }`
    if (lex_.peek().kind == Token::Ident) {
      std::string slot = lex_.take().text;
      expect_punct(";");
      decl.upstream_fields.emplace_back(slot, first);
      return;
    }
    expect_punct("(");
    expect_punct(")");
    expect_punct("{");
    SurfacePtr body = parse_expr();
    expect_punct("}");
    decl.methods.push_back({first, std::move(body)});
  }

  void parse_signal_decls(SignalClassDecl& decl, bool persistent) {
    std::string type;
    if (lex_.peek().kind == Token::Ident && is_type_word(lex_.peek().text))
      type = lex_.take().text;
    for (;;) {
      SignalDecl sig;
      sig.type = type;
      sig.name = expect_ident();
      if (try_punct("=")) sig.body = parse_expr();
      if (!persistent && !sig.body) lex_.error("derived signal needs a body");
      (persistent ? decl.persistent_signals : decl.derived_signals)
          .push_back(std::move(sig));
      if (try_punct(";")) return;
      expect_punct(",");
    }
  }

  Statement parse_statement() {
    Statement st;
    if (lex_.peek().kind == Token::Ident && lex_.peek().text == "let") {
      lex_.take();
      st.is_let = true;
      st.var = expect_ident();
      expect_punct("=");
      st.expr = parse_expr();
      if (!std::holds_alternative<SNew>(st.expr->data()))
        lex_.error("let binds the result of 'new'");
      expect_punct(";");
      return st;
    }
    st.expr = parse_expr();
    expect_punct(";");
    return st;
  }

  std::vector<SurfacePtr> parse_args() {
    std::vector<SurfacePtr> args;
    expect_punct("(");
    if (try_punct(")")) return args;
    for (;;) {
      args.push_back(parse_expr());
      if (try_punct(")")) return args;
      expect_punct(",");
    }
  }

  SurfacePtr parse_primary() {
    const Token& t = lex_.peek();
    if (t.kind == Token::Number) return make_surface(SLiteral{lex_.take().text, false});
    if (t.kind == Token::Str) return make_surface(SLiteral{lex_.take().text, true});
    if (t.kind != Token::Ident) lex_.error("expected an expression");
    std::string name = lex_.take().text;
    if (name == "new") {
      SNew n;
      n.class_name = expect_ident();
      expect_punct("(");
      if (lex_.peek().kind != Token::Str)
        lex_.error("new expects a string instance id");
      n.id = lex_.take().text;
      while (try_punct(",")) n.args.push_back(parse_expr());
      expect_punct(")");
      return make_surface(std::move(n));
    }
    if (lex_.peek().kind == Token::Punct && lex_.peek().text == "(")
      return make_surface(SCall{name, parse_args()});
    return make_surface(SName{name});
  }

  SurfacePtr parse_expr() {
    SurfacePtr e = parse_primary();
    while (try_punct(".")) {
      std::string member = expect_ident();
      if (lex_.peek().kind == Token::Punct && lex_.peek().text == "(") {
        if (member == "setUpstreams") {
          const auto* n = std::get_if<SName>(&e->data());
          if (!n) lex_.error("setUpstreams needs a named receiver");
          e = make_surface(SSetUpstreams{n->name, parse_args()});
        } else {
          e = make_surface(SDotCall{e, member, parse_args()});
        }
      } else {
        e = make_surface(SDot{e, member});
      }
    }
    return e;
  }

  void validate(const ParsedProgram& prog) {
    std::set<std::string> class_names;
    for (const auto& c : prog.classes) {
      if (!class_names.insert(c.name).second)
        fail(ErrorCode::SyntaxError, "duplicate class " + c.name);
      std::set<std::string> members;
      auto add = [&](const std::string& n) {
        if (!members.insert(n).second)
          fail(ErrorCode::SyntaxError,
               "duplicate member " + n + " in class " + c.name);
      };
      for (const auto& s : c.persistent_signals) add(s.name);
      for (const auto& s : c.derived_signals) add(s.name);
      for (const auto& [slot, cls] : c.upstream_fields) add(slot);
      for (const auto& m : c.methods) add(m.name);
    }
  }

  Lexer lex_;
};

}  // namespace detail

inline ParsedProgram parse_program(const std::string& src) {
  return detail::ProgramParser(src).parse();
}

// --- printing (round-trip support) ---------------------------------------

inline std::string to_string(const SurfacePtr& e) {
  const auto& d = e->data();
  if (const auto* x = std::get_if<SLiteral>(&d))
    return x->quoted ? "\"" + x->text + "\"" : x->text;
  if (const auto* x = std::get_if<SName>(&d)) return x->name;
  auto args_str = [](const std::vector<SurfacePtr>& args) {
    std::string out = "(";
    for (size_t i = 0; i < args.size(); ++i) {
      if (i) out += ", ";
      out += to_string(args[i]);
    }
    return out + ")";
  };
  if (const auto* x = std::get_if<SCall>(&d)) return x->name + args_str(x->args);
  if (const auto* x = std::get_if<SDot>(&d))
    return to_string(x->recv) + "." + x->member;
  if (const auto* x = std::get_if<SDotCall>(&d))
    return to_string(x->recv) + "." + x->member + args_str(x->args);
  if (const auto* x = std::get_if<SNew>(&d)) {
    std::string out = "new " + x->class_name + "(\"" + x->id + "\"";
    for (const auto& a : x->args) out += ", " + to_string(a);
    return out + ")";
  }
  const auto& x = std::get<SSetUpstreams>(d);
  return x.recv + ".setUpstreams" + args_str(x.args);
}

inline std::string timing_to_text(const TimingSpec& spec) {
  if (spec.kind == TimingSpec::Anytime) return "anytime";
  std::string unit = spec.unit == TimingSpec::Hour ? "hour"
                     : spec.unit == TimingSpec::Min ? "min"
                                                    : "sec";
  std::string out = "every " + std::to_string(spec.n) + " " + unit;
  if (!spec.base.empty()) out += " base " + spec.base;
  return out;
}

inline std::string print_program(const ParsedProgram& prog) {
  std::string out;
  for (const auto& c : prog.classes) {
    if (c.timing)
      out += "@timing(\"" + timing_to_text(*c.timing) + "\")\n";
    if (c.mode_declared)
      out += std::string("@mode(\"") +
             (c.mode == JoinKind::Union ? "union" : "intersection") + "\")\n";
    if (c.checkpoint_interval_s)
      out += "@checkpointInterval(" + std::to_string(*c.checkpoint_interval_s) +
             ")\n";
    out += "signal class " + c.name + " {\n";
    for (const auto& [slot, cls] : c.upstream_fields)
      out += "  " + cls + " " + slot + ";\n";
    for (const auto& s : c.persistent_signals) {
      out += "  persistent signal " + (s.type.empty() ? "" : s.type + " ") +
             s.name;
      if (s.body) out += " = " + to_string(s.body);
      out += ";\n";
    }
    for (const auto& s : c.derived_signals)
      out += "  signal " + (s.type.empty() ? "" : s.type + " ") + s.name +
             " = " + to_string(s.body) + ";\n";
    for (const auto& m : c.methods)
      out += "  " + m.name + "() { " + to_string(m.body) + " }\n";
    out += "}\n";
  }
  if (!prog.script.empty()) {
    out += "main {\n";
    for (const auto& st : prog.script) {
      out += "  ";
      if (st.is_let) out += "let " + st.var + " = ";
      out += to_string(st.expr) + ";\n";
    }
    out += "}\n";
  }
  return out;
}

// --- annotation inference and checking ------------------------------------

// Per-class update pace in ticks: declared timings are converted and checked,
// missing ones inferred from the upstream classes through the join mode.
inline std::map<std::string, std::uint64_t> infer_and_check_annotations(
    const ParsedProgram& prog, std::uint64_t tick_seconds) {
  std::map<std::string, std::uint64_t> tm;
  std::map<std::string, bool> visiting;

  auto rec = [&](auto&& self, const SignalClassDecl& c) -> std::uint64_t {
    auto it = tm.find(c.name);
    if (it != tm.end()) return it->second;
    if (visiting[c.name])
      fail(ErrorCode::CyclicWiring, "class wiring cycle through " + c.name);
    visiting[c.name] = true;

    std::vector<std::uint64_t> upstream;
    for (const auto& [slot, cls] : c.upstream_fields) {
      const SignalClassDecl* up = prog.find_class(cls);
      if (!up) fail(ErrorCode::UnknownClass, cls + " (upstream of " + c.name + ")");
      upstream.push_back(self(self, *up));
    }

    std::uint64_t inferred;
    if (upstream.empty()) {
      // no upstream classes: the default annotation is "anytime"
      inferred = c.timing ? timing_to_ticks(*c.timing, tick_seconds) : 1;
    } else {
      inferred = c.mode == JoinKind::Union ? gcd_of(upstream)
                                           : lcm_of(upstream);
      if (c.timing) {
        std::uint64_t declared = timing_to_ticks(*c.timing, tick_seconds);
        if (declared != inferred)
          fail(ErrorCode::AnnotationError,
               c.name + ": declared pace " + std::to_string(declared) +
                   " ticks, upstream classes require " +
                   std::to_string(inferred));
      }
    }
    visiting[c.name] = false;
    tm[c.name] = inferred;
    return inferred;
  };

  for (const auto& c : prog.classes) rec(rec, c);
  return tm;
}

// --- lowering ---------------------------------------------------------------

struct LoweredProgram {
  IdentEnv mu0;
  ProcEnv nu0;
  SwitchHistory phi0;  // single snapshot (0, nu0)
  Expression e0;
  std::map<Ident, std::optional<std::uint64_t>> checkpoint_intervals;
  std::map<Ident, std::string> instance_class;
};

namespace detail {

struct LowerCtx {
  const ParsedProgram& prog;
  const std::map<std::string, std::uint64_t>& class_tm;
  std::uint64_t tick_seconds;
  LoweredProgram out;
  std::map<std::string, std::pair<Ident, std::string>> vars;  // var -> (id, class)
};

inline const Ident kInitValue{"l_init"};

// Fold a resolved constant expression (identifiers and combinators of
// constants) to its identifier; nothing for anything that reads state.
inline std::optional<Ident> const_value(const Expression& e) {
  if (e.is_value()) return e.as_ident();
  if (const auto* c = std::get_if<CombineExpr>(&e.data())) {
    CombineExpr folded;
    folded.op = c->op;
    for (const auto& a : c->args) {
      auto v = const_value(Expression(a));
      if (!v) return std::nullopt;
      folded.args.push_back(Expression::id(*v).node());
    }
    return fold_combine(folded);
  }
  return std::nullopt;
}

struct Resolved {
  Expression expr;
  std::string cls;  // instance class when statically known
};

// Resolve a surface expression inside a class body. `self` is the receiver
// the member reads go through: the instance id for signal bodies, the bound
// self variable for method bodies.
inline Resolved resolve_in_class(const LowerCtx& ctx,
                                 const SignalClassDecl& cls,
                                 const Expression& self, const SurfacePtr& e);

inline std::vector<Expression> resolve_args_in_class(
    const LowerCtx& ctx, const SignalClassDecl& cls, const Expression& self,
    const std::vector<SurfacePtr>& args) {
  std::vector<Expression> out;
  out.reserve(args.size());
  for (const auto& a : args)
    out.push_back(resolve_in_class(ctx, cls, self, a).expr);
  return out;
}

inline Resolved resolve_in_class(const LowerCtx& ctx,
                                 const SignalClassDecl& cls,
                                 const Expression& self, const SurfacePtr& e) {
  const auto& d = e->data();
  if (const auto* lit = std::get_if<SLiteral>(&d))
    return {Expression::id(lit->text), ""};
  if (const auto* n = std::get_if<SName>(&d)) {
    if (const std::string* slot_cls = cls.slot_class(n->name))
      return {Expression::field_upstream(self, n->name), *slot_cls};
    if (cls.is_signal(n->name))
      return {Expression::field_signal(self, n->name), ""};
    if (cls.is_method(n->name))
      return {Expression::method_access(self, n->name), ""};
    return {Expression::id(n->name), ""};
  }
  if (const auto* call = std::get_if<SCall>(&d)) {
    if (call->args.empty() && cls.is_method(call->name))
      return {Expression::method_access(self, call->name), ""};
    return {Expression::combine(call->name, resolve_args_in_class(
                                                ctx, cls, self, call->args)),
            ""};
  }
  if (const auto* dot = std::get_if<SDot>(&d)) {
    Resolved recv = resolve_in_class(ctx, cls, self, dot->recv);
    if (recv.cls.empty())
      fail(ErrorCode::SyntaxError,
           "cannot resolve ." + dot->member + ": receiver class unknown");
    const SignalClassDecl* rc = ctx.prog.find_class(recv.cls);
    if (!rc) fail(ErrorCode::UnknownClass, recv.cls);
    if (const std::string* slot_cls = rc->slot_class(dot->member))
      return {Expression::field_upstream(recv.expr, dot->member), *slot_cls};
    if (rc->is_signal(dot->member))
      return {Expression::field_signal(recv.expr, dot->member), ""};
    if (rc->is_method(dot->member))
      return {Expression::method_access(recv.expr, dot->member), ""};
    fail(ErrorCode::SyntaxError,
         recv.cls + " has no member " + dot->member);
  }
  if (const auto* dc = std::get_if<SDotCall>(&d)) {
    Resolved recv = resolve_in_class(ctx, cls, self, dc->recv);
    std::vector<Expression> args{recv.expr};
    for (const auto& a : dc->args)
      args.push_back(resolve_in_class(ctx, cls, self, a).expr);
    return {Expression::combine(dc->member, std::move(args)), ""};
  }
  fail(ErrorCode::SyntaxError,
       "new/setUpstreams are not allowed inside class bodies");
}

// The signal columns of a class: persistent first, then derived, in
// declaration order. This is both the relation schema and the effect order.
inline std::vector<const SignalDecl*> signal_columns(
    const SignalClassDecl& cls) {
  std::vector<const SignalDecl*> cols;
  for (const auto& s : cls.persistent_signals) cols.push_back(&s);
  for (const auto& s : cls.derived_signals) cols.push_back(&s);
  return cols;
}

inline Expression object_literal_for(const LowerCtx& ctx,
                                     const SignalClassDecl& cls,
                                     const Ident& id,
                                     std::vector<Expression> slot_values) {
  Expression self = Expression::id(id);
  std::vector<std::pair<std::string, Expression>> signals;
  for (const SignalDecl* s : signal_columns(cls)) {
    Expression body = s->body
                          ? resolve_in_class(ctx, cls, self, s->body).expr
                          : Expression::id(kInitValue);
    signals.emplace_back(s->name, std::move(body));
  }
  std::vector<std::pair<std::string, Expression>> upstreams;
  for (size_t i = 0; i < cls.upstream_fields.size(); ++i)
    upstreams.emplace_back(cls.upstream_fields[i].first,
                           std::move(slot_values[i]));
  std::vector<Method> methods;
  for (const auto& m : cls.methods) {
    Expression body =
        resolve_in_class(ctx, cls, Expression::var("x"), m.body).expr;
    methods.push_back(make_method(m.name, "x", std::move(body)));
  }
  return Expression::object(id, std::move(signals), std::move(upstreams),
                            std::move(methods));
}

// Pre-register a resolver entry for an instance: relation schema from the
// class columns, bottom row from constant bodies (l_init otherwise).
inline void register_instance(LowerCtx& ctx, const SignalClassDecl& cls,
                              const Ident& id) {
  if (ctx.out.mu0.contains(id)) fail(ErrorCode::DuplicateId, id.name);
  std::vector<std::string> schema;
  IdentList bottom;
  Expression self = Expression::id(id);
  for (const SignalDecl* s : signal_columns(cls)) {
    schema.push_back(s->name);
    std::optional<Ident> init;
    if (s->body)
      init = const_value(resolve_in_class(ctx, cls, self, s->body).expr);
    bottom.push_back(init ? *init : kInitValue);
  }
  ResolverEntry entry;
  entry.relation = Relation(std::move(schema), std::move(bottom));
  entry.tm = ctx.class_tm.at(cls.name);
  entry.mode = cls.mode;
  ctx.out.mu0.entries.emplace(id, std::move(entry));
  ctx.out.instance_class[id] = cls.name;
  std::optional<std::uint64_t> cp_ticks;
  if (cls.checkpoint_interval_s) {
    if (*cls.checkpoint_interval_s % ctx.tick_seconds != 0)
      fail(ErrorCode::IndivisiblePeriod,
           "checkpoint interval of " + cls.name +
               " is not a multiple of the tick");
    cp_ticks = *cls.checkpoint_interval_s / ctx.tick_seconds;
  }
  ctx.out.checkpoint_intervals[id] = cp_ticks;
}

// Walk a surface expression registering every `new` it contains, outermost
// last so duplicate ids are reported on the later occurrence.
inline void register_news(LowerCtx& ctx, const SurfacePtr& e) {
  const auto& d = e->data();
  if (const auto* n = std::get_if<SNew>(&d)) {
    const SignalClassDecl* cls = ctx.prog.find_class(n->class_name);
    if (!cls) fail(ErrorCode::UnknownClass, n->class_name);
    for (const auto& a : n->args) register_news(ctx, a);
    register_instance(ctx, *cls, Ident(n->id));
    return;
  }
  if (const auto* c = std::get_if<SCall>(&d))
    for (const auto& a : c->args) register_news(ctx, a);
  if (const auto* dot = std::get_if<SDot>(&d)) register_news(ctx, dot->recv);
  if (const auto* dc = std::get_if<SDotCall>(&d)) {
    register_news(ctx, dc->recv);
    for (const auto& a : dc->args) register_news(ctx, a);
  }
  if (const auto* su = std::get_if<SSetUpstreams>(&d))
    for (const auto& a : su->args) register_news(ctx, a);
}

// Resolve a script expression. `instantiate` evaluates object literals on
// the spot (top-level lets build the initial network off-stage); otherwise
// news stay as literals for the driver to reduce.
inline Resolved resolve_in_script(LowerCtx& ctx, const SurfacePtr& e,
                                  bool instantiate);

inline Expression instantiate_new(LowerCtx& ctx, const SNew& n) {
  const SignalClassDecl* cls = ctx.prog.find_class(n.class_name);
  if (!cls) fail(ErrorCode::UnknownClass, n.class_name);
  if (n.args.size() != cls->upstream_fields.size())
    fail(ErrorCode::ArityMismatch,
         "new " + n.class_name + " expects " +
             std::to_string(cls->upstream_fields.size()) + " upstreams");
  std::vector<Expression> slots;
  for (size_t i = 0; i < n.args.size(); ++i) {
    Resolved arg = resolve_in_script(ctx, n.args[i], /*instantiate=*/true);
    if (arg.cls != cls->upstream_fields[i].second)
      fail(ErrorCode::UnknownClass,
           "upstream " + cls->upstream_fields[i].first + " of " +
               n.class_name + " expects " + cls->upstream_fields[i].second);
    slots.push_back(arg.expr);
  }
  Ident id(n.id);
  Expression literal = object_literal_for(ctx, *cls, id, std::move(slots));
  const auto& o = std::get<ObjectExpr>(literal.data());
  Process p = build_process(ctx.out.mu0, o);
  for (const auto& in : p.join.inputs)
    if (!ctx.out.nu0.contains(in))
      fail(ErrorCode::UnknownId, "upstream " + in.name + " unbound");
  ctx.out.nu0.bindings.insert_or_assign(id, std::move(p));
  if (!check_acyclic(ctx.out.nu0))
    fail(ErrorCode::CyclicSwitch, "instantiating " + n.id + " makes a cycle");
  return Expression::id(id);
}

inline Resolved resolve_in_script(LowerCtx& ctx, const SurfacePtr& e,
                                  bool instantiate) {
  const auto& d = e->data();
  if (const auto* lit = std::get_if<SLiteral>(&d))
    return {Expression::id(lit->text), ""};
  if (const auto* n = std::get_if<SName>(&d)) {
    auto it = ctx.vars.find(n->name);
    if (it != ctx.vars.end())
      return {Expression::id(it->second.first), it->second.second};
    return {Expression::id(n->name), ""};
  }
  if (const auto* nw = std::get_if<SNew>(&d)) {
    if (instantiate)
      return {instantiate_new(ctx, *nw), nw->class_name};
    const SignalClassDecl* cls = ctx.prog.find_class(nw->class_name);
    if (!cls) fail(ErrorCode::UnknownClass, nw->class_name);
    if (nw->args.size() != cls->upstream_fields.size())
      fail(ErrorCode::ArityMismatch,
           "new " + nw->class_name + " expects " +
               std::to_string(cls->upstream_fields.size()) + " upstreams");
    std::vector<Expression> slots;
    for (size_t i = 0; i < nw->args.size(); ++i) {
      Resolved arg = resolve_in_script(ctx, nw->args[i], false);
      if (arg.cls != cls->upstream_fields[i].second)
        fail(ErrorCode::UnknownClass,
             "upstream " + cls->upstream_fields[i].first + " of " +
                 nw->class_name + " expects " +
                 cls->upstream_fields[i].second);
      slots.push_back(arg.expr);
    }
    return {object_literal_for(ctx, *cls, Ident(nw->id), std::move(slots)),
            nw->class_name};
  }
  if (const auto* su = std::get_if<SSetUpstreams>(&d)) {
    auto it = ctx.vars.find(su->recv);
    if (it == ctx.vars.end())
      fail(ErrorCode::SyntaxError, "unknown variable " + su->recv);
    const SignalClassDecl* cls = ctx.prog.find_class(it->second.second);
    if (su->args.size() != cls->upstream_fields.size())
      fail(ErrorCode::ArityMismatch,
           su->recv + ".setUpstreams expects " +
               std::to_string(cls->upstream_fields.size()) + " arguments");
    std::vector<Expression> args;
    for (size_t i = 0; i < su->args.size(); ++i) {
      Resolved arg = resolve_in_script(ctx, su->args[i], false);
      if (arg.cls != cls->upstream_fields[i].second)
        fail(ErrorCode::UnknownClass,
             "upstream " + cls->upstream_fields[i].first + " expects " +
                 cls->upstream_fields[i].second);
      args.push_back(arg.expr);
    }
    return {Expression::setu(Expression::id(it->second.first),
                             std::move(args)),
            it->second.second};
  }
  if (const auto* dot = std::get_if<SDot>(&d)) {
    Resolved recv = resolve_in_script(ctx, dot->recv, false);
    if (recv.cls.empty())
      fail(ErrorCode::SyntaxError,
           "cannot resolve ." + dot->member + ": receiver class unknown");
    const SignalClassDecl* rc = ctx.prog.find_class(recv.cls);
    if (const std::string* slot_cls = rc->slot_class(dot->member))
      return {Expression::field_upstream(recv.expr, dot->member), *slot_cls};
    if (rc->is_signal(dot->member))
      return {Expression::field_signal(recv.expr, dot->member), ""};
    if (rc->is_method(dot->member))
      return {Expression::method_access(recv.expr, dot->member), ""};
    fail(ErrorCode::SyntaxError, recv.cls + " has no member " + dot->member);
  }
  if (const auto* dc = std::get_if<SDotCall>(&d)) {
    Resolved recv = resolve_in_script(ctx, dc->recv, false);
    std::vector<Expression> args{recv.expr};
    for (const auto& a : dc->args)
      args.push_back(resolve_in_script(ctx, a, false).expr);
    return {Expression::combine(dc->member, std::move(args)), ""};
  }
  const auto& call = std::get<SCall>(d);
  std::vector<Expression> args;
  for (const auto& a : call.args)
    args.push_back(resolve_in_script(ctx, a, false).expr);
  return {Expression::combine(call.name, std::move(args)), ""};
}

}  // namespace detail

// Lower the program: register every instance in the resolver, build the
// initial network from the top-level lets, and turn the remaining statements
// into the driver expression.
inline LoweredProgram lower(const ParsedProgram& prog,
                            std::uint64_t tick_seconds) {
  auto class_tm = infer_and_check_annotations(prog, tick_seconds);
  detail::LowerCtx ctx{prog, class_tm, tick_seconds, {}, {}};

  for (const auto& st : prog.script) detail::register_news(ctx, st.expr);

  std::vector<Expression> driver;
  Ident last_instance;
  for (const auto& st : prog.script) {
    if (st.is_let) {
      const auto& n = std::get<SNew>(st.expr->data());
      detail::Resolved r = detail::resolve_in_script(ctx, st.expr, true);
      ctx.vars[st.var] = {r.expr.as_ident(), n.class_name};
      last_instance = r.expr.as_ident();
      continue;
    }
    driver.push_back(detail::resolve_in_script(ctx, st.expr, false).expr);
  }

  if (driver.empty()) {
    if (last_instance.name.empty())
      fail(ErrorCode::SyntaxError, "main block is empty");
    ctx.out.e0 = Expression::id(last_instance);
  } else if (driver.size() == 1) {
    ctx.out.e0 = driver[0];
  } else {
    ctx.out.e0 = Expression::combine("seq", std::move(driver));
  }

  ctx.out.phi0 =
      history_record(SwitchHistory{}, Timestamp::at(0), ctx.out.nu0);
  return std::move(ctx.out);
}

inline MachineState initial_state(const LoweredProgram& lp) {
  MachineState s;
  s.mu = lp.mu0;
  s.nu = lp.nu0;
  s.phi = lp.phi0;
  s.t = Timestamp::at(0);
  s.expr = lp.e0;
  return s;
}

}  // namespace zdps
