#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "zdps/error.hpp"
#include "zdps/ident.hpp"

namespace zdps {

// The term language. Expressions are immutable trees shared by pointer;
// copies are cheap and all operations are referentially transparent.
//
//   e ::= x | e.p | e.s | e.m | l[p=e.., s=e.., m=z(x)e..] | e.setu(e..)
//       | l | op(e..)
//
// The opaque combinator op(e..) models uninterpreted value constructors
// (arithmetic, aggregation) from the surface language: once every argument is
// an identifier it folds to an identifier derived deterministically from the
// operator name and argument names.

class Expression;

struct Method {
  std::string name;
  std::string self_var;
  Expression body() const;
  std::shared_ptr<const class ExprNode> body_node;

  bool operator==(const Method& o) const;
};

struct VarExpr {
  std::string name;
};

// e.p / e.s / e.m share one node shape; `kind` picks the member namespace.
enum class AccessKind { Signal, Upstream, Method };

struct AccessExpr {
  AccessKind kind;
  std::shared_ptr<const ExprNode> recv;
  std::string member;
};

struct ObjectExpr {
  Ident label;
  std::vector<std::pair<std::string, std::shared_ptr<const ExprNode>>> signals;
  std::vector<std::pair<std::string, std::shared_ptr<const ExprNode>>>
      upstreams;
  std::vector<Method> methods;
};

struct SetUpstreamsExpr {
  std::shared_ptr<const ExprNode> recv;
  std::vector<std::shared_ptr<const ExprNode>> args;
};

struct IdExpr {
  Ident id;
};

struct CombineExpr {
  std::string op;
  std::vector<std::shared_ptr<const ExprNode>> args;
};

class ExprNode {
 public:
  using Data = std::variant<VarExpr, AccessExpr, ObjectExpr, SetUpstreamsExpr,
                            IdExpr, CombineExpr>;

  explicit ExprNode(Data d) : data_(std::move(d)) {}
  const Data& data() const { return data_; }

 private:
  Data data_;
};

class Expression {
 public:
  Expression() : node_(nullptr) {}
  explicit Expression(std::shared_ptr<const ExprNode> n)
      : node_(std::move(n)) {}

  static Expression var(std::string x) {
    return make(VarExpr{std::move(x)});
  }
  static Expression id(Ident l) { return make(IdExpr{std::move(l)}); }
  static Expression id(std::string l) {
    return make(IdExpr{Ident(std::move(l))});
  }
  static Expression field_signal(Expression recv, std::string p) {
    return make(AccessExpr{AccessKind::Signal, recv.node_, std::move(p)});
  }
  static Expression field_upstream(Expression recv, std::string s) {
    return make(AccessExpr{AccessKind::Upstream, recv.node_, std::move(s)});
  }
  static Expression method_access(Expression recv, std::string m) {
    return make(AccessExpr{AccessKind::Method, recv.node_, std::move(m)});
  }
  static Expression object(
      Ident label,
      std::vector<std::pair<std::string, Expression>> signals,
      std::vector<std::pair<std::string, Expression>> upstreams,
      std::vector<Method> methods) {
    ObjectExpr o;
    o.label = std::move(label);
    for (auto& [p, e] : signals) o.signals.emplace_back(p, e.node_);
    for (auto& [s, e] : upstreams) o.upstreams.emplace_back(s, e.node_);
    o.methods = std::move(methods);
    return make(std::move(o));
  }
  static Expression setu(Expression recv, std::vector<Expression> args) {
    SetUpstreamsExpr s;
    s.recv = recv.node_;
    for (auto& a : args) s.args.push_back(a.node_);
    return make(std::move(s));
  }
  static Expression combine(std::string op, std::vector<Expression> args) {
    CombineExpr c;
    c.op = std::move(op);
    for (auto& a : args) c.args.push_back(a.node_);
    return make(std::move(c));
  }

  bool valid() const { return node_ != nullptr; }
  const ExprNode::Data& data() const { return node_->data(); }
  const std::shared_ptr<const ExprNode>& node() const { return node_; }

  // An expression is a value iff it is a bare identifier.
  bool is_value() const {
    return std::holds_alternative<IdExpr>(node_->data());
  }
  const Ident& as_ident() const {
    const auto* v = std::get_if<IdExpr>(&node_->data());
    if (!v) fail(ErrorCode::Internal, "as_ident on non-value");
    return v->id;
  }

  bool operator==(const Expression& o) const;

 private:
  template <typename T>
  static Expression make(T&& payload) {
    return Expression(std::make_shared<const ExprNode>(
        ExprNode::Data(std::forward<T>(payload))));
  }

  std::shared_ptr<const ExprNode> node_;
};

inline Expression Method::body() const { return Expression(body_node); }

inline Method make_method(std::string name, std::string self_var,
                          Expression body) {
  return Method{std::move(name), std::move(self_var), body.node()};
}

// --- structural equality ----------------------------------------------------

inline bool expr_equal(const std::shared_ptr<const ExprNode>& a,
                       const std::shared_ptr<const ExprNode>& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  const auto& da = a->data();
  const auto& db = b->data();
  if (da.index() != db.index()) return false;
  if (const auto* va = std::get_if<VarExpr>(&da))
    return va->name == std::get<VarExpr>(db).name;
  if (const auto* aa = std::get_if<AccessExpr>(&da)) {
    const auto& ab = std::get<AccessExpr>(db);
    return aa->kind == ab.kind && aa->member == ab.member &&
           expr_equal(aa->recv, ab.recv);
  }
  if (const auto* oa = std::get_if<ObjectExpr>(&da)) {
    const auto& ob = std::get<ObjectExpr>(db);
    if (oa->label != ob.label || oa->signals.size() != ob.signals.size() ||
        oa->upstreams.size() != ob.upstreams.size() ||
        oa->methods.size() != ob.methods.size())
      return false;
    for (size_t i = 0; i < oa->signals.size(); ++i)
      if (oa->signals[i].first != ob.signals[i].first ||
          !expr_equal(oa->signals[i].second, ob.signals[i].second))
        return false;
    for (size_t i = 0; i < oa->upstreams.size(); ++i)
      if (oa->upstreams[i].first != ob.upstreams[i].first ||
          !expr_equal(oa->upstreams[i].second, ob.upstreams[i].second))
        return false;
    for (size_t i = 0; i < oa->methods.size(); ++i)
      if (!(oa->methods[i] == ob.methods[i])) return false;
    return true;
  }
  if (const auto* sa = std::get_if<SetUpstreamsExpr>(&da)) {
    const auto& sb = std::get<SetUpstreamsExpr>(db);
    if (sa->args.size() != sb.args.size()) return false;
    if (!expr_equal(sa->recv, sb.recv)) return false;
    for (size_t i = 0; i < sa->args.size(); ++i)
      if (!expr_equal(sa->args[i], sb.args[i])) return false;
    return true;
  }
  if (const auto* ia = std::get_if<IdExpr>(&da))
    return ia->id == std::get<IdExpr>(db).id;
  const auto& ca = std::get<CombineExpr>(da);
  const auto& cb = std::get<CombineExpr>(db);
  if (ca.op != cb.op || ca.args.size() != cb.args.size()) return false;
  for (size_t i = 0; i < ca.args.size(); ++i)
    if (!expr_equal(ca.args[i], cb.args[i])) return false;
  return true;
}

inline bool Expression::operator==(const Expression& o) const {
  return expr_equal(node_, o.node_);
}

inline bool Method::operator==(const Method& o) const {
  return name == o.name && self_var == o.self_var &&
         expr_equal(body_node, o.body_node);
}

// --- printing ---------------------------------------------------------------

inline std::string to_string(const Expression& e);

inline std::string to_string_node(const std::shared_ptr<const ExprNode>& n) {
  return to_string(Expression(n));
}

inline std::string to_string(const Expression& e) {
  const auto& d = e.data();
  if (const auto* v = std::get_if<VarExpr>(&d)) return v->name;
  if (const auto* i = std::get_if<IdExpr>(&d)) return i->id.name;
  if (const auto* a = std::get_if<AccessExpr>(&d))
    return to_string_node(a->recv) + "." + a->member;
  if (const auto* s = std::get_if<SetUpstreamsExpr>(&d)) {
    std::string out = to_string_node(s->recv) + ".setu(";
    for (size_t i = 0; i < s->args.size(); ++i) {
      if (i) out += ",";
      out += to_string_node(s->args[i]);
    }
    return out + ")";
  }
  if (const auto* c = std::get_if<CombineExpr>(&d)) {
    std::string out = c->op + "(";
    for (size_t i = 0; i < c->args.size(); ++i) {
      if (i) out += ",";
      out += to_string_node(c->args[i]);
    }
    return out + ")";
  }
  const auto& o = std::get<ObjectExpr>(d);
  std::string out = o.label.name + "[";
  bool first = true;
  for (const auto& [p, body] : o.signals) {
    if (!first) out += ",";
    first = false;
    out += p + "=" + to_string_node(body);
  }
  for (const auto& [s, body] : o.upstreams) {
    if (!first) out += ",";
    first = false;
    out += s + "=" + to_string_node(body);
  }
  for (const auto& m : o.methods) {
    if (!first) out += ",";
    first = false;
    out += m.name + "=z(" + m.self_var + ")" + to_string_node(m.body_node);
  }
  return out + "]";
}

// --- processes --------------------------------------------------------------

enum class JoinKind { Union, Intersection };

struct Join {
  JoinKind kind = JoinKind::Union;
  IdentList inputs;  // pairwise distinct

  bool operator==(const Join&) const = default;
};

enum class ProcessKind {
  Guarded,  // i.l^[e.., m..] with a non-empty join
  Source,   // l^[e.., m..] — guard-free, fires on its own pace
  Emitted,  // l^ — post-fire form, only ever appears mid-propagation
};

// A signal class instance viewed as a process. `slot_names` names the join
// inputs positionally (the s fields of the originating object literal) so
// that upstream accesses l.s resolve through the current wiring.
struct Process {
  ProcessKind kind = ProcessKind::Source;
  Ident out;
  Join join;                            // inputs empty unless Guarded
  std::vector<std::string> slot_names;  // parallel to join.inputs
  std::vector<Expression> effects;      // signal bodies, in schema order
  std::vector<Method> methods;

  bool operator==(const Process& o) const {
    return kind == o.kind && out == o.out && join == o.join &&
           slot_names == o.slot_names && effects == o.effects &&
           methods == o.methods;
  }
};

// --- evaluation contexts ------------------------------------------------

// Evaluation modes for pure reduction: explicit reduction reads persistent
// signals at t-1; propagation reads at t for instances already fired during
// the current propagation (`computed`) and at t-1 otherwise.
struct EvalMode {
  enum Kind { Explicit, Propagation } kind = Explicit;
  IdentSet computed;

  static EvalMode explicit_mode() { return EvalMode{}; }
  static EvalMode propagation(IdentSet fired) {
    return EvalMode{Propagation, std::move(fired)};
  }
};

// One step down from a node towards the hole. `child` selects the hole
// position within `original`:
//   AccessExpr: receiver; SetUpstreamsExpr: -1 = receiver, k >= 0 = arg k;
//   ObjectExpr: upstream slot k; CombineExpr: arg k.
struct ContextFrame {
  std::shared_ptr<const ExprNode> original;
  int child = 0;
};

// A hole path into an expression; empty path is the trivial context [].
struct EvalContext {
  std::vector<ContextFrame> frames;
};

namespace detail {

inline Expression rebuild(const ContextFrame& f, const Expression& filling) {
  const auto& d = f.original->data();
  if (const auto* a = std::get_if<AccessExpr>(&d)) {
    AccessExpr out = *a;
    out.recv = filling.node();
    return Expression(
        std::make_shared<const ExprNode>(ExprNode::Data(std::move(out))));
  }
  if (const auto* s = std::get_if<SetUpstreamsExpr>(&d)) {
    SetUpstreamsExpr out = *s;
    if (f.child < 0)
      out.recv = filling.node();
    else
      out.args[static_cast<size_t>(f.child)] = filling.node();
    return Expression(
        std::make_shared<const ExprNode>(ExprNode::Data(std::move(out))));
  }
  if (const auto* o = std::get_if<ObjectExpr>(&d)) {
    ObjectExpr out = *o;
    out.upstreams[static_cast<size_t>(f.child)].second = filling.node();
    return Expression(
        std::make_shared<const ExprNode>(ExprNode::Data(std::move(out))));
  }
  if (const auto* c = std::get_if<CombineExpr>(&d)) {
    CombineExpr out = *c;
    out.args[static_cast<size_t>(f.child)] = filling.node();
    return Expression(
        std::make_shared<const ExprNode>(ExprNode::Data(std::move(out))));
  }
  fail(ErrorCode::Internal, "bad context frame");
}

inline bool node_is_id(const std::shared_ptr<const ExprNode>& n) {
  return std::holds_alternative<IdExpr>(n->data());
}

// Pure-mode decomposition: contexts E ::= [] | E.p | E.s | E.m | op(l..,E,e..),
// redexes are member accesses on identifiers and fully-reduced combinators.
inline std::optional<std::pair<EvalContext, Expression>> decompose_pure(
    const Expression& e) {
  EvalContext ctx;
  Expression cur = e;
  for (;;) {
    const auto& d = cur.data();
    if (std::holds_alternative<IdExpr>(d) ||
        std::holds_alternative<VarExpr>(d))
      return std::nullopt;  // value or open term
    if (const auto* a = std::get_if<AccessExpr>(&d)) {
      if (node_is_id(a->recv)) return std::make_pair(std::move(ctx), cur);
      const auto& rd = a->recv->data();
      if (std::holds_alternative<AccessExpr>(rd) ||
          std::holds_alternative<CombineExpr>(rd)) {
        ctx.frames.push_back({cur.node(), 0});
        cur = Expression(a->recv);
        continue;
      }
      return std::nullopt;  // object/setu under member access: stuck here
    }
    if (const auto* c = std::get_if<CombineExpr>(&d)) {
      for (size_t i = 0; i < c->args.size(); ++i) {
        if (node_is_id(c->args[i])) continue;
        const auto& ad = c->args[i]->data();
        if (std::holds_alternative<AccessExpr>(ad) ||
            std::holds_alternative<CombineExpr>(ad)) {
          ctx.frames.push_back({cur.node(), static_cast<int>(i)});
          cur = Expression(c->args[i]);
          goto descend;
        }
        return std::nullopt;  // non-pure redex inside a pure position
      }
      return std::make_pair(std::move(ctx), cur);  // all args are values
    descend:
      continue;
    }
    // object literals and setu cannot be reduced in propagation mode
    return std::nullopt;
  }
}

// Explicit-mode decomposition:
//   E ::= [] | l[p=e.., s=l.., s=E, s=e.., m..] | E.setu(e..)
//       | l.setu(l.., E, e..) | op(l.., E, e..)
// plus the pure tower for member accesses (reached through R-PURE).
inline std::optional<std::pair<EvalContext, Expression>> decompose_explicit(
    const Expression& e) {
  EvalContext ctx;
  Expression cur = e;
  for (;;) {
    const auto& d = cur.data();
    if (std::holds_alternative<IdExpr>(d) ||
        std::holds_alternative<VarExpr>(d))
      return std::nullopt;
    if (std::holds_alternative<AccessExpr>(d) ||
        std::holds_alternative<CombineExpr>(d)) {
      // member accesses and combinators reduce purely; splice the pure
      // decomposition onto the explicit context
      auto inner = decompose_pure(cur);
      if (!inner) {
        // a combinator argument may still hold an explicit redex
        if (const auto* c = std::get_if<CombineExpr>(&d)) {
          for (size_t i = 0; i < c->args.size(); ++i) {
            if (node_is_id(c->args[i])) continue;
            ctx.frames.push_back({cur.node(), static_cast<int>(i)});
            cur = Expression(c->args[i]);
            goto next;
          }
        }
        return std::nullopt;
      next:
        continue;
      }
      for (auto& f : inner->first.frames) ctx.frames.push_back(std::move(f));
      return std::make_pair(std::move(ctx), inner->second);
    }
    if (const auto* o = std::get_if<ObjectExpr>(&d)) {
      for (size_t i = 0; i < o->upstreams.size(); ++i) {
        if (node_is_id(o->upstreams[i].second)) continue;
        ctx.frames.push_back({cur.node(), static_cast<int>(i)});
        cur = Expression(o->upstreams[i].second);
        goto descend_obj;
      }
      return std::make_pair(std::move(ctx), cur);  // all slots reduced: redex
    descend_obj:
      continue;
    }
    const auto& s = std::get<SetUpstreamsExpr>(d);
    if (!node_is_id(s.recv)) {
      ctx.frames.push_back({cur.node(), -1});
      cur = Expression(s.recv);
      continue;
    }
    for (size_t i = 0; i < s.args.size(); ++i) {
      if (node_is_id(s.args[i])) continue;
      ctx.frames.push_back({cur.node(), static_cast<int>(i)});
      cur = Expression(s.args[i]);
      goto descend_setu;
    }
    return std::make_pair(std::move(ctx), cur);
  descend_setu:
    continue;
  }
}

}  // namespace detail

// The unique decomposition e = E[r] with r an immediate redex under `mode`'s
// context grammar; nothing iff e is a value or stuck.
inline std::optional<std::pair<EvalContext, Expression>> decompose(
    const Expression& e, const EvalMode& mode) {
  return mode.kind == EvalMode::Explicit ? detail::decompose_explicit(e)
                                         : detail::decompose_pure(e);
}

inline Expression plug(const EvalContext& ctx, Expression e) {
  for (auto it = ctx.frames.rbegin(); it != ctx.frames.rend(); ++it)
    e = detail::rebuild(*it, e);
  return e;
}

// body[x := l]; method binders named x shadow.
inline Expression substitute(const Expression& body, const std::string& x,
                             const Ident& l) {
  const auto& d = body.data();
  if (const auto* v = std::get_if<VarExpr>(&d))
    return v->name == x ? Expression::id(l) : body;
  if (std::holds_alternative<IdExpr>(d)) return body;
  if (const auto* a = std::get_if<AccessExpr>(&d)) {
    Expression recv = substitute(Expression(a->recv), x, l);
    switch (a->kind) {
      case AccessKind::Signal:
        return Expression::field_signal(recv, a->member);
      case AccessKind::Upstream:
        return Expression::field_upstream(recv, a->member);
      case AccessKind::Method:
        return Expression::method_access(recv, a->member);
    }
  }
  if (const auto* s = std::get_if<SetUpstreamsExpr>(&d)) {
    std::vector<Expression> args;
    args.reserve(s->args.size());
    for (const auto& arg : s->args)
      args.push_back(substitute(Expression(arg), x, l));
    return Expression::setu(substitute(Expression(s->recv), x, l),
                            std::move(args));
  }
  if (const auto* c = std::get_if<CombineExpr>(&d)) {
    std::vector<Expression> args;
    args.reserve(c->args.size());
    for (const auto& arg : c->args)
      args.push_back(substitute(Expression(arg), x, l));
    return Expression::combine(c->op, std::move(args));
  }
  const auto& o = std::get<ObjectExpr>(d);
  std::vector<std::pair<std::string, Expression>> signals;
  std::vector<std::pair<std::string, Expression>> upstreams;
  std::vector<Method> methods;
  for (const auto& [p, b] : o.signals)
    signals.emplace_back(p, substitute(Expression(b), x, l));
  for (const auto& [s, b] : o.upstreams)
    upstreams.emplace_back(s, substitute(Expression(b), x, l));
  for (const auto& m : o.methods) {
    if (m.self_var == x) {
      methods.push_back(m);  // shadowed
    } else {
      methods.push_back(
          make_method(m.name, m.self_var, substitute(m.body(), x, l)));
    }
  }
  return Expression::object(o.label, std::move(signals), std::move(upstreams),
                            std::move(methods));
}

// Free variables, for the closedness checks.
inline void collect_free_vars(const Expression& e, std::set<std::string>& out,
                              std::set<std::string> bound = {}) {
  const auto& d = e.data();
  if (const auto* v = std::get_if<VarExpr>(&d)) {
    if (!bound.count(v->name)) out.insert(v->name);
    return;
  }
  if (std::holds_alternative<IdExpr>(d)) return;
  if (const auto* a = std::get_if<AccessExpr>(&d)) {
    collect_free_vars(Expression(a->recv), out, bound);
    return;
  }
  if (const auto* s = std::get_if<SetUpstreamsExpr>(&d)) {
    collect_free_vars(Expression(s->recv), out, bound);
    for (const auto& arg : s->args)
      collect_free_vars(Expression(arg), out, bound);
    return;
  }
  if (const auto* c = std::get_if<CombineExpr>(&d)) {
    for (const auto& arg : c->args)
      collect_free_vars(Expression(arg), out, bound);
    return;
  }
  const auto& o = std::get<ObjectExpr>(d);
  for (const auto& [p, b] : o.signals)
    collect_free_vars(Expression(b), out, bound);
  for (const auto& [s, b] : o.upstreams)
    collect_free_vars(Expression(b), out, bound);
  for (const auto& m : o.methods) {
    auto inner = bound;
    inner.insert(m.self_var);
    collect_free_vars(m.body(), out, inner);
  }
}

inline bool is_closed(const Expression& e) {
  std::set<std::string> fv;
  collect_free_vars(e, fv);
  return fv.empty();
}

}  // namespace zdps
