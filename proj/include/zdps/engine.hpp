#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "zdps/ast.hpp"
#include "zdps/environments.hpp"
#include "zdps/error.hpp"
#include "zdps/ident.hpp"
#include "zdps/relation.hpp"

namespace zdps {

// Scenario-mode source values, keyed by (instance, tick). A source with any
// entry here fires only at ticks where a value is present; sources without
// entries emit their constant effects every eligible tick. Either way the
// emitted value is a pure function of (id, t), so re-execution is
// deterministic.
struct SourceStreams {
  std::map<std::pair<Ident, std::int64_t>, Ident> values;

  bool has_stream(const Ident& l) const {
    auto it = values.lower_bound({l, 0});
    return it != values.end() && it->first.first == l;
  }
  std::optional<Ident> lookup(const Ident& l, Timestamp t) const {
    auto it = values.find({l, t.tick()});
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
};

// The full configuration advanced by the time-step.
struct MachineState {
  IdentEnv mu;
  ProcEnv nu;
  SwitchHistory phi;
  Timestamp t = Timestamp::at(0);
  Expression expr;
};

struct PropagationOutcome {
  IdentEnv mu_after;
  IdentList fired;  // in schedule order, no duplicates
  bool complete = false;
};

struct StepReport {
  MachineState state_after;
  PropagationOutcome outcome;
  std::string explicit_rule;  // R-OBJ | R-SETU | R-PURE | NOOP
};

// --- pure reduction -----------------------------------------------------

namespace detail {

inline Ident fold_combine(const CombineExpr& c) {
  std::string name = c.op + "(";
  for (size_t i = 0; i < c.args.size(); ++i) {
    if (i) name += ",";
    name += std::get<IdExpr>(c.args[i]->data()).id.name;
  }
  return Ident(name + ")");
}

// One contraction of a pure redex (member access on an identifier, or a
// fully-reduced combinator).
inline Expression reduce_pure_redex(const IdentEnv& mu, const ProcEnv& nu,
                                    Timestamp t, const EvalMode& mode,
                                    const Expression& redex) {
  const auto& d = redex.data();
  if (const auto* c = std::get_if<CombineExpr>(&d))
    return Expression::id(fold_combine(*c));

  const auto& a = std::get<AccessExpr>(d);
  const Ident& recv = std::get<IdExpr>(a.recv->data()).id;
  switch (a.kind) {
    case AccessKind::Signal: {
      if (!mu.contains(recv))
        fail(ErrorCode::Stuck, "signal read on unresolved id in " +
                                   to_string(redex));
      const auto& entry = mu.at(recv);
      bool fresh = mode.kind == EvalMode::Propagation &&
                   mode.computed.count(recv) != 0;
      Timestamp read_t = fresh ? t : t.pred();
      size_t col;
      try {
        col = entry.relation.column_index(a.member);
      } catch (const Error&) {
        fail(ErrorCode::Stuck, "no signal " + a.member + " in " +
                                   to_string(redex));
      }
      return Expression::id(latest_row(entry.relation, read_t)[col]);
    }
    case AccessKind::Upstream: {
      if (!nu.contains(recv))
        fail(ErrorCode::Stuck, "upstream read on unbound id in " +
                                   to_string(redex));
      const Process& p = nu.at(recv);
      for (size_t i = 0; i < p.slot_names.size(); ++i)
        if (p.slot_names[i] == a.member)
          return Expression::id(p.join.inputs[i]);
      fail(ErrorCode::Stuck, "no upstream slot " + a.member + " in " +
                                 to_string(redex));
    }
    case AccessKind::Method: {
      if (!nu.contains(recv))
        fail(ErrorCode::Stuck, "method access on unbound id in " +
                                   to_string(redex));
      const Process& p = nu.at(recv);
      for (const auto& m : p.methods)
        if (m.name == a.member) return substitute(m.body(), m.self_var, recv);
      fail(ErrorCode::Stuck, "no method " + a.member + " in " +
                                 to_string(redex));
    }
  }
  fail(ErrorCode::Internal, "unreachable");
}

}  // namespace detail

// One pure step on the outermost pure redex of e.
inline Expression pure_step(const IdentEnv& mu, const ProcEnv& nu, Timestamp t,
                            const EvalMode& mode, const Expression& e) {
  auto dec = detail::decompose_pure(e);
  if (!dec) fail(ErrorCode::Stuck, "no pure redex in " + to_string(e));
  return plug(dec->first,
              detail::reduce_pure_redex(mu, nu, t, mode, dec->second));
}

// Pure reduction to a value; used for effect evaluation during propagation.
inline Ident eval_effect(const IdentEnv& mu, const ProcEnv& nu_init,
                         Timestamp t, const IdentSet& fired,
                         Expression e) {
  EvalMode mode = EvalMode::propagation(fired);
  for (int guard = 0; guard < 100000; ++guard) {
    if (e.is_value()) return e.as_ident();
    auto dec = detail::decompose_pure(e);
    if (!dec)
      fail(ErrorCode::EffectStuck, "effect stuck at " + to_string(e));
    try {
      e = plug(dec->first,
               detail::reduce_pure_redex(mu, nu_init, t, mode, dec->second));
    } catch (const Error& err) {
      if (err.code() == ErrorCode::Stuck)
        fail(ErrorCode::EffectStuck, err.what());
      throw;
    }
  }
  fail(ErrorCode::EffectStuck, "effect does not terminate");
}

// --- explicit reduction -------------------------------------------------

struct ExplicitResult {
  ProcEnv nu;
  SwitchHistory phi;
  Expression expr;
  std::string rule;
};

namespace detail {

inline void require_distinct(const IdentList& ids, const char* what) {
  IdentSet seen;
  for (const auto& l : ids)
    if (!seen.insert(l).second)
      fail(ErrorCode::Stuck, std::string("duplicate ") + what + ": " + l.name);
}

// R-OBJ: build the process from a fully-reduced object literal, using the
// resolver's mode for the join kind.
inline Process build_process(const IdentEnv& mu, const ObjectExpr& o) {
  if (!mu.contains(o.label)) fail(ErrorCode::UnknownId, o.label.name);
  const ResolverEntry& entry = mu.at(o.label);

  Process p;
  p.out = o.label;
  for (const auto& [s, arg] : o.upstreams) {
    p.slot_names.push_back(s);
    p.join.inputs.push_back(std::get<IdExpr>(arg->data()).id);
  }
  require_distinct(p.join.inputs, "join input");
  p.kind = p.join.inputs.empty() ? ProcessKind::Source : ProcessKind::Guarded;
  p.join.kind = entry.mode;

  const auto& schema = entry.relation.schema;
  if (o.signals.size() != schema.size())
    fail(ErrorCode::ArityMismatch,
         o.label.name + ": literal has " + std::to_string(o.signals.size()) +
             " signals, schema has " + std::to_string(schema.size()));
  for (size_t i = 0; i < schema.size(); ++i) {
    if (o.signals[i].first != schema[i])
      fail(ErrorCode::ArityMismatch,
           o.label.name + ": signal " + o.signals[i].first +
               " does not match schema column " + schema[i]);
    p.effects.emplace_back(o.signals[i].second);
  }
  p.methods = o.methods;
  return p;
}

}  // namespace detail

// Exactly one explicit step (Fig.-6 style): a pure contraction, an object
// creation, or an upstream switch, located by the explicit context grammar.
inline ExplicitResult explicit_step(const IdentEnv& mu, Timestamp t,
                                    const ProcEnv& nu,
                                    const SwitchHistory& phi,
                                    const Expression& e) {
  if (e.is_value()) fail(ErrorCode::Internal, "explicit_step on a value");
  auto dec = detail::decompose_explicit(e);
  if (!dec) fail(ErrorCode::Stuck, "stuck expression " + to_string(e));
  const auto& [ctx, redex] = *dec;
  const auto& d = redex.data();

  if (std::holds_alternative<AccessExpr>(d) ||
      std::holds_alternative<CombineExpr>(d)) {
    Expression reduced = detail::reduce_pure_redex(
        mu, nu, t, EvalMode::explicit_mode(), redex);
    return {nu, phi, plug(ctx, reduced), "R-PURE"};
  }

  if (const auto* o = std::get_if<ObjectExpr>(&d)) {
    Process p = detail::build_process(mu, *o);
    for (const auto& in : p.join.inputs)
      if (!nu.contains(in) && in != o->label)
        fail(ErrorCode::UnknownId, "upstream " + in.name + " unbound");
    ProcEnv nu2 = env_update(nu, o->label, std::move(p));
    if (!check_acyclic(nu2))
      fail(ErrorCode::CyclicSwitch,
           "creating " + o->label.name + " would make the network cyclic");
    SwitchHistory phi2 = history_record(phi, t, nu2);
    return {std::move(nu2), std::move(phi2), plug(ctx, Expression::id(o->label)),
            "R-OBJ"};
  }

  const auto& s = std::get<SetUpstreamsExpr>(d);
  const Ident& recv = std::get<IdExpr>(s.recv->data()).id;
  if (!nu.contains(recv))
    fail(ErrorCode::Stuck, "setu on unbound id " + recv.name);
  Process p = nu.at(recv);
  if (p.kind == ProcessKind::Emitted)
    fail(ErrorCode::Stuck, "setu on emitted process " + recv.name);
  if (s.args.size() != p.join.inputs.size())
    fail(ErrorCode::ArityMismatch,
         recv.name + ".setu expects " + std::to_string(p.join.inputs.size()) +
             " upstreams, got " + std::to_string(s.args.size()));
  IdentList new_inputs;
  for (const auto& arg : s.args)
    new_inputs.push_back(std::get<IdExpr>(arg->data()).id);
  detail::require_distinct(new_inputs, "join input");
  for (const auto& in : new_inputs)
    if (!nu.contains(in)) fail(ErrorCode::UnknownId, "upstream " + in.name);

  p.join.inputs = new_inputs;
  ProcEnv nu2 = env_update(nu, recv, std::move(p));
  if (!check_acyclic(nu2))
    fail(ErrorCode::CyclicSwitch,
         recv.name + ".setu would make the network cyclic");

  // the switch must preserve the receiver's well-formedness: replacing
  // instances keep the class-level update timing
  if (!new_inputs.empty()) {
    std::vector<std::uint64_t> tms;
    for (const auto& in : new_inputs) tms.push_back(mu.at(in).tm);
    const ResolverEntry& re = mu.at(recv);
    std::uint64_t want = re.mode == JoinKind::Union ? gcd_of(tms) : lcm_of(tms);
    if (re.tm != want)
      fail(ErrorCode::IllTimedSwitch,
           recv.name + ".setu: tm " + std::to_string(re.tm) +
               " does not match " + std::to_string(want) +
               " required by the new upstreams");
  }

  SwitchHistory phi2 = history_record(phi, t, nu2);
  return {std::move(nu2), std::move(phi2), plug(ctx, Expression::id(recv)),
          "R-SETU"};
}

// --- propagation ----------------------------------------------------------

// The set of instances that should fire at t: sources on their pace (and,
// for streamed sources, only when a value arrives), union joins when some
// input fires, intersection joins when all inputs fire.
inline IdentSet should_fire_set(const IdentEnv& mu, const ProcEnv& nu,
                                Timestamp t, const SourceStreams* streams) {
  std::map<Ident, int> memo;  // -1 in progress, 0 no, 1 yes

  auto rec = [&](auto&& self, const Ident& l) -> bool {
    auto it = memo.find(l);
    if (it != memo.end()) {
      if (it->second == -1) fail(ErrorCode::Internal, "cyclic network");
      return it->second == 1;
    }
    memo[l] = -1;
    const Process& p = nu.at(l);
    bool paced = t.tick() % static_cast<std::int64_t>(mu.at(l).tm) == 0;
    bool result = false;
    if (p.kind == ProcessKind::Source) {
      result = paced;
      if (result && streams && streams->has_stream(l))
        result = streams->lookup(l, t).has_value();
    } else if (p.kind == ProcessKind::Guarded) {
      if (paced) {
        if (p.join.kind == JoinKind::Union) {
          for (const auto& in : p.join.inputs)
            if (self(self, in)) {
              result = true;
              break;
            }
        } else {
          result = !p.join.inputs.empty();
          for (const auto& in : p.join.inputs)
            if (!self(self, in)) {
              result = false;
              break;
            }
        }
      }
    }
    memo[l] = result ? 1 : 0;
    return result;
  };

  IdentSet out;
  for (const auto& [l, p] : nu.bindings)
    if (rec(rec, l)) out.insert(l);
  return out;
}

namespace detail {

// One process reduction under the canonical schedule: fire the first (in
// ascending id order) pace-eligible process whose guard is satisfied and that
// `deliver` permits. Effects are evaluated against the initiation-time nu and
// the in-propagation mu.
inline std::optional<Ident> try_fire_next(const ProcEnv& nu_init, Timestamp t,
                                          IdentEnv& mu, ProcEnv& inflight,
                                          IdentList& fired,
                                          const IdentSet* deliver,
                                          const SourceStreams* streams) {
  IdentSet fired_set(fired.begin(), fired.end());
  for (auto& [l, p] : inflight.bindings) {
    if (p.kind == ProcessKind::Emitted) continue;
    if (deliver && !deliver->count(l)) continue;
    const ResolverEntry& entry = mu.at(l);
    if (t.tick() % static_cast<std::int64_t>(entry.tm) != 0) continue;

    std::optional<Ident> stream_val;
    if (p.kind == ProcessKind::Source) {
      if (streams && streams->has_stream(l)) {
        stream_val = streams->lookup(l, t);
        if (!stream_val) continue;  // no update arrived at this tick
      }
    } else {
      bool ready;
      if (p.join.kind == JoinKind::Union) {
        ready = false;
        for (const auto& in : p.join.inputs)
          if (inflight.at(in).kind == ProcessKind::Emitted) {
            ready = true;
            break;
          }
      } else {
        ready = !p.join.inputs.empty();
        for (const auto& in : p.join.inputs)
          if (inflight.at(in).kind != ProcessKind::Emitted) {
            ready = false;
            break;
          }
      }
      if (!ready) continue;
    }

    IdentList values;
    values.reserve(p.effects.size());
    for (const auto& eff : p.effects)
      values.push_back(stream_val ? *stream_val
                                  : eval_effect(mu, nu_init, t, fired_set, eff));
    mu.at_mut(l).relation.put(t, std::move(values));

    Process emitted;
    emitted.kind = ProcessKind::Emitted;
    emitted.out = l;
    p = std::move(emitted);
    fired.push_back(l);
    return l;
  }
  return std::nullopt;
}

}  // namespace detail

// One process reduction step, spec-shaped: nothing when the parallel
// composition is in normal form.
inline std::optional<std::tuple<IdentEnv, ProcEnv, IdentList>> process_step(
    const ProcEnv& nu_init, Timestamp t, const IdentEnv& mu,
    const ProcEnv& inflight, const IdentList& fired) {
  IdentEnv mu2 = mu;
  ProcEnv inflight2 = inflight;
  IdentList fired2 = fired;
  auto l = detail::try_fire_next(nu_init, t, mu2, inflight2, fired2, nullptr,
                                 nullptr);
  if (!l) return std::nullopt;
  return std::make_tuple(std::move(mu2), std::move(inflight2),
                         std::move(fired2));
}

// Big-step propagation at t. Without `deliver` this is the total propagation
// and the outcome is always complete on an acyclic closed network; with
// `deliver` only the listed instances are permitted to fire, modelling lost
// messages. nu itself never changes.
inline PropagationOutcome propagate(const ProcEnv& nu, Timestamp t,
                                    IdentEnv mu,
                                    const std::optional<IdentSet>& deliver =
                                        std::nullopt,
                                    const SourceStreams* streams = nullptr) {
  if (!check_closed(nu))
    fail(ErrorCode::Internal, "propagation over an open network");
  if (!check_acyclic(nu))
    fail(ErrorCode::Internal, "propagation over a cyclic network");

  IdentSet expected = should_fire_set(mu, nu, t, streams);
  ProcEnv inflight = nu;
  IdentList fired;
  const IdentSet* permit = deliver ? &*deliver : nullptr;
  while (detail::try_fire_next(nu, t, mu, inflight, fired, permit, streams)) {
  }

  PropagationOutcome out;
  out.fired = std::move(fired);
  out.complete =
      IdentSet(out.fired.begin(), out.fired.end()) == expected;
  if (!deliver && !out.complete)
    fail(ErrorCode::IncompletePropagation,
         "full propagation left an expected instance unfired at " + t.str());
  out.mu_after = std::move(mu);
  return out;
}

// --- the unified time-step ----------------------------------------------

// One time-step: the explicit reduction (a no-op when the expression is
// already a value, so propagation keeps running), then the propagation over
// the post-reduction network, then t+1.
inline StepReport step(MachineState s,
                       const std::optional<IdentSet>& deliver = std::nullopt,
                       const SourceStreams* streams = nullptr) {
  ExplicitResult ex;
  if (s.expr.is_value()) {
    ex = {std::move(s.nu), std::move(s.phi), s.expr, "NOOP"};
  } else {
    ex = explicit_step(s.mu, s.t, s.nu, s.phi, s.expr);
  }

  PropagationOutcome outcome =
      propagate(ex.nu, s.t, std::move(s.mu), deliver, streams);

  StepReport report;
  report.state_after.mu = std::move(outcome.mu_after);
  report.state_after.nu = std::move(ex.nu);
  report.state_after.phi = std::move(ex.phi);
  report.state_after.t = s.t.succ();
  report.state_after.expr = ex.expr;
  report.explicit_rule = ex.rule;
  report.outcome.fired = std::move(outcome.fired);
  report.outcome.complete = outcome.complete;
  return report;
}

// --- driver ---------------------------------------------------------------

using LossSchedule = std::map<Timestamp, IdentSet>;

struct RunResult {
  MachineState state;
  std::vector<std::string> trace;
};

namespace detail {

inline std::string fire_line(const IdentEnv& mu, Timestamp t, const Ident& l) {
  const ResolverEntry& entry = mu.at(l);
  std::string vals;
  const IdentList& row = entry.relation.rows.at(t);
  for (size_t i = 0; i < entry.relation.schema.size(); ++i) {
    if (i) vals += ",";
    vals += entry.relation.schema[i] + "=" + row[i].name;
  }
  return t.str() + "\tFIRE\t" + l.name + "\t" + vals;
}

}  // namespace detail

// Iterate the time-step for `ticks` steps, applying the loss schedule where
// present. Emits one trace record per explicit rule, per fire, and per
// expected-but-undelivered instance, in schedule order.
inline RunResult run(MachineState s0, std::uint64_t ticks,
                     const LossSchedule& loss = {},
                     const SourceStreams* streams = nullptr) {
  RunResult rr;
  rr.state = std::move(s0);
  for (std::uint64_t k = 0; k < ticks; ++k) {
    Timestamp t = rr.state.t;
    std::optional<IdentSet> deliver;
    auto lost_it = loss.find(t);
    if (lost_it != loss.end()) {
      IdentSet permitted;
      for (const auto& [l, e] : rr.state.mu.entries)
        if (!lost_it->second.count(l)) permitted.insert(l);
      deliver = std::move(permitted);
    }

    StepReport rep = step(std::move(rr.state), deliver, streams);
    rr.trace.push_back(t.str() + "\tRULE\t" + rep.explicit_rule + "\t" +
                       to_string(rep.state_after.expr));
    for (const auto& l : rep.outcome.fired)
      rr.trace.push_back(detail::fire_line(rep.state_after.mu, t, l));
    IdentSet expected = should_fire_set(rep.state_after.mu,
                                        rep.state_after.nu, t, streams);
    IdentSet fired_set(rep.outcome.fired.begin(), rep.outcome.fired.end());
    for (const auto& l : expected)
      if (!fired_set.count(l))
        rr.trace.push_back(t.str() + "\tLOST\t" + l.name);

    rr.state = std::move(rep.state_after);
  }
  return rr;
}

}  // namespace zdps
