#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "zdps/consistency.hpp"
#include "zdps/engine.hpp"
#include "zdps/environments.hpp"
#include "zdps/error.hpp"

namespace zdps {

// Per-instance recovery bookkeeping. `last_checkpoint` only advances on a
// successful recovery of that instance; everything after it is untrusted.
struct CheckpointState {
  std::map<Ident, Timestamp> last_checkpoint;
  std::map<Ident, std::optional<std::uint64_t>> interval;  // ticks

  Timestamp last_of(const Ident& l) const {
    auto it = last_checkpoint.find(l);
    return it == last_checkpoint.end() ? Timestamp::bottom() : it->second;
  }
};

struct RepairedRow {
  Ident id;
  Timestamp t;
  IdentList values;

  bool operator==(const RepairedRow&) const = default;
};

struct RecoveryReport {
  Timestamp checkpoint_t;
  std::vector<RepairedRow> repaired;  // sorted by id then t
  IdentList blocked;                  // sorted by id
  IdentList advanced;                 // sorted by id
};

namespace detail {

// Instances that fired at t, judged by their stored rows. Drives the
// propagation-mode reads during recomputation.
inline IdentSet row_holders_at(const IdentEnv& mu, Timestamp t) {
  IdentSet out;
  for (const auto& [l, e] : mu.entries)
    if (has_record_at(e.relation, t)) out.insert(l);
  return out;
}

}  // namespace detail

// Recalculate instance l over (from_t, to_t]: for every timestamp the join
// mode says should exist (union / intersection of upstream row sets,
// restricted to the upstreams' pace), recompute the effects against the
// topology the switch history records for that time and insert the row if it
// is missing, or override it if the stored values disagree with the
// recomputation. Rows outside the expected set are never deleted.
inline std::pair<IdentEnv, std::vector<RepairedRow>> recalc_instance(
    IdentEnv mu, const SwitchHistory& phi, const Ident& l, Timestamp from_t,
    Timestamp to_t, const SourceStreams* streams = nullptr) {
  if (to_t < from_t)
    fail(ErrorCode::Internal, "recalc window is reversed");
  std::vector<RepairedRow> repaired;
  if (to_t.is_bottom()) return {std::move(mu), std::move(repaired)};

  const std::uint64_t tm = mu.at(l).tm;
  std::int64_t first = from_t.is_bottom() ? 0 : from_t.tick() + 1;
  // first multiple of tm at or after `first`
  std::int64_t step = static_cast<std::int64_t>(tm);
  std::int64_t t_star = ((first + step - 1) / step) * step;

  for (; t_star <= to_t.tick(); t_star += step) {
    Timestamp ts = Timestamp::at(t_star);
    const ProcEnv* nu_star = nullptr;
    try {
      nu_star = &history_at(phi, ts);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NoSnapshot)
        fail(ErrorCode::TopologyGap,
             "no topology recorded at or before " + ts.str());
      throw;
    }
    if (!nu_star->contains(l)) continue;  // instance did not exist yet
    const Process& p = nu_star->at(l);
    if (p.kind == ProcessKind::Emitted)
      fail(ErrorCode::Internal, "emitted process in switch history");

    bool expected = false;
    std::optional<Ident> stream_val;
    if (p.kind == ProcessKind::Source) {
      expected = true;
      if (streams && streams->has_stream(l)) {
        stream_val = streams->lookup(l, ts);
        expected = stream_val.has_value();
      }
    } else if (p.join.kind == JoinKind::Union) {
      for (const auto& in : p.join.inputs) {
        const ResolverEntry& ue = mu.at(in);
        if (t_star % static_cast<std::int64_t>(ue.tm) == 0 &&
            has_record_at(ue.relation, ts)) {
          expected = true;
          break;
        }
      }
    } else {
      expected = !p.join.inputs.empty();
      for (const auto& in : p.join.inputs) {
        const ResolverEntry& ue = mu.at(in);
        if (t_star % static_cast<std::int64_t>(ue.tm) != 0 ||
            !has_record_at(ue.relation, ts)) {
          expected = false;
          break;
        }
      }
    }
    if (!expected) continue;

    IdentSet fired = detail::row_holders_at(mu, ts);
    fired.erase(l);  // the instance reads its own past, not the row in repair
    IdentList values;
    values.reserve(p.effects.size());
    for (const auto& eff : p.effects) {
      try {
        values.push_back(stream_val ? *stream_val
                                    : eval_effect(mu, *nu_star, ts, fired, eff));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::EffectStuck)
          fail(ErrorCode::UpstreamGap,
               l.name + " at " + ts.str() + ": " + e.what());
        throw;
      }
    }

    ResolverEntry& entry = mu.at_mut(l);
    auto existing = entry.relation.rows.find(ts);
    if (existing != entry.relation.rows.end() && existing->second == values)
      continue;  // re-verified
    entry.relation.put(ts, values);
    repaired.push_back({l, ts, std::move(values)});
  }
  return {std::move(mu), std::move(repaired)};
}

namespace detail {

// Dependency edges accumulated over every topology recorded up to the
// checkpoint; recovery order must respect all of them.
inline std::map<Ident, IdentSet> union_graph_upto(const IdentEnv& mu,
                                                  const SwitchHistory& phi,
                                                  Timestamp upto) {
  std::map<Ident, IdentSet> preds;
  for (const auto& [l, e] : mu.entries) preds[l];
  for (const auto& [st, nu] : phi.snapshots) {
    if (st > upto) break;
    for (const auto& [l, p] : nu.bindings)
      for (const auto& in : p.join.inputs) preds[l].insert(in);
  }
  return preds;
}

inline IdentList topo_order(const std::map<Ident, IdentSet>& preds) {
  std::map<Ident, size_t> indegree;
  std::map<Ident, IdentSet> succs;
  for (const auto& [l, ins] : preds) {
    indegree[l] += 0;
    for (const auto& in : ins) {
      ++indegree[l];
      succs[in].insert(l);
    }
  }
  IdentSet ready;
  for (const auto& [l, d] : indegree)
    if (d == 0) ready.insert(l);
  IdentList order;
  while (!ready.empty()) {
    Ident l = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(l);
    for (const auto& nxt : succs[l])
      if (--indegree[nxt] == 0) ready.insert(nxt);
  }
  if (order.size() != preds.size())
    fail(ErrorCode::CyclicSwitch,
         "accumulated switch topologies form a cycle; recovery order "
         "undefined");
  return order;
}

}  // namespace detail

// The checkpoint wave: most-upstream instances start; every instance waits
// for all of its upstream neighbours (across every topology recorded up to
// the checkpoint), recalculates its window, advances its last-checkpoint
// time, and releases its downstream. Faulted instances keep their
// last-checkpoint time and block everything downstream of them.
//
// Only executed ticks are trusted: s.t is the next tick to run, so a
// checkpoint at s.t is clamped to s.t - 1 rather than fabricating rows for a
// propagation that never happened.
inline std::tuple<IdentEnv, CheckpointState, RecoveryReport> run_checkpoint(
    const MachineState& s, CheckpointState cp, Timestamp checkpoint_t,
    const std::optional<IdentSet>& fault = std::nullopt,
    const SourceStreams* streams = nullptr) {
  if (s.t < checkpoint_t)
    fail(ErrorCode::Internal, "checkpoint time is in the future");
  if (!(checkpoint_t < s.t)) checkpoint_t = s.t.pred();

  RecoveryReport report;
  report.checkpoint_t = checkpoint_t;
  IdentEnv mu = s.mu;
  IdentSet blocked;

  auto preds = detail::union_graph_upto(mu, s.phi, checkpoint_t);
  for (const auto& l : detail::topo_order(preds)) {
    bool upstream_blocked = false;
    for (const auto& in : preds[l])
      if (blocked.count(in)) {
        upstream_blocked = true;
        break;
      }
    if (upstream_blocked || (fault && fault->count(l))) {
      blocked.insert(l);
      continue;
    }
    auto [mu2, rows] =
        recalc_instance(std::move(mu), s.phi, l, cp.last_of(l), checkpoint_t,
                        streams);
    mu = std::move(mu2);
    for (auto& r : rows) report.repaired.push_back(std::move(r));
    cp.last_checkpoint[l] = checkpoint_t;
    report.advanced.push_back(l);
  }

  report.blocked.assign(blocked.begin(), blocked.end());
  std::sort(report.advanced.begin(), report.advanced.end());
  std::sort(report.repaired.begin(), report.repaired.end(),
            [](const RepairedRow& a, const RepairedRow& b) {
              return a.id != b.id ? a.id < b.id : a.t < b.t;
            });
  return {std::move(mu), std::move(cp), std::move(report)};
}

// The recovery theorem, executed: branch A takes the full step, branch B the
// lossy step, branch C re-executes the same expression from branch B's
// environments with the pre-step topology and full delivery. True iff branch
// C agrees with branch A under every conclusion relation.
inline bool theorem2_oracle(const MachineState& s, const IdentSet& deliver) {
  for (const auto& [st, nu] : s.phi.snapshots)
    if (st >= s.t)
      fail(ErrorCode::HypothesisViolation,
           "switch history has a snapshot at or after t");
  try {
    if (!(history_at(s.phi, s.t) == s.nu))
      fail(ErrorCode::HypothesisViolation, "phi(t) differs from nu");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoSnapshot)
      fail(ErrorCode::HypothesisViolation, "phi has no snapshot before t");
    throw;
  }
  for (const auto& [l, entry] : s.mu.entries) {
    auto last = entry.relation.rows.rbegin();
    if (last != entry.relation.rows.rend() && !last->first.is_bottom() &&
        last->first >= s.t)
      fail(ErrorCode::HypothesisViolation,
           l.name + " has a record at or after t");
  }

  StepReport a = step(s);
  StepReport b = step(s, deliver);
  MachineState c0;
  c0.mu = b.state_after.mu;
  c0.nu = history_at(b.state_after.phi, s.t.pred());
  c0.phi = b.state_after.phi;
  c0.t = s.t;
  c0.expr = s.expr;
  StepReport c = step(std::move(c0));

  IdentSet fired_a(a.outcome.fired.begin(), a.outcome.fired.end());
  return equiv_records_upto(a.state_after.mu, c.state_after.mu, s.t.pred()) &&
         equiv_records_at(a.state_after.mu, c.state_after.mu, s.t, fired_a) &&
         equiv_tm(a.state_after.mu, c.state_after.mu) &&
         equiv_mode(a.state_after.mu, c.state_after.mu) &&
         a.state_after.nu == c.state_after.nu &&
         history_equiv_upto(a.state_after.phi, c.state_after.phi, s.t) &&
         a.state_after.expr == c.state_after.expr &&
         a.state_after.t == c.state_after.t;
}

}  // namespace zdps
