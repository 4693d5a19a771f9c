#pragma once

#include <string>
#include <vector>

#include "zdps/environments.hpp"
#include "zdps/error.hpp"
#include "zdps/ident.hpp"
#include "zdps/relation.hpp"

namespace zdps {

// iota(p): the input channels of the process bound to l.
inline IdentList input_channels(const ProcEnv& nu, const Ident& l) {
  return nu.at(l).join.inputs;
}

// The OK judgment: a union join's pace is the gcd of its upstream paces, an
// intersection join's the lcm. Sources (and ids without a live process) are
// vacuously well-formed.
inline bool wellformed_instance(const IdentEnv& mu, const ProcEnv& nu,
                                const Ident& l) {
  const ResolverEntry& entry = mu.at(l);
  const Process& p = nu.at(l);
  if (p.kind != ProcessKind::Guarded) return true;
  if (p.join.kind != entry.mode) return false;
  std::vector<std::uint64_t> tms;
  for (const auto& in : p.join.inputs) {
    if (!mu.contains(in)) return false;
    tms.push_back(mu.at(in).tm);
  }
  std::uint64_t want =
      entry.mode == JoinKind::Union ? gcd_of(tms) : lcm_of(tms);
  return entry.tm == want;
}

inline bool wellformed_env(const IdentEnv& mu, const ProcEnv& nu) {
  for (const auto& [l, p] : nu.bindings) {
    if (!mu.contains(l)) return false;
    if (!wellformed_instance(mu, nu, l)) return false;
  }
  return true;
}

// Consistency of one id at t (Definition 3.1): an intersection join has a
// record at t iff all its inputs do; a union join iff some input does.
// Sources and ids not bound in nu are vacuously consistent.
inline bool consistent_at(const IdentEnv& mu, const ProcEnv& nu, Timestamp t,
                          const Ident& l) {
  const ResolverEntry& entry = mu.at(l);
  if (!nu.contains(l)) return true;
  const Process& p = nu.at(l);
  if (p.kind != ProcessKind::Guarded) return true;

  bool own = has_record_at(entry.relation, t);
  bool inputs_hold;
  if (p.join.kind == JoinKind::Intersection) {
    inputs_hold = !p.join.inputs.empty();
    for (const auto& in : p.join.inputs)
      if (!has_record_at(mu.at(in).relation, t)) {
        inputs_hold = false;
        break;
      }
  } else {
    inputs_hold = false;
    for (const auto& in : p.join.inputs)
      if (has_record_at(mu.at(in).relation, t)) {
        inputs_hold = true;
        break;
      }
  }
  return own == inputs_hold;
}

struct Violation {
  Ident id;
  JoinKind mode = JoinKind::Union;
  IdentList inputs_with_records;  // evidence at t
  bool found = false;             // whether the id itself has a record at t
};

struct ConsistencyReport {
  Timestamp checked_at;
  std::vector<Violation> violations;  // empty iff consistent

  bool consistent() const { return violations.empty(); }
};

inline ConsistencyReport consistent_env(const IdentEnv& mu, const ProcEnv& nu,
                                        Timestamp t) {
  ConsistencyReport report;
  report.checked_at = t;
  for (const auto& [l, entry] : mu.entries) {
    if (consistent_at(mu, nu, t, l)) continue;
    Violation v;
    v.id = l;
    v.mode = entry.mode;
    v.found = has_record_at(entry.relation, t);
    for (const auto& in : nu.at(l).join.inputs)
      if (has_record_at(mu.at(in).relation, t)) v.inputs_with_records.push_back(in);
    report.violations.push_back(std::move(v));
  }
  return report;
}

// --- equivalences over environments -----------------------------------

namespace detail {

inline void require_same_domain(const IdentEnv& a, const IdentEnv& b) {
  if (a.entries.size() != b.entries.size())
    fail(ErrorCode::DomainMismatch, "identifier environments differ in size");
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  for (; ia != a.entries.end(); ++ia, ++ib)
    if (ia->first != ib->first)
      fail(ErrorCode::DomainMismatch,
           ia->first.name + " vs " + ib->first.name);
}

inline bool rows_equal_where(const Relation& a, const Relation& b,
                             auto&& cond) {
  auto ia = a.rows.begin();
  auto ib = b.rows.begin();
  for (;;) {
    while (ia != a.rows.end() && !cond(ia->first)) ++ia;
    while (ib != b.rows.end() && !cond(ib->first)) ++ib;
    if (ia == a.rows.end() || ib == b.rows.end())
      return ia == a.rows.end() && ib == b.rows.end();
    if (ia->first != ib->first || ia->second != ib->second) return false;
    ++ia;
    ++ib;
  }
}

}  // namespace detail

// Record presence and values agree at every time <= t.
inline bool equiv_records_upto(const IdentEnv& a, const IdentEnv& b,
                               Timestamp t) {
  detail::require_same_domain(a, b);
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  for (; ia != a.entries.end(); ++ia, ++ib)
    if (!detail::rows_equal_where(ia->second.relation, ib->second.relation,
                                  [&](Timestamp rt) { return rt <= t; }))
      return false;
  return true;
}

// Record presence and values agree at exactly t, restricted to `ids`.
inline bool equiv_records_at(const IdentEnv& a, const IdentEnv& b, Timestamp t,
                             const IdentSet& ids) {
  for (const auto& l : ids) {
    if (!a.contains(l) || !b.contains(l))
      fail(ErrorCode::DomainMismatch, l.name);
    if (!detail::rows_equal_where(a.at(l).relation, b.at(l).relation,
                                  [&](Timestamp rt) { return rt == t; }))
      return false;
  }
  return true;
}

inline bool equiv_tm(const IdentEnv& a, const IdentEnv& b) {
  detail::require_same_domain(a, b);
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  for (; ia != a.entries.end(); ++ia, ++ib)
    if (ia->second.tm != ib->second.tm) return false;
  return true;
}

inline bool equiv_mode(const IdentEnv& a, const IdentEnv& b) {
  detail::require_same_domain(a, b);
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  for (; ia != a.entries.end(); ++ia, ++ib)
    if (ia->second.mode != ib->second.mode) return false;
  return true;
}

inline IdentEnv restrict(const IdentEnv& mu, const IdentSet& ids) {
  IdentEnv out;
  for (const auto& l : ids) {
    auto it = mu.entries.find(l);
    if (it != mu.entries.end()) out.entries.insert(*it);
  }
  return out;
}

// Snapshot domains and snapshots agree for times <= t.
inline bool history_equiv_upto(const SwitchHistory& a, const SwitchHistory& b,
                               Timestamp t) {
  auto ia = a.snapshots.begin();
  auto ib = b.snapshots.begin();
  for (;;) {
    while (ia != a.snapshots.end() && ia->first > t) ++ia;
    while (ib != b.snapshots.end() && ib->first > t) ++ib;
    if (ia == a.snapshots.end() || ib == b.snapshots.end())
      return ia == a.snapshots.end() && ib == b.snapshots.end();
    if (ia->first != ib->first || !(ia->second == ib->second)) return false;
    ++ia;
    ++ib;
  }
}

}  // namespace zdps
