#pragma once

#include <cstdint>
#include <map>
#include <numeric>

#include "zdps/ast.hpp"
#include "zdps/error.hpp"
#include "zdps/ident.hpp"
#include "zdps/relation.hpp"

namespace zdps {

// One ID-resolver entry: the instance's execution history, its update pace in
// logical ticks, and its join mode.
struct ResolverEntry {
  Relation relation;
  std::uint64_t tm = 1;  // >= 1
  JoinKind mode = JoinKind::Union;

  bool operator==(const ResolverEntry&) const = default;
};

// The ID resolver. Its domain is sealed at program setup; reductions replace
// relations but never add or remove ids.
struct IdentEnv {
  std::map<Ident, ResolverEntry> entries;

  bool contains(const Ident& l) const { return entries.count(l) != 0; }

  const ResolverEntry& at(const Ident& l) const {
    auto it = entries.find(l);
    if (it == entries.end()) fail(ErrorCode::UnknownId, l.name);
    return it->second;
  }

  ResolverEntry& at_mut(const Ident& l) {
    auto it = entries.find(l);
    if (it == entries.end()) fail(ErrorCode::UnknownId, l.name);
    return it->second;
  }

  bool operator==(const IdentEnv&) const = default;
};

// The live process network.
struct ProcEnv {
  std::map<Ident, Process> bindings;

  bool contains(const Ident& l) const { return bindings.count(l) != 0; }

  const Process& at(const Ident& l) const {
    auto it = bindings.find(l);
    if (it == bindings.end()) fail(ErrorCode::UnknownId, l.name);
    return it->second;
  }

  bool operator==(const ProcEnv&) const = default;
};

// x (+) key -> val: replace-or-extend, used uniformly for mu, nu and the
// relation row maps.
template <typename Map, typename K, typename V>
Map env_update(const Map& m, const K& key, V val) {
  Map out = m;
  out.insert_or_assign(key, std::move(val));
  return out;
}

inline IdentEnv env_update(const IdentEnv& mu, const Ident& key,
                           ResolverEntry val) {
  IdentEnv out = mu;
  out.entries.insert_or_assign(key, std::move(val));
  return out;
}

inline ProcEnv env_update(const ProcEnv& nu, const Ident& key, Process val) {
  ProcEnv out = nu;
  out.bindings.insert_or_assign(key, std::move(val));
  return out;
}

// Time-indexed record of network topologies. A lookup at t resolves to the
// snapshot with the greatest recorded time <= t.
struct SwitchHistory {
  std::map<Timestamp, ProcEnv> snapshots;

  bool operator==(const SwitchHistory&) const = default;
};

inline SwitchHistory history_record(const SwitchHistory& phi, Timestamp t,
                                    ProcEnv nu) {
  if (t.is_bottom()) fail(ErrorCode::Internal, "snapshot at bottom");
  SwitchHistory out = phi;
  out.snapshots.insert_or_assign(t, std::move(nu));
  return out;
}

inline const ProcEnv& history_at(const SwitchHistory& phi, Timestamp t) {
  auto it = phi.snapshots.upper_bound(t);
  if (it == phi.snapshots.begin())
    fail(ErrorCode::NoSnapshot, "no snapshot at or before " + t.str());
  --it;
  return it->second;
}

// True iff the input-channel graph of nu has no directed cycle. Iterative
// three-colour DFS over edges input -> consumer.
inline bool check_acyclic(const ProcEnv& nu) {
  enum Colour : std::uint8_t { White, Grey, Black };
  std::map<Ident, Colour> colour;
  for (const auto& [id, p] : nu.bindings) colour[id] = White;

  for (const auto& [root, rootp] : nu.bindings) {
    if (colour[root] != White) continue;
    std::vector<std::pair<Ident, size_t>> stack{{root, 0}};
    colour[root] = Grey;
    while (!stack.empty()) {
      const Ident id = stack.back().first;
      const auto& inputs = nu.at(id).join.inputs;
      if (stack.back().second >= inputs.size()) {
        colour[id] = Black;
        stack.pop_back();
        continue;
      }
      const Ident& in = inputs[stack.back().second++];
      auto it = colour.find(in);
      if (it == colour.end()) continue;  // dangling input; closure is a separate check
      if (it->second == Grey) return false;
      if (it->second == White) {
        it->second = Grey;
        stack.emplace_back(in, 0);
      }
    }
  }
  return true;
}

// Every input channel of every guarded process is itself bound.
inline bool check_closed(const ProcEnv& nu) {
  for (const auto& [id, p] : nu.bindings)
    for (const auto& in : p.join.inputs)
      if (!nu.contains(in)) return false;
  return true;
}

inline std::uint64_t gcd_of(const std::vector<std::uint64_t>& xs) {
  std::uint64_t g = 0;
  for (auto x : xs) g = std::gcd(g, x);
  return g;
}

inline std::uint64_t lcm_of(const std::vector<std::uint64_t>& xs) {
  std::uint64_t l = 1;
  for (auto x : xs) l = std::lcm(l, x);
  return l;
}

}  // namespace zdps
