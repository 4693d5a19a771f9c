#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "zdps/consistency.hpp"
#include "zdps/engine.hpp"
#include "zdps/recovery.hpp"

namespace zdps {

// Random well-formed networks for the theorem suites. Nodes are indexed so
// that join inputs always point to lower indices, which keeps every generated
// topology (and every same-pace upstream switch) acyclic by construction.

namespace netgen {

// closed under both gcd and lcm (the divisors of 12)
inline const std::vector<std::uint64_t> kPaces{1, 2, 3, 4, 6, 12};

struct GenNet {
  MachineState state;
  std::vector<Ident> order;  // generation order, inputs before consumers
};

inline Ident node_id(size_t i) { return Ident("l" + std::to_string(i + 1)); }

inline Expression slot_read(const Expression& self, const std::string& slot) {
  return Expression::field_signal(Expression::field_upstream(self, slot), "p");
}

// One effect body over the node's slots: a combinator over slot reads, a
// bare slot read, a method dispatch, or a read of the node's own past.
inline Expression gen_effect(std::mt19937_64& rng, const Ident& self_id,
                             const std::vector<std::string>& slots,
                             bool& wants_method) {
  Expression self = Expression::id(self_id);
  std::uniform_int_distribution<int> pick(0, 9);
  int choice = slots.empty() ? 9 : pick(rng);
  if (choice < 4) {
    std::vector<Expression> reads;
    for (const auto& s : slots) reads.push_back(slot_read(self, s));
    return Expression::combine("f", std::move(reads));
  }
  if (choice < 6) return slot_read(self, slots[rng() % slots.size()]);
  if (choice < 8) {
    wants_method = true;
    return Expression::method_access(self, "m");
  }
  if (choice < 9 && !slots.empty())
    return Expression::combine(
        "g", {slot_read(self, slots[0]), Expression::field_signal(self, "p")});
  return Expression::id("v" + self_id.name);
}

inline GenNet gen_network(std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> size_dist(2, 8);
  size_t n = size_dist(rng);

  GenNet net;
  for (size_t i = 0; i < n; ++i) {
    Ident id = node_id(i);
    net.order.push_back(id);

    IdentList inputs;
    std::vector<std::string> slots;
    if (i > 0) {
      for (size_t j = 0; j < i && inputs.size() < 3; ++j) {
        if (rng() % 2) {
          inputs.push_back(node_id(j));
          slots.push_back("s" + std::to_string(j + 1));
        }
      }
    }

    JoinKind mode = rng() % 2 ? JoinKind::Union : JoinKind::Intersection;
    std::uint64_t tm;
    if (inputs.empty()) {
      tm = kPaces[rng() % kPaces.size()];
    } else {
      std::vector<std::uint64_t> up;
      for (const auto& in : inputs) up.push_back(net.state.mu.at(in).tm);
      tm = mode == JoinKind::Union ? gcd_of(up) : lcm_of(up);
    }

    bool wants_method = false;
    Process p;
    p.out = id;
    p.kind = inputs.empty() ? ProcessKind::Source : ProcessKind::Guarded;
    p.join.kind = mode;
    p.join.inputs = inputs;
    p.slot_names = slots;
    p.effects.push_back(gen_effect(rng, id, slots, wants_method));
    if (wants_method) {
      Expression x = Expression::var("x");
      std::vector<Expression> reads;
      for (const auto& s : slots)
        reads.push_back(Expression::field_signal(
            Expression::field_upstream(x, s), "p"));
      if (reads.empty()) reads.push_back(Expression::id("vm"));
      p.methods.push_back(
          make_method("m", "x", Expression::combine("h", std::move(reads))));
    }

    ResolverEntry entry;
    entry.relation = Relation({"p"}, {Ident("init")});
    entry.tm = tm;
    entry.mode = mode;
    net.state.mu.entries.emplace(id, std::move(entry));
    net.state.nu.bindings.emplace(id, std::move(p));
  }

  net.state.phi =
      history_record(SwitchHistory{}, Timestamp::at(0), net.state.nu);
  net.state.t = Timestamp::at(0);
  net.state.expr = Expression::id("v0");
  return net;
}

// Advance a few full steps so the tested step starts from a lived-in state.
inline void prime(MachineState& s, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> ticks(1, 4);
  int k = ticks(rng);
  for (int i = 0; i < k; ++i) s = step(std::move(s)).state_after;
}

// A legal explicit step for the theorem cases: a value, a pure read, a fresh
// object creation (pre-registered in mu), or a pace-preserving upstream
// switch.
inline Expression gen_step_expr(std::mt19937_64& rng, GenNet& net,
                                int case_index) {
  MachineState& s = net.state;
  std::uniform_int_distribution<int> pick(0, 9);
  int choice = pick(rng);

  if (choice < 3) return Expression::id("v0");

  if (choice < 5) {
    const Ident& target = net.order[rng() % net.order.size()];
    return Expression::field_signal(Expression::id(target), "p");
  }

  if (choice < 8) {
    Ident fresh("o" + std::to_string(case_index));
    IdentList inputs;
    std::vector<std::string> slots;
    for (size_t j = 0; j < net.order.size() && inputs.size() < 2; ++j)
      if (rng() % 3 == 0) {
        inputs.push_back(net.order[j]);
        slots.push_back("s" + std::to_string(j + 1));
      }
    JoinKind mode = rng() % 2 ? JoinKind::Union : JoinKind::Intersection;
    std::uint64_t tm;
    if (inputs.empty()) {
      tm = kPaces[rng() % kPaces.size()];
    } else {
      std::vector<std::uint64_t> up;
      for (const auto& in : inputs) up.push_back(s.mu.at(in).tm);
      tm = mode == JoinKind::Union ? gcd_of(up) : lcm_of(up);
    }
    ResolverEntry entry;
    entry.relation = Relation({"p"}, {Ident("init")});
    entry.tm = tm;
    entry.mode = mode;
    s.mu.entries.emplace(fresh, std::move(entry));

    Expression self = Expression::id(fresh);
    std::vector<std::pair<std::string, Expression>> signals;
    signals.emplace_back(
        "p", inputs.empty() ? Expression::id("vo")
                            : slot_read(self, slots[0]));
    std::vector<std::pair<std::string, Expression>> upstreams;
    for (size_t i = 0; i < inputs.size(); ++i)
      upstreams.emplace_back(slots[i], Expression::id(inputs[i]));
    return Expression::object(fresh, std::move(signals), std::move(upstreams),
                              {});
  }

  // upstream switch preserving each replaced input's pace
  for (size_t attempt = 0; attempt < net.order.size(); ++attempt) {
    const Ident& l = net.order[rng() % net.order.size()];
    const Process& p = s.nu.at(l);
    if (p.kind != ProcessKind::Guarded) continue;
    size_t consumer_index = 0;
    for (size_t i = 0; i < net.order.size(); ++i)
      if (net.order[i] == l) consumer_index = i;

    IdentList new_inputs = p.join.inputs;
    size_t pos = rng() % new_inputs.size();
    std::uint64_t want_tm = s.mu.at(new_inputs[pos]).tm;
    for (size_t j = 0; j < consumer_index; ++j) {
      const Ident& cand = net.order[j];
      if (s.mu.at(cand).tm != want_tm) continue;
      bool already = false;
      for (const auto& in : new_inputs) already = already || in == cand;
      if (already) continue;
      new_inputs[pos] = cand;
      break;
    }
    std::vector<Expression> args;
    for (const auto& in : new_inputs) args.push_back(Expression::id(in));
    return Expression::setu(Expression::id(l), std::move(args));
  }
  return Expression::id("v0");
}

inline IdentSet gen_deliver(std::mt19937_64& rng, const MachineState& s) {
  int style = static_cast<int>(rng() % 4);
  IdentSet out;
  if (style == 0) return out;  // total loss
  for (const auto& [l, e] : s.mu.entries) {
    if (style == 1) {
      out.insert(l);  // full delivery
    } else if (rng() % 2) {
      out.insert(l);
    }
  }
  return out;
}

}  // namespace netgen

struct OracleResult {
  std::uint64_t cases_run = 0;
  std::optional<std::uint64_t> failed_case;
  std::string detail;

  bool ok() const { return !failed_case.has_value(); }
};

// Theorem 3.1 suite: after a full step from a well-formed state satisfying
// the record hypothesis, every id is consistent at the step time under the
// topology the switch history records for it.
inline OracleResult oracle_thm31(std::uint64_t cases, std::uint64_t seed) {
  OracleResult res;
  for (std::uint64_t i = 0; i < cases; ++i) {
    std::mt19937_64 rng(seed * 1000003 + i);
    netgen::GenNet net = netgen::gen_network(rng);
    netgen::prime(net.state, rng);
    net.state.expr =
        netgen::gen_step_expr(rng, net, static_cast<int>(i));

    if (!wellformed_env(net.state.mu, net.state.nu)) {
      res.failed_case = i;
      res.detail = "generator produced an ill-formed network";
      return res;
    }
    Timestamp t = net.state.t;
    StepReport rep = step(std::move(net.state));
    ConsistencyReport cr =
        consistent_env(rep.state_after.mu,
                       history_at(rep.state_after.phi, t), t);
    ++res.cases_run;
    if (!cr.consistent()) {
      res.failed_case = i;
      res.detail = "case " + std::to_string(i) + ": " +
                   std::to_string(cr.violations.size()) +
                   " violation(s) at t=" + t.str() + ", first at " +
                   cr.violations.front().id.name +
                   " (replay seed " + std::to_string(seed) + ", case " +
                   std::to_string(i) + ")";
      return res;
    }
  }
  return res;
}

// Theorem 3.2 suite: re-execution after an arbitrary lost step matches the
// full step under all eight conclusion relations.
inline OracleResult oracle_thm32(std::uint64_t cases, std::uint64_t seed) {
  OracleResult res;
  for (std::uint64_t i = 0; i < cases; ++i) {
    std::mt19937_64 rng(seed * 2000003 + i);
    netgen::GenNet net = netgen::gen_network(rng);
    netgen::prime(net.state, rng);
    net.state.expr =
        netgen::gen_step_expr(rng, net, static_cast<int>(i));
    IdentSet deliver = netgen::gen_deliver(rng, net.state);

    ++res.cases_run;
    if (!theorem2_oracle(net.state, deliver)) {
      res.failed_case = i;
      res.detail = "case " + std::to_string(i) +
                   ": re-execution disagrees with the full step (replay seed " +
                   std::to_string(seed) + ", case " + std::to_string(i) + ")";
      return res;
    }
  }
  return res;
}

}  // namespace zdps
