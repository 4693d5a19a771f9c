#include <random>

#include "b1_fixture.hpp"
#include "catch2/catch_amalgamated.hpp"
#include "zdps/engine.hpp"
#include "zdps/netgen.hpp"

using namespace zdps;

namespace {

IdentSet set_of(std::initializer_list<const char*> names) {
  IdentSet out;
  for (const char* n : names) out.insert(Ident(n));
  return out;
}

IdentList list_of(std::initializer_list<const char*> names) {
  IdentList out;
  for (const char* n : names) out.push_back(Ident(n));
  return out;
}

}  // namespace

TEST_CASE("pure reads: explicit mode reads before the step time") {
  MachineState s = b1::make_state();
  // R_l0: BOT -> l_init, 3 -> la, 4 -> lb
  Ident l0("l0");
  ResolverEntry entry;
  entry.relation = Relation({"p"}, {Ident("l_init")});
  entry.relation.put(Timestamp::at(3), {Ident("la")});
  entry.relation.put(Timestamp::at(4), {Ident("lb")});
  s.mu.entries.emplace(l0, entry);

  Expression read = Expression::field_signal(Expression::id(l0), "p");
  CHECK(pure_step(s.mu, s.nu, Timestamp::at(4), EvalMode::explicit_mode(),
                  read) == Expression::id("la"));
  // propagation mode with l0 already computed reads the fresh row
  CHECK(pure_step(s.mu, s.nu, Timestamp::at(4),
                  EvalMode::propagation(set_of({"l0"})),
                  read) == Expression::id("lb"));
  // propagation mode with l0 not yet computed reads the previous row
  CHECK(pure_step(s.mu, s.nu, Timestamp::at(4), EvalMode::propagation({}),
                  read) == Expression::id("la"));
}

TEST_CASE("pure reads at t=0 fall back to the bottom row") {
  MachineState s = b1::make_state();
  Expression read = Expression::field_signal(Expression::id("l1"), "a");
  CHECK(pure_step(s.mu, s.nu, Timestamp::at(0), EvalMode::explicit_mode(),
                  read) == Expression::id("l_init"));
}

TEST_CASE("method access substitutes self") {
  MachineState s = b1::make_state();
  Expression e = Expression::method_access(Expression::id("l3"), "m");
  Expression body = pure_step(s.mu, s.nu, Timestamp::at(0),
                              EvalMode::explicit_mode(), e);
  CHECK(body ==
        Expression::combine(
            "f", {b1::slot_signal(Expression::id("l3"), "s1", "a"),
                  b1::slot_signal(Expression::id("l3"), "s2", "b")}));
}

TEST_CASE("upstream slot access resolves positionally through nu") {
  MachineState s = b1::make_state();
  Expression e = Expression::field_upstream(Expression::id("l5"), "s1");
  CHECK(pure_step(s.mu, s.nu, Timestamp::at(0), EvalMode::explicit_mode(),
                  e) == Expression::id("l3"));
}

TEST_CASE("stuck reads surface as Stuck") {
  MachineState s = b1::make_state();
  Expression e = Expression::field_signal(Expression::id("nowhere"), "p");
  try {
    pure_step(s.mu, s.nu, Timestamp::at(0), EvalMode::explicit_mode(), e);
    FAIL("expected Stuck");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::Stuck);
  }
}

TEST_CASE("R-OBJ binds a source and snapshots the history") {
  MachineState s = b1::make_state();
  ResolverEntry entry;
  entry.relation = Relation({"d"}, {Ident("l_init")});
  entry.tm = 1;
  entry.mode = JoinKind::Union;
  s.mu.entries.emplace(Ident("l6"), entry);

  Expression lit =
      Expression::object(Ident("l6"), {{"d", Expression::id("ld2")}}, {}, {});
  ExplicitResult r = explicit_step(s.mu, Timestamp::at(2), s.nu, s.phi, lit);
  CHECK(r.rule == "R-OBJ");
  CHECK(r.expr == Expression::id("l6"));
  CHECK(r.nu.at(Ident("l6")).kind == ProcessKind::Source);
  CHECK(r.nu.at(Ident("l6")).effects.size() == 1);
  CHECK(history_at(r.phi, Timestamp::at(2)) == r.nu);
  CHECK(history_at(r.phi, Timestamp::at(1)) == s.nu);  // pre-switch view
}

TEST_CASE("R-OBJ rejects labels missing from the resolver") {
  MachineState s = b1::make_state();
  Expression lit = Expression::object(Ident("l9"), {}, {}, {});
  try {
    explicit_step(s.mu, Timestamp::at(0), s.nu, s.phi, lit);
    FAIL("expected UnknownId");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::UnknownId);
  }
}

TEST_CASE("R-SETU swaps the join inputs and snapshots") {
  MachineState s = b1::make_state();
  ResolverEntry entry;
  entry.relation = Relation({"d"}, {Ident("l_init")});
  entry.tm = 1;
  s.mu.entries.emplace(Ident("l6"), entry);
  Expression lit =
      Expression::object(Ident("l6"), {{"d", Expression::id("ld2")}}, {}, {});
  ExplicitResult r1 = explicit_step(s.mu, Timestamp::at(2), s.nu, s.phi, lit);

  Expression sw = Expression::setu(Expression::id("l5"),
                                   {Expression::id("l3"), Expression::id("l6")});
  ExplicitResult r2 =
      explicit_step(s.mu, Timestamp::at(3), r1.nu, r1.phi, sw);
  CHECK(r2.rule == "R-SETU");
  CHECK(r2.expr == Expression::id("l5"));
  CHECK(r2.nu.at(Ident("l5")).join.inputs == list_of({"l3", "l6"}));
  CHECK(r2.nu.at(Ident("l5")).join.kind == JoinKind::Intersection);
  // history straddles the switch
  CHECK(history_at(r2.phi, Timestamp::at(2)).at(Ident("l5")).join.inputs ==
        list_of({"l3", "l4"}));
  CHECK(history_at(r2.phi, Timestamp::at(3)).at(Ident("l5")).join.inputs ==
        list_of({"l3", "l6"}));
}

TEST_CASE("R-SETU rejects cycles without changing the network") {
  MachineState s = b1::make_state();
  Expression sw = Expression::setu(Expression::id("l5"),
                                   {Expression::id("l3"), Expression::id("l5")});
  try {
    explicit_step(s.mu, Timestamp::at(0), s.nu, s.phi, sw);
    FAIL("expected CyclicSwitch");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::CyclicSwitch);
  }
  CHECK(s.nu.at(Ident("l5")).join.inputs == list_of({"l3", "l4"}));
}

TEST_CASE("R-SETU rejects pace-breaking replacements") {
  MachineState s = b1::make_state();
  ResolverEntry slow;
  slow.relation = Relation({"d"}, {Ident("l_init")});
  slow.tm = 2;
  s.mu.entries.emplace(Ident("l7"), slow);
  Process p;
  p.kind = ProcessKind::Source;
  p.out = Ident("l7");
  p.effects.push_back(Expression::id("ld7"));
  ProcEnv nu = env_update(s.nu, Ident("l7"), p);

  Expression sw = Expression::setu(Expression::id("l5"),
                                   {Expression::id("l3"), Expression::id("l7")});
  try {
    explicit_step(s.mu, Timestamp::at(0), nu, s.phi, sw);
    FAIL("expected IllTimedSwitch");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::IllTimedSwitch);
  }
}

TEST_CASE("full propagation fires the whole network in scan order") {
  MachineState s = b1::make_state();
  PropagationOutcome out = propagate(s.nu, Timestamp::at(0), s.mu);
  CHECK(out.fired == list_of({"l1", "l2", "l3", "l4", "l5"}));
  CHECK(out.complete);
  CHECK(latest_at(out.mu_after.at(Ident("l3")).relation, "c",
                  Timestamp::at(0)) == Ident(b1::kValL3));
  CHECK(latest_at(out.mu_after.at(Ident("l5")).relation, "e",
                  Timestamp::at(0)) == Ident(b1::kValL5));
}

TEST_CASE("process_step fires exactly one process") {
  MachineState s = b1::make_state();
  auto one = process_step(s.nu, Timestamp::at(0), s.mu, s.nu, {});
  REQUIRE(one.has_value());
  auto& [mu1, inflight1, fired1] = *one;
  CHECK(fired1 == list_of({"l1"}));
  CHECK(inflight1.at(Ident("l1")).kind == ProcessKind::Emitted);
  CHECK(inflight1.at(Ident("l2")).kind == ProcessKind::Source);
  CHECK(has_record_at(mu1.at(Ident("l1")).relation, Timestamp::at(0)));
}

TEST_CASE("propagation under partial delivery") {
  MachineState s = b1::make_state();
  PropagationOutcome out = propagate(s.nu, Timestamp::at(1), s.mu,
                                     set_of({"l1", "l2", "l4"}));
  CHECK(out.fired == list_of({"l1", "l2", "l4"}));
  CHECK_FALSE(out.complete);
  CHECK_FALSE(has_record_at(out.mu_after.at(Ident("l3")).relation,
                            Timestamp::at(1)));
  CHECK_FALSE(has_record_at(out.mu_after.at(Ident("l5")).relation,
                            Timestamp::at(1)));
}

TEST_CASE("an intersection join needs every input emitted") {
  MachineState s = b1::make_state();
  // l4 excluded: l5 must not fire even though l3 did
  PropagationOutcome out = propagate(s.nu, Timestamp::at(0), s.mu,
                                     set_of({"l1", "l2", "l3", "l5"}));
  CHECK(out.fired == list_of({"l1", "l2", "l3"}));
}

TEST_CASE("sources respect their pace") {
  MachineState s;
  b1::add_source(s, "l1", "a", "la", 2);
  s.phi = history_record(SwitchHistory{}, Timestamp::at(0), s.nu);
  s.expr = Expression::id("l1");
  PropagationOutcome at3 = propagate(s.nu, Timestamp::at(3), s.mu);
  CHECK(at3.fired.empty());
  CHECK(at3.complete);
  PropagationOutcome at4 = propagate(s.nu, Timestamp::at(4), s.mu);
  CHECK(at4.fired == list_of({"l1"}));
}

TEST_CASE("a union join over slower sources fires only when an input does") {
  // sources at pace 2 and 3 into a union join at pace gcd = 1
  MachineState s;
  b1::add_source(s, "l1", "a", "la", 2);
  b1::add_source(s, "l2", "b", "lb", 3);
  Ident l3("l3");
  ResolverEntry entry;
  entry.relation = Relation({"c"}, {Ident("l_init")});
  entry.tm = 1;
  entry.mode = JoinKind::Union;
  s.mu.entries.emplace(l3, std::move(entry));
  Process p;
  p.kind = ProcessKind::Guarded;
  p.out = l3;
  p.join = {JoinKind::Union, {Ident("l1"), Ident("l2")}};
  p.slot_names = {"s1", "s2"};
  p.effects.push_back(b1::slot_signal(Expression::id(l3), "s1", "a"));
  s.nu.bindings.emplace(l3, std::move(p));

  // t=1: no source is paced, so nothing should fire and that is complete
  PropagationOutcome at1 = propagate(s.nu, Timestamp::at(1), s.mu);
  CHECK(at1.fired.empty());
  CHECK(at1.complete);
  // t=2: l1 fires, the union follows; t=3: l2 fires, the union follows
  CHECK(propagate(s.nu, Timestamp::at(2), s.mu).fired ==
        list_of({"l1", "l3"}));
  CHECK(propagate(s.nu, Timestamp::at(3), s.mu).fired ==
        list_of({"l2", "l3"}));
  CHECK(propagate(s.nu, Timestamp::at(6), s.mu).fired ==
        list_of({"l1", "l2", "l3"}));
}

TEST_CASE("union zip: non-fired inputs are read at their last value") {
  MachineState s = b1::make_state();
  // run t=0 fully, then fire only l1 and l3 at t=1
  s = step(std::move(s)).state_after;
  PropagationOutcome out =
      propagate(s.nu, Timestamp::at(1), s.mu, set_of({"l1", "l3"}));
  CHECK(out.fired == list_of({"l1", "l3"}));
  // l3 reads the fresh l1 row and l2's t=0 row
  CHECK(latest_at(out.mu_after.at(Ident("l3")).relation, "c",
                  Timestamp::at(1)) == Ident("f(la,lb)"));
}

TEST_CASE("step on a value keeps the expression and advances time") {
  MachineState s = b1::make_state();
  StepReport rep = step(std::move(s));
  CHECK(rep.explicit_rule == "NOOP");
  CHECK(rep.state_after.expr == Expression::id("l5"));
  CHECK(rep.state_after.t == Timestamp::at(1));
  CHECK(rep.outcome.fired.size() == 5);
  CHECK(rep.state_after.nu == b1::make_state().nu);  // propagation keeps nu
}

TEST_CASE("step with empty delivery inserts nothing") {
  MachineState s = b1::make_state();
  StepReport rep = step(std::move(s), IdentSet{});
  CHECK(rep.outcome.fired.empty());
  for (const auto& [l, e] : rep.state_after.mu.entries)
    CHECK_FALSE(has_record_at(e.relation, Timestamp::at(0)));
  CHECK(rep.state_after.t == Timestamp::at(1));
}

TEST_CASE("run for three ticks produces fifteen fire records") {
  RunResult rr = run(b1::make_state(), 3);
  int fires = 0;
  for (const auto& line : rr.trace)
    if (line.find("\tFIRE\t") != std::string::npos) ++fires;
  CHECK(fires == 15);
  // cross-check against stored rows: three per relation
  for (const auto& [l, e] : rr.state.mu.entries)
    CHECK(timestamps_upto(e.relation, Timestamp::at(2)).size() == 3);
}

TEST_CASE("run with a lost union input leaves the downstream rows missing") {
  LossSchedule loss;
  loss[Timestamp::at(1)] = set_of({"l3"});
  RunResult rr = run(b1::make_state(), 3, loss);
  CHECK_FALSE(has_record_at(rr.state.mu.at(Ident("l3")).relation,
                            Timestamp::at(1)));
  CHECK_FALSE(has_record_at(rr.state.mu.at(Ident("l5")).relation,
                            Timestamp::at(1)));
  CHECK(has_record_at(rr.state.mu.at(Ident("l3")).relation, Timestamp::at(2)));
  int lost = 0;
  for (const auto& line : rr.trace)
    if (line.rfind("1\tLOST\t", 0) == 0) ++lost;
  CHECK(lost == 2);  // l3 itself and the blocked l5
}

TEST_CASE("run for zero ticks changes nothing") {
  MachineState s0 = b1::make_state();
  RunResult rr = run(b1::make_state(), 0);
  CHECK(rr.trace.empty());
  CHECK(rr.state.mu == s0.mu);
  CHECK(rr.state.t == s0.t);
}

TEST_CASE("fire-once and topological soundness") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 40; ++i) {
    netgen::GenNet net = netgen::gen_network(rng);
    Timestamp t = Timestamp::at(static_cast<std::int64_t>(rng() % 6));
    PropagationOutcome out = propagate(net.state.nu, t, net.state.mu);

    IdentSet seen;
    for (const auto& l : out.fired) CHECK(seen.insert(l).second);

    for (size_t k = 0; k < out.fired.size(); ++k) {
      const Process& p = net.state.nu.at(out.fired[k]);
      if (p.kind != ProcessKind::Guarded) continue;
      IdentSet before(out.fired.begin(), out.fired.begin() + k);
      bool some = false;
      bool all = true;
      for (const auto& in : p.join.inputs) {
        some = some || before.count(in);
        all = all && before.count(in);
      }
      if (p.join.kind == JoinKind::Union) CHECK(some);
      else CHECK(all);
    }
  }
}

TEST_CASE("loss monotonicity: more delivery never fires less") {
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 40; ++i) {
    netgen::GenNet net = netgen::gen_network(rng);
    Timestamp t = Timestamp::at(static_cast<std::int64_t>(rng() % 4));
    IdentSet d2;
    for (const auto& [l, e] : net.state.mu.entries)
      if (rng() % 2) d2.insert(l);
    IdentSet d1;
    for (const auto& l : d2)
      if (rng() % 2) d1.insert(l);

    auto f1 = propagate(net.state.nu, t, net.state.mu, d1).fired;
    auto f2 = propagate(net.state.nu, t, net.state.mu, d2).fired;
    IdentSet s2(f2.begin(), f2.end());
    for (const auto& l : f1) CHECK(s2.count(l));
  }
}

TEST_CASE("identical inputs give byte-identical runs") {
  LossSchedule loss;
  loss[Timestamp::at(1)] = set_of({"l2", "l4"});
  RunResult a = run(b1::make_state(), 4, loss);
  RunResult b = run(b1::make_state(), 4, loss);
  CHECK(a.trace == b.trace);
  CHECK(a.state.mu == b.state.mu);
}

TEST_CASE("propagating an empty network is complete and fires nothing") {
  PropagationOutcome out = propagate(ProcEnv{}, Timestamp::at(0), IdentEnv{});
  CHECK(out.fired.empty());
  CHECK(out.complete);
}

TEST_CASE("a stuck effect aborts the whole propagation step") {
  MachineState s = b1::make_state();
  Process bad;
  bad.kind = ProcessKind::Source;
  bad.out = Ident("l9");
  bad.effects.push_back(
      Expression::field_signal(Expression::id("l9"), "missing"));
  ResolverEntry entry;
  entry.relation = Relation({"z"}, {Ident("l_init")});
  s.mu.entries.emplace(Ident("l9"), entry);
  s.nu.bindings.emplace(Ident("l9"), bad);
  try {
    propagate(s.nu, Timestamp::at(0), s.mu);
    FAIL("expected EffectStuck");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::EffectStuck);
  }
}
