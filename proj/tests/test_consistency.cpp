#include <random>

#include "b1_fixture.hpp"
#include "catch2/catch_amalgamated.hpp"
#include "zdps/consistency.hpp"
#include "zdps/netgen.hpp"

using namespace zdps;

namespace {

// a resolver/network pair with arbitrary paces for the OK-judgment cases
struct Pair {
  IdentEnv mu;
  ProcEnv nu;
};

Pair ok_case(JoinKind mode, std::vector<std::uint64_t> upstream_tms,
             std::uint64_t own_tm) {
  Pair out;
  IdentList inputs;
  for (size_t i = 0; i < upstream_tms.size(); ++i) {
    Ident id("u" + std::to_string(i + 1));
    inputs.push_back(id);
    ResolverEntry e;
    e.relation = Relation({"p"}, {Ident("l_init")});
    e.tm = upstream_tms[i];
    out.mu.entries.emplace(id, std::move(e));
    Process p;
    p.kind = ProcessKind::Source;
    p.out = id;
    p.effects.push_back(Expression::id("v"));
    out.nu.bindings.emplace(id, std::move(p));
  }
  Ident own("x0");
  ResolverEntry e;
  e.relation = Relation({"p"}, {Ident("l_init")});
  e.tm = own_tm;
  e.mode = mode;
  out.mu.entries.emplace(own, std::move(e));
  Process p;
  p.kind = ProcessKind::Guarded;
  p.out = own;
  p.join.kind = mode;
  p.join.inputs = inputs;
  for (size_t i = 0; i < inputs.size(); ++i)
    p.slot_names.push_back("s" + std::to_string(i + 1));
  p.effects.push_back(Expression::id("v"));
  out.nu.bindings.emplace(own, std::move(p));
  return out;
}

}  // namespace

TEST_CASE("input channels") {
  MachineState s = b1::make_state();
  CHECK(input_channels(s.nu, Ident("l5")) ==
        IdentList{Ident("l3"), Ident("l4")});
  CHECK(input_channels(s.nu, Ident("l1")).empty());
  CHECK_THROWS_AS(input_channels(s.nu, Ident("zz")), Error);
}

TEST_CASE("the OK judgment uses gcd for unions and lcm for intersections") {
  Pair u = ok_case(JoinKind::Union, {30, 45}, 15);
  CHECK(wellformed_instance(u.mu, u.nu, Ident("x0")));
  Pair i = ok_case(JoinKind::Intersection, {2, 3}, 6);
  CHECK(wellformed_instance(i.mu, i.nu, Ident("x0")));
  Pair bad = ok_case(JoinKind::Union, {30, 45}, 5);
  CHECK_FALSE(wellformed_instance(bad.mu, bad.nu, Ident("x0")));
  // faster than any upstream supports
  Pair fast = ok_case(JoinKind::Intersection, {2, 3}, 1);
  CHECK_FALSE(wellformed_instance(fast.mu, fast.nu, Ident("x0")));
}

TEST_CASE("sources are vacuously well-formed") {
  MachineState s = b1::make_state();
  CHECK(wellformed_instance(s.mu, s.nu, Ident("l1")));
}

TEST_CASE("wellformed_env over the five-node network") {
  MachineState s = b1::make_state();
  CHECK(wellformed_env(s.mu, s.nu));
  // break one pace
  s.mu.at_mut(Ident("l5")).tm = 2;
  CHECK_FALSE(wellformed_env(s.mu, s.nu));
}

TEST_CASE("wellformed_env requires nu ids to be resolvable") {
  MachineState s = b1::make_state();
  s.mu.entries.erase(Ident("l4"));
  CHECK_FALSE(wellformed_env(s.mu, s.nu));
}

TEST_CASE("consistency of an intersection join") {
  MachineState s = b1::make_state();
  Timestamp t = Timestamp::at(4);
  s.mu.at_mut(Ident("l3")).relation.put(t, {Ident("vc")});
  s.mu.at_mut(Ident("l4")).relation.put(t, {Ident("vd")});
  // both inputs recorded, own record present -> consistent
  s.mu.at_mut(Ident("l5")).relation.put(t, {Ident("ve")});
  CHECK(consistent_at(s.mu, s.nu, t, Ident("l5")));
  // own record missing while both inputs recorded -> inconsistent
  s.mu.at_mut(Ident("l5")).relation.rows.erase(t);
  CHECK_FALSE(consistent_at(s.mu, s.nu, t, Ident("l5")));
}

TEST_CASE("consistency of a union join") {
  MachineState s = b1::make_state();
  Timestamp t = Timestamp::at(4);
  s.mu.at_mut(Ident("l1")).relation.put(t, {Ident("va")});
  s.mu.at_mut(Ident("l3")).relation.put(t, {Ident("vc")});
  CHECK(consistent_at(s.mu, s.nu, t, Ident("l3")));
  // no input recorded but own record present -> inconsistent
  Timestamp t2 = Timestamp::at(6);
  s.mu.at_mut(Ident("l3")).relation.put(t2, {Ident("vc2")});
  CHECK_FALSE(consistent_at(s.mu, s.nu, t2, Ident("l3")));
}

TEST_CASE("sources and unresolved ids are vacuously consistent") {
  MachineState s = b1::make_state();
  CHECK(consistent_at(s.mu, s.nu, Timestamp::at(9), Ident("l1")));
  ResolverEntry extra;
  extra.relation = Relation({"p"}, {Ident("l_init")});
  s.mu.entries.emplace(Ident("l9"), extra);  // registered, never bound
  CHECK(consistent_at(s.mu, s.nu, Timestamp::at(9), Ident("l9")));
}

TEST_CASE("a lost union fire shows up as a violation at the join itself") {
  LossSchedule loss;
  loss[Timestamp::at(1)] = IdentSet{Ident("l3")};
  RunResult rr = run(b1::make_state(), 3, loss);
  ConsistencyReport report =
      consistent_env(rr.state.mu, history_at(rr.state.phi, Timestamp::at(1)),
                     Timestamp::at(1));
  REQUIRE(report.violations.size() == 1);
  // l3's inputs fired but l3 did not; l5 stays consistent because its input
  // l3 has no record either
  CHECK(report.violations[0].id == Ident("l3"));
  CHECK(report.violations[0].mode == JoinKind::Union);
  CHECK_FALSE(report.violations[0].found);
  CHECK(consistent_at(rr.state.mu, rr.state.nu, Timestamp::at(1), Ident("l5")));
}

TEST_CASE("a suppressed intersection join is the violation when inputs fired") {
  LossSchedule loss;
  loss[Timestamp::at(1)] = IdentSet{Ident("l5")};
  RunResult rr = run(b1::make_state(), 3, loss);
  ConsistencyReport report =
      consistent_env(rr.state.mu, history_at(rr.state.phi, Timestamp::at(1)),
                     Timestamp::at(1));
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].id == Ident("l5"));
  CHECK(report.violations[0].mode == JoinKind::Intersection);
}

TEST_CASE("an empty resolver is consistent") {
  CHECK(consistent_env(IdentEnv{}, ProcEnv{}, Timestamp::at(0)).consistent());
}

TEST_CASE("equivalence relations: reflexivity and boundaries") {
  MachineState s = b1::make_state();
  RunResult rr = run(std::move(s), 3);
  const IdentEnv& mu = rr.state.mu;
  CHECK(equiv_records_upto(mu, mu, Timestamp::at(2)));
  CHECK(equiv_tm(mu, mu));
  CHECK(equiv_mode(mu, mu));

  IdentEnv mu2 = mu;
  mu2.at_mut(Ident("l1")).relation.put(Timestamp::at(3), {Ident("extra")});
  CHECK(equiv_records_upto(mu, mu2, Timestamp::at(2)));
  CHECK_FALSE(equiv_records_upto(mu, mu2, Timestamp::at(3)));
  CHECK(equiv_records_at(mu, mu2, Timestamp::at(2), {Ident("l1")}));
  CHECK_FALSE(equiv_records_at(mu, mu2, Timestamp::at(3), {Ident("l1")}));
  CHECK(equiv_records_at(mu, mu2, Timestamp::at(3), {Ident("l2")}));
}

TEST_CASE("equiv_records compares values, not just presence") {
  MachineState s = b1::make_state();
  RunResult rr = run(std::move(s), 2);
  IdentEnv mu2 = rr.state.mu;
  mu2.at_mut(Ident("l1")).relation.put(Timestamp::at(1), {Ident("other")});
  CHECK_FALSE(equiv_records_upto(rr.state.mu, mu2, Timestamp::at(1)));
  CHECK(equiv_records_upto(rr.state.mu, mu2, Timestamp::at(0)));
}

TEST_CASE("domain mismatches are rejected") {
  MachineState s = b1::make_state();
  IdentEnv mu2 = s.mu;
  mu2.entries.erase(Ident("l1"));
  CHECK_THROWS_AS(equiv_records_upto(s.mu, mu2, Timestamp::at(0)), Error);
  CHECK_THROWS_AS(equiv_records_at(s.mu, mu2, Timestamp::at(0),
                                   {Ident("l1")}),
                  Error);
}

TEST_CASE("restrict keeps only the named entries") {
  MachineState s = b1::make_state();
  IdentEnv sub = restrict(s.mu, {Ident("l1"), Ident("l3")});
  CHECK(sub.entries.size() == 2);
  CHECK(sub.contains(Ident("l1")));
  CHECK(sub.contains(Ident("l3")));
}

TEST_CASE("history equivalence ignores snapshots beyond the bound") {
  MachineState s = b1::make_state();
  SwitchHistory phi1 = s.phi;
  SwitchHistory phi2 = history_record(phi1, Timestamp::at(9), ProcEnv{});
  CHECK(history_equiv_upto(phi1, phi2, Timestamp::at(5)));
  CHECK_FALSE(history_equiv_upto(phi1, phi2, Timestamp::at(9)));
}

TEST_CASE("equivalences are equivalence relations") {
  std::mt19937_64 rng(55);
  std::vector<IdentEnv> mus;
  for (int i = 0; i < 6; ++i) {
    MachineState s = b1::make_state();
    LossSchedule loss;
    if (rng() % 2) loss[Timestamp::at(1)] = IdentSet{Ident("l3")};
    if (rng() % 2) loss[Timestamp::at(2)] = IdentSet{Ident("l1")};
    mus.push_back(run(std::move(s), 1 + rng() % 4, loss).state.mu);
  }
  Timestamp t = Timestamp::at(2);
  for (const auto& a : mus) CHECK(equiv_records_upto(a, a, t));
  for (const auto& a : mus)
    for (const auto& b : mus)
      CHECK(equiv_records_upto(a, b, t) == equiv_records_upto(b, a, t));
  for (const auto& a : mus)
    for (const auto& b : mus)
      for (const auto& c : mus)
        if (equiv_records_upto(a, b, t) && equiv_records_upto(b, c, t))
          CHECK(equiv_records_upto(a, c, t));
}

TEST_CASE("propagation preserves the pre-step records, paces and modes") {
  // the Lemma C.3 family, checked on random networks
  std::mt19937_64 rng(77);
  for (int i = 0; i < 30; ++i) {
    netgen::GenNet net = netgen::gen_network(rng);
    netgen::prime(net.state, rng);
    Timestamp t = net.state.t;
    PropagationOutcome out = propagate(net.state.nu, t, net.state.mu);
    CHECK(equiv_records_upto(net.state.mu, out.mu_after, t.pred()));
    CHECK(equiv_tm(net.state.mu, out.mu_after));
    CHECK(equiv_mode(net.state.mu, out.mu_after));
  }
}

TEST_CASE("explicit steps preserve well-formedness") {
  std::mt19937_64 rng(88);
  for (int i = 0; i < 30; ++i) {
    netgen::GenNet net = netgen::gen_network(rng);
    netgen::prime(net.state, rng);
    net.state.expr = netgen::gen_step_expr(rng, net, i + 100000);
    REQUIRE(wellformed_env(net.state.mu, net.state.nu));
    if (net.state.expr.is_value()) continue;
    ExplicitResult r = explicit_step(net.state.mu, net.state.t, net.state.nu,
                                     net.state.phi, net.state.expr);
    CHECK(wellformed_env(net.state.mu, r.nu));
  }
}
