#include <map>

#include "catch2/catch_amalgamated.hpp"
#include "zdps/environments.hpp"

using namespace zdps;

namespace {

Process source(const char* id) {
  Process p;
  p.kind = ProcessKind::Source;
  p.out = Ident(id);
  return p;
}

Process guarded(const char* id, JoinKind kind, std::vector<const char*> ins) {
  Process p;
  p.kind = ProcessKind::Guarded;
  p.out = Ident(id);
  p.join.kind = kind;
  for (size_t i = 0; i < ins.size(); ++i) {
    p.join.inputs.push_back(Ident(ins[i]));
    p.slot_names.push_back("s" + std::to_string(i + 1));
  }
  return p;
}

// the five-node appendix network: two sources into a union, one more source,
// union and source into an intersection
ProcEnv b1_network() {
  ProcEnv nu;
  nu.bindings.emplace(Ident("l1"), source("l1"));
  nu.bindings.emplace(Ident("l2"), source("l2"));
  nu.bindings.emplace(Ident("l3"), guarded("l3", JoinKind::Union, {"l1", "l2"}));
  nu.bindings.emplace(Ident("l4"), source("l4"));
  nu.bindings.emplace(Ident("l5"),
                      guarded("l5", JoinKind::Intersection, {"l3", "l4"}));
  return nu;
}

}  // namespace

TEST_CASE("env_update replaces and extends") {
  std::map<Ident, int> m{{Ident("l1"), 1}};
  auto replaced = env_update(m, Ident("l1"), 2);
  CHECK(replaced.at(Ident("l1")) == 2);
  auto extended = env_update(m, Ident("l2"), 3);
  CHECK(extended.size() == 2);
  CHECK(extended.at(Ident("l1")) == 1);
  CHECK(extended.at(Ident("l2")) == 3);
  CHECK(m.at(Ident("l1")) == 1);  // input untouched
}

TEST_CASE("env_update is idempotent and last-writer-wins") {
  std::map<Ident, int> m{{Ident("l1"), 1}};
  CHECK(env_update(env_update(m, Ident("l1"), 5), Ident("l1"), 5) ==
        env_update(m, Ident("l1"), 5));
  CHECK(env_update(env_update(m, Ident("l1"), 5), Ident("l1"), 7)
            .at(Ident("l1")) == 7);
}

TEST_CASE("history_record and history_at") {
  ProcEnv nu0 = b1_network();
  ProcEnv nu5;
  nu5.bindings.emplace(Ident("l1"), source("l1"));

  SwitchHistory phi;
  phi = history_record(phi, Timestamp::at(0), nu0);
  CHECK(history_at(phi, Timestamp::at(3)) == nu0);

  phi = history_record(phi, Timestamp::at(5), nu5);
  CHECK(history_at(phi, Timestamp::at(3)) == nu0);
  CHECK(history_at(phi, Timestamp::at(5)) == nu5);  // inclusive
  CHECK(history_at(phi, Timestamp::at(9)) == nu5);
}

TEST_CASE("history_record at the same time keeps the later snapshot") {
  ProcEnv a = b1_network();
  ProcEnv b;
  b.bindings.emplace(Ident("l1"), source("l1"));
  SwitchHistory phi;
  phi = history_record(phi, Timestamp::at(2), a);
  phi = history_record(phi, Timestamp::at(2), b);
  CHECK(phi.snapshots.size() == 1);
  CHECK(history_at(phi, Timestamp::at(2)) == b);
}

TEST_CASE("history_at before the first snapshot is an error") {
  SwitchHistory phi;
  phi = history_record(phi, Timestamp::at(5), b1_network());
  CHECK_THROWS_AS(history_at(phi, Timestamp::at(2)), Error);
}

TEST_CASE("history lookup is stable until the next snapshot") {
  ProcEnv nu0 = b1_network();
  ProcEnv nu7;
  nu7.bindings.emplace(Ident("l1"), source("l1"));
  SwitchHistory phi;
  phi = history_record(phi, Timestamp::at(2), nu0);
  phi = history_record(phi, Timestamp::at(7), nu7);
  for (std::int64_t t = 2; t < 7; ++t)
    CHECK(history_at(phi, Timestamp::at(t)) == nu0);
}

TEST_CASE("the five-node network is acyclic and closed") {
  ProcEnv nu = b1_network();
  CHECK(check_acyclic(nu));
  CHECK(check_closed(nu));
}

TEST_CASE("a two-cycle is rejected") {
  ProcEnv nu;
  nu.bindings.emplace(Ident("l1"), guarded("l1", JoinKind::Union, {"l2"}));
  nu.bindings.emplace(Ident("l2"), guarded("l2", JoinKind::Union, {"l1"}));
  CHECK_FALSE(check_acyclic(nu));
}

TEST_CASE("a single source is acyclic; a self-loop is not") {
  ProcEnv nu;
  nu.bindings.emplace(Ident("l1"), source("l1"));
  CHECK(check_acyclic(nu));
  ProcEnv loop;
  loop.bindings.emplace(Ident("l1"), guarded("l1", JoinKind::Union, {"l1"}));
  CHECK_FALSE(check_acyclic(loop));
}

TEST_CASE("acyclicity is invariant under relabeling") {
  // relabel l1..l5 -> m5..m1 (reversing the scan order)
  const char* names[] = {"m5", "m4", "m3", "m2", "m1"};
  auto rename = [&](const char* old) {
    return names[old[1] - '1'];
  };
  ProcEnv nu;
  nu.bindings.emplace(Ident(rename("l1")), source(rename("l1")));
  nu.bindings.emplace(Ident(rename("l2")), source(rename("l2")));
  nu.bindings.emplace(
      Ident(rename("l3")),
      guarded(rename("l3"), JoinKind::Union, {rename("l1"), rename("l2")}));
  nu.bindings.emplace(Ident(rename("l4")), source(rename("l4")));
  nu.bindings.emplace(
      Ident(rename("l5")), guarded(rename("l5"), JoinKind::Intersection,
                                   {rename("l3"), rename("l4")}));
  CHECK(check_acyclic(nu));
}

TEST_CASE("gcd and lcm helpers") {
  CHECK(gcd_of({30, 45}) == 15);
  CHECK(lcm_of({2, 3}) == 6);
  CHECK(gcd_of({4}) == 4);
  CHECK(lcm_of({4}) == 4);
}
