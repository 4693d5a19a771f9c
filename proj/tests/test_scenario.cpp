#include "catch2/catch_amalgamated.hpp"
#include "zdps/scenario.hpp"

using namespace zdps;

TEST_CASE("scenario files parse sections and keys") {
  const char* text = R"(
// comment line
program = net.zdps
ticks = 12
tick_seconds = 5
seed = 42

[loss]
1: l3
4: l1,l2

[faults]
5: l3

[streams]
l1@0 = v0
l1@2 = v2
)";
  Scenario sc = parse_scenario(text);
  CHECK(sc.program == "net.zdps");
  CHECK(sc.ticks == 12);
  CHECK(sc.tick_seconds == 5);
  CHECK(sc.seed == 42);
  CHECK(sc.loss.at(Timestamp::at(1)) == IdentSet{Ident("l3")});
  CHECK(sc.loss.at(Timestamp::at(4)) ==
        IdentSet{Ident("l1"), Ident("l2")});
  CHECK(sc.faults.at(Timestamp::at(5)) == IdentSet{Ident("l3")});
  CHECK(sc.streams.lookup(Ident("l1"), Timestamp::at(2)) == Ident("v2"));
  CHECK_FALSE(sc.streams.lookup(Ident("l1"), Timestamp::at(1)).has_value());
  CHECK(sc.streams.has_stream(Ident("l1")));
  CHECK_FALSE(sc.streams.has_stream(Ident("l2")));
}

TEST_CASE("scenario errors carry line context") {
  CHECK_THROWS_AS(parse_scenario("ticks = 1\n"), Error);  // no program
  CHECK_THROWS_AS(parse_scenario("program = p\nticks = x\n"), Error);
  CHECK_THROWS_AS(parse_scenario("program = p\nwhat = 1\n"), Error);
  CHECK_THROWS_AS(parse_scenario("program = p\n[nope]\n"), Error);
  CHECK_THROWS_AS(parse_scenario("program = p\n[loss]\nbroken\n"), Error);
}
