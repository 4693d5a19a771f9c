// zdps: parse, execute, fault-inject, check and recover signal-class
// programs with persistent (time-series) signals.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "zdps/consistency.hpp"
#include "zdps/dsl.hpp"
#include "zdps/dump.hpp"
#include "zdps/engine.hpp"
#include "zdps/netgen.hpp"
#include "zdps/recovery.hpp"
#include "zdps/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolated = 1;
constexpr int kExitInput = 2;
constexpr int kExitInternal = 3;

bool is_input_error(zdps::ErrorCode c) {
  using EC = zdps::ErrorCode;
  switch (c) {
    case EC::SyntaxError:
    case EC::AnnotationError:
    case EC::CyclicWiring:
    case EC::IndivisiblePeriod:
    case EC::UnknownClass:
    case EC::DuplicateId:
    case EC::UnknownId:
    case EC::ArityMismatch:
      return true;
    default:
      return false;
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) zdps::fail(zdps::ErrorCode::Internal, "cannot write " + path);
  out << content;
}

struct LoadedScenario {
  zdps::Scenario scenario;
  zdps::LoweredProgram program;
};

LoadedScenario load_scenario(const std::string& path,
                             std::optional<std::uint64_t> tick_override) {
  LoadedScenario ls;
  ls.scenario = zdps::parse_scenario(zdps::read_file(path));
  if (tick_override) ls.scenario.tick_seconds = *tick_override;

  std::filesystem::path program_path(ls.scenario.program);
  if (program_path.is_relative())
    program_path = std::filesystem::path(path).parent_path() / program_path;

  zdps::ParsedProgram prog =
      zdps::parse_program(zdps::read_file(program_path.string()));
  ls.program = zdps::lower(prog, ls.scenario.tick_seconds);

  auto check_ids = [&](const zdps::IdentSet& ids, const char* where) {
    for (const auto& l : ids)
      if (!ls.program.mu0.contains(l))
        zdps::fail(zdps::ErrorCode::UnknownId,
                   l.name + std::string(" in ") + where);
  };
  for (const auto& [t, ids] : ls.scenario.loss) check_ids(ids, "loss schedule");
  for (const auto& [t, ids] : ls.scenario.faults)
    check_ids(ids, "fault schedule");
  for (const auto& [key, v] : ls.scenario.streams.values)
    if (!ls.program.mu0.contains(key.first))
      zdps::fail(zdps::ErrorCode::UnknownId, key.first.name + " in streams");
  return ls;
}

zdps::RunResult execute(const LoadedScenario& ls) {
  const zdps::SourceStreams* streams =
      ls.scenario.has_streams() ? &ls.scenario.streams : nullptr;
  return zdps::run(zdps::initial_state(ls.program), ls.scenario.ticks,
                   ls.scenario.loss, streams);
}

std::vector<zdps::Timestamp> checkpoint_times(
    const LoadedScenario& ls, const std::vector<std::uint64_t>& recover_at) {
  std::vector<zdps::Timestamp> times;
  if (!recover_at.empty()) {
    for (auto t : recover_at)
      times.push_back(zdps::Timestamp::at(static_cast<std::int64_t>(t)));
    return times;
  }
  // no explicit times: derive them from the @checkpointInterval annotations
  std::set<std::int64_t> ticks;
  for (const auto& [l, interval] : ls.program.checkpoint_intervals) {
    if (!interval) continue;
    for (std::uint64_t t = *interval; t <= ls.scenario.ticks; t += *interval)
      ticks.insert(static_cast<std::int64_t>(t));
  }
  for (auto t : ticks) times.push_back(zdps::Timestamp::at(t));
  return times;
}

int cmd_parse(const std::string& program_path, std::uint64_t tick_seconds) {
  zdps::ParsedProgram prog =
      zdps::parse_program(zdps::read_file(program_path));
  zdps::LoweredProgram lp = zdps::lower(prog, tick_seconds);
  std::cout << zdps::dump_store(lp.mu0);
  std::cout << zdps::dump_history(lp.phi0);
  std::cout << "E0\t" << zdps::to_string(lp.e0) << "\n";
  return kExitOk;
}

int cmd_run(const std::string& scenario_path,
            std::optional<std::uint64_t> tick_override,
            const std::string& trace_path, const std::string& store_path,
            const std::string& history_path) {
  LoadedScenario ls = load_scenario(scenario_path, tick_override);
  zdps::RunResult rr = execute(ls);

  std::string trace;
  for (const auto& line : rr.trace) trace += line + "\n";
  if (trace_path.empty())
    std::cout << trace;
  else
    write_file(trace_path, trace);
  if (!store_path.empty()) write_file(store_path, zdps::dump_store(rr.state.mu));
  if (!history_path.empty())
    write_file(history_path, zdps::dump_history(rr.state.phi));
  return kExitOk;
}

int cmd_check(const std::string& scenario_path,
              std::optional<std::uint64_t> tick_override,
              const std::vector<std::uint64_t>& recover_at) {
  LoadedScenario ls = load_scenario(scenario_path, tick_override);
  zdps::RunResult rr = execute(ls);

  zdps::CheckpointState cp;
  cp.interval = ls.program.checkpoint_intervals;
  const zdps::SourceStreams* streams =
      ls.scenario.has_streams() ? &ls.scenario.streams : nullptr;
  for (auto t : checkpoint_times(ls, recover_at)) {
    std::optional<zdps::IdentSet> fault;
    auto it = ls.scenario.faults.find(t);
    if (it != ls.scenario.faults.end()) fault = it->second;
    auto [mu2, cp2, report] =
        zdps::run_checkpoint(rr.state, cp, t, fault, streams);
    rr.state.mu = std::move(mu2);
    cp = std::move(cp2);
  }

  bool all_ok = true;
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(ls.scenario.ticks);
       ++t) {
    zdps::Timestamp ts = zdps::Timestamp::at(t);
    zdps::ConsistencyReport report = zdps::consistent_env(
        rr.state.mu, zdps::history_at(rr.state.phi, ts), ts);
    if (!report.consistent()) {
      all_ok = false;
      std::cout << zdps::render_consistency(report);
    }
  }
  if (all_ok) std::cout << "OK\n";
  return all_ok ? kExitOk : kExitViolated;
}

int cmd_recover(const std::string& scenario_path,
                std::optional<std::uint64_t> tick_override,
                const std::vector<std::uint64_t>& recover_at,
                const std::string& store_path) {
  LoadedScenario ls = load_scenario(scenario_path, tick_override);
  zdps::RunResult rr = execute(ls);

  zdps::CheckpointState cp;
  cp.interval = ls.program.checkpoint_intervals;
  const zdps::SourceStreams* streams =
      ls.scenario.has_streams() ? &ls.scenario.streams : nullptr;
  for (auto t : checkpoint_times(ls, recover_at)) {
    std::optional<zdps::IdentSet> fault;
    auto it = ls.scenario.faults.find(t);
    if (it != ls.scenario.faults.end()) fault = it->second;
    auto [mu2, cp2, report] =
        zdps::run_checkpoint(rr.state, cp, t, fault, streams);
    rr.state.mu = std::move(mu2);
    cp = std::move(cp2);
    std::cout << zdps::render_recovery(report);
  }
  if (!store_path.empty()) write_file(store_path, zdps::dump_store(rr.state.mu));
  return kExitOk;
}

int cmd_oracle(const std::string& kind, std::uint64_t cases,
               std::uint64_t seed) {
  zdps::OracleResult res = kind == "thm31" ? zdps::oracle_thm31(cases, seed)
                                           : zdps::oracle_thm32(cases, seed);
  if (res.ok()) {
    std::cout << kind << ": " << res.cases_run << " cases passed (seed "
              << seed << ")\n";
    return kExitOk;
  }
  std::cout << kind << " FAILED: " << res.detail << "\n";
  return kExitViolated;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic interpreter for distributed persistent-signal "
               "networks"};
  app.require_subcommand(1);

  std::string program_path;
  std::string scenario_path;
  std::string trace_path;
  std::string store_path;
  std::string history_path;
  std::uint64_t tick_seconds = 1;
  std::optional<std::uint64_t> tick_override;
  std::vector<std::uint64_t> recover_at;
  std::string oracle_kind;
  std::uint64_t cases = 100;
  std::uint64_t seed = 0;

  auto* parse_cmd = app.add_subcommand("parse", "lower a program and dump it");
  parse_cmd->add_option("program", program_path)->required();
  parse_cmd->add_option("--tick-seconds", tick_seconds)
      ->check(CLI::PositiveNumber);

  auto add_tick_override = [&](CLI::App* cmd) {
    cmd->add_option_function<std::uint64_t>(
           "--tick-seconds",
           [&](std::uint64_t v) { tick_override = v; })
        ->check(CLI::PositiveNumber);
  };

  auto* run_cmd = app.add_subcommand("run", "execute a scenario");
  run_cmd->add_option("scenario", scenario_path)->required();
  run_cmd->add_option("--trace", trace_path);
  run_cmd->add_option("--dump-store", store_path);
  run_cmd->add_option("--dump-history", history_path);
  add_tick_override(run_cmd);

  auto* check_cmd =
      app.add_subcommand("check", "execute and verify time consistency");
  check_cmd->add_option("scenario", scenario_path)->required();
  check_cmd->add_option("--recover-at", recover_at);
  add_tick_override(check_cmd);

  auto* recover_cmd =
      app.add_subcommand("recover", "execute and run checkpoint recovery");
  recover_cmd->add_option("scenario", scenario_path)->required();
  recover_cmd->add_option("--recover-at", recover_at);
  recover_cmd->add_option("--dump-store", store_path);
  add_tick_override(recover_cmd);

  auto* oracle_cmd =
      app.add_subcommand("oracle", "run a theorem property suite");
  oracle_cmd->add_option("kind", oracle_kind)
      ->required()
      ->check(CLI::IsMember({"thm31", "thm32"}));
  oracle_cmd->add_option("--cases", cases)->check(CLI::PositiveNumber);
  oracle_cmd->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (parse_cmd->parsed()) return cmd_parse(program_path, tick_seconds);
    if (run_cmd->parsed())
      return cmd_run(scenario_path, tick_override, trace_path, store_path,
                     history_path);
    if (check_cmd->parsed())
      return cmd_check(scenario_path, tick_override, recover_at);
    if (recover_cmd->parsed())
      return cmd_recover(scenario_path, tick_override, recover_at, store_path);
    if (oracle_cmd->parsed()) return cmd_oracle(oracle_kind, cases, seed);
  } catch (const zdps::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_input_error(e.code()) ? kExitInput : kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInput;
}
