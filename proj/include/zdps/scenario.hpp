#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "zdps/engine.hpp"
#include "zdps/error.hpp"

namespace zdps {

// A reproducible run description: key = value pairs plus [loss], [faults] and
// [streams] sections. Everything is deterministic given the file.
struct Scenario {
  std::string program;  // path, resolved relative to the scenario file
  std::uint64_t ticks = 0;
  std::uint64_t tick_seconds = 1;
  std::uint64_t seed = 0;
  LossSchedule loss;
  std::map<Timestamp, IdentSet> faults;
  SourceStreams streams;

  bool has_streams() const { return !streams.values.empty(); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::uint64_t parse_u64(const std::string& s, int line_no) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    fail(ErrorCode::SyntaxError,
         "scenario line " + std::to_string(line_no) + ": expected a number, got '" +
             s + "'");
  return std::stoull(s);
}

inline IdentSet parse_id_list(const std::string& s, int line_no) {
  IdentSet out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty())
      fail(ErrorCode::SyntaxError,
           "scenario line " + std::to_string(line_no) + ": empty id");
    out.insert(Ident(item));
  }
  return out;
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& text) {
  Scenario sc;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = detail::trim(raw);
    if (auto h = line.find("//"); h != std::string::npos)
      line = detail::trim(line.substr(0, h));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        fail(ErrorCode::SyntaxError,
             "scenario line " + std::to_string(line_no) + ": bad section");
      section = line.substr(1, line.size() - 2);
      if (section != "loss" && section != "faults" && section != "streams")
        fail(ErrorCode::SyntaxError, "unknown scenario section [" + section + "]");
      continue;
    }

    if (section.empty()) {
      auto eq = line.find('=');
      if (eq == std::string::npos)
        fail(ErrorCode::SyntaxError,
             "scenario line " + std::to_string(line_no) + ": expected key = value");
      std::string key = detail::trim(line.substr(0, eq));
      std::string val = detail::trim(line.substr(eq + 1));
      if (key == "program") sc.program = val;
      else if (key == "ticks") sc.ticks = detail::parse_u64(val, line_no);
      else if (key == "tick_seconds")
        sc.tick_seconds = detail::parse_u64(val, line_no);
      else if (key == "seed") sc.seed = detail::parse_u64(val, line_no);
      else
        fail(ErrorCode::SyntaxError,
             "scenario line " + std::to_string(line_no) + ": unknown key " + key);
      continue;
    }

    if (section == "loss" || section == "faults") {
      auto colon = line.find(':');
      if (colon == std::string::npos)
        fail(ErrorCode::SyntaxError,
             "scenario line " + std::to_string(line_no) + ": expected t: ids");
      Timestamp t = Timestamp::at(static_cast<std::int64_t>(
          detail::parse_u64(detail::trim(line.substr(0, colon)), line_no)));
      IdentSet ids = detail::parse_id_list(line.substr(colon + 1), line_no);
      if (section == "loss") sc.loss[t] = std::move(ids);
      else sc.faults[t] = std::move(ids);
      continue;
    }

    // [streams]  id@t = value
    auto eq = line.find('=');
    auto at = line.find('@');
    if (eq == std::string::npos || at == std::string::npos || at > eq)
      fail(ErrorCode::SyntaxError,
           "scenario line " + std::to_string(line_no) + ": expected id@t = value");
    Ident id(detail::trim(line.substr(0, at)));
    std::uint64_t t =
        detail::parse_u64(detail::trim(line.substr(at + 1, eq - at - 1)), line_no);
    Ident val(detail::trim(line.substr(eq + 1)));
    sc.streams.values[{id, static_cast<std::int64_t>(t)}] = val;
  }
  if (sc.program.empty())
    fail(ErrorCode::SyntaxError, "scenario does not name a program");
  return sc;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::SyntaxError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace zdps
