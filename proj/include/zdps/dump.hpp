#pragma once

#include <string>

#include "zdps/consistency.hpp"
#include "zdps/environments.hpp"
#include "zdps/recovery.hpp"

namespace zdps {

// Store dump: one line per row, `<relation-id> TAB <time|BOT> TAB p=v ...`,
// rows sorted by (relation-id, time). Bit-exact for golden diffs.
inline std::string dump_store(const IdentEnv& mu) {
  std::string out;
  for (const auto& [l, entry] : mu.entries) {
    for (const auto& [t, row] : entry.relation.rows) {
      out += l.name + "\t" + t.str() + "\t";
      for (size_t i = 0; i < entry.relation.schema.size(); ++i) {
        if (i) out += " ";
        out += entry.relation.schema[i] + "=" + row[i].name;
      }
      out += "\n";
    }
  }
  return out;
}

inline char process_kind_letter(const Process& p) {
  if (p.kind == ProcessKind::Source) return 'S';
  return p.join.kind == JoinKind::Union ? 'U' : 'I';
}

// Switch-history dump: one line per snapshot,
// `<time> TAB <id>:<U|I|S>:<inputs,comma-sep>` per binding, sorted by id.
inline std::string dump_history(const SwitchHistory& phi) {
  std::string out;
  for (const auto& [t, nu] : phi.snapshots) {
    out += t.str();
    for (const auto& [l, p] : nu.bindings) {
      out += "\t" + l.name + ":";
      out += process_kind_letter(p);
      out += ":" + join_names(p.join.inputs);
    }
    out += "\n";
  }
  return out;
}

// `OK` or one line per violation: `VIOLATION TAB <t> TAB <id> TAB <U|I>`.
inline std::string render_consistency(const ConsistencyReport& report) {
  if (report.consistent()) return "OK\n";
  std::string out;
  for (const auto& v : report.violations) {
    out += "VIOLATION\t" + report.checked_at.str() + "\t" + v.id.name + "\t";
    out += v.mode == JoinKind::Union ? "U" : "I";
    out += "\n";
  }
  return out;
}

inline std::string render_recovery(const RecoveryReport& report) {
  std::string out;
  for (const auto& r : report.repaired) {
    out += "REPAIRED\t" + r.id.name + "\t" + r.t.str() + "\t";
    for (size_t i = 0; i < r.values.size(); ++i) {
      if (i) out += " ";
      out += r.values[i].name;
    }
    out += "\n";
  }
  for (const auto& l : report.blocked) out += "BLOCKED\t" + l.name + "\n";
  for (const auto& l : report.advanced)
    out += "ADVANCED\t" + l.name + "\t" + report.checkpoint_t.str() + "\n";
  return out;
}

}  // namespace zdps
