#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zdps/error.hpp"
#include "zdps/ident.hpp"

namespace zdps {

// Logical time: either the bottom element or a non-negative tick. Bottom
// compares below every tick.
class Timestamp {
 public:
  constexpr Timestamp() : v_(-1) {}  // bottom

  static constexpr Timestamp bottom() { return Timestamp(); }
  static constexpr Timestamp at(std::int64_t tick) {
    Timestamp t;
    t.v_ = tick < 0 ? -1 : tick;
    return t;
  }

  bool is_bottom() const { return v_ < 0; }
  std::int64_t tick() const {
    if (is_bottom()) fail(ErrorCode::Internal, "tick() on bottom timestamp");
    return v_;
  }

  // t-1, saturating at bottom.
  Timestamp pred() const { return at(v_ - 1); }
  Timestamp succ() const { return is_bottom() ? at(0) : at(v_ + 1); }

  auto operator<=>(const Timestamp&) const = default;

  std::string str() const { return is_bottom() ? "BOT" : std::to_string(v_); }

 private:
  std::int64_t v_;
};

// Per-instance execution history: an append-only table with schema
// (time, p1..pn). A row at bottom always exists, so latest-choice lookups are
// total. At most one row per timestamp; inserting at an existing timestamp
// overrides.
struct Relation {
  std::vector<std::string> schema;
  std::map<Timestamp, IdentList> rows;

  Relation() = default;

  Relation(std::vector<std::string> cols, IdentList bottom_row)
      : schema(std::move(cols)) {
    if (bottom_row.size() != schema.size())
      fail(ErrorCode::ArityMismatch, "bottom row arity " +
                                         std::to_string(bottom_row.size()) +
                                         " vs schema " +
                                         std::to_string(schema.size()));
    rows.emplace(Timestamp::bottom(), std::move(bottom_row));
  }

  // Mutating insert used by the engine (single writer).
  void put(Timestamp t, IdentList vals) {
    if (t.is_bottom()) fail(ErrorCode::Internal, "insert at bottom");
    if (vals.size() != schema.size())
      fail(ErrorCode::ArityMismatch,
           "tuple arity " + std::to_string(vals.size()) + " vs schema " +
               std::to_string(schema.size()));
    rows[t] = std::move(vals);
  }

  size_t column_index(const std::string& p) const {
    auto it = std::find(schema.begin(), schema.end(), p);
    if (it == schema.end()) fail(ErrorCode::UnknownColumn, p);
    return static_cast<size_t>(it - schema.begin());
  }

  bool operator==(const Relation&) const = default;
};

inline Relation insert(const Relation& r, Timestamp t, IdentList vals) {
  Relation out = r;
  out.put(t, std::move(vals));
  return out;
}

// Value of column p in the row with the greatest timestamp <= t. Total for
// p in schema thanks to the mandatory bottom row.
inline const Ident& latest_at(const Relation& r, const std::string& p,
                              Timestamp t) {
  size_t col = r.column_index(p);
  auto it = r.rows.upper_bound(t);
  if (it == r.rows.begin())
    fail(ErrorCode::Internal, "relation lacks a bottom row");
  --it;
  return it->second[col];
}

inline const IdentList& latest_row(const Relation& r, Timestamp t) {
  auto it = r.rows.upper_bound(t);
  if (it == r.rows.begin())
    fail(ErrorCode::Internal, "relation lacks a bottom row");
  --it;
  return it->second;
}

inline bool has_record_at(const Relation& r, Timestamp t) {
  return r.rows.count(t) != 0;
}

// Row timestamps <= t, bottom excluded, ascending.
inline std::vector<Timestamp> timestamps_upto(const Relation& r, Timestamp t) {
  std::vector<Timestamp> out;
  for (const auto& [rt, vals] : r.rows) {
    if (rt.is_bottom()) continue;
    if (rt > t) break;
    out.push_back(rt);
  }
  return out;
}

}  // namespace zdps
