#pragma once

#include <compare>
#include <set>
#include <string>
#include <vector>

namespace zdps {

// Identifier of a signal class instance (or any interned value). Equality and
// ordering are by name; ordering gives the canonical scan order used by the
// propagation scheduler and all dump formats.
struct Ident {
  std::string name;

  Ident() = default;
  explicit Ident(std::string n) : name(std::move(n)) {}

  auto operator<=>(const Ident&) const = default;
};

using IdentSet = std::set<Ident>;
using IdentList = std::vector<Ident>;

inline std::string join_names(const IdentList& ids, const char* sep = ",") {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += sep;
    out += ids[i].name;
  }
  return out;
}

}  // namespace zdps
