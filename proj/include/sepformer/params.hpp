#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sepformer/autodiff.hpp"

namespace sepformer {

// Ordered (name, parameter) list; the order is the checkpoint order.
using NamedParameters = std::vector<std::pair<std::string, Var>>;

inline void append_named(NamedParameters& out, const std::string& prefix,
                         const NamedParameters& more) {
  for (const auto& [name, v] : more) out.emplace_back(prefix + name, v);
}

inline std::vector<Var> values_of(const NamedParameters& named) {
  std::vector<Var> out;
  out.reserve(named.size());
  for (const auto& entry : named) out.push_back(entry.second);
  return out;
}

}  // namespace sepformer
