#pragma once

#include <stdexcept>
#include <string>

namespace pscg {

// Thrown on contract violations: malformed datasets, degenerate problem
// instances, bad configuration.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace pscg
