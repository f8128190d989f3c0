#pragma once

#include <string_view>

namespace pscg {

constexpr std::string_view version_string() { return "0.1.0"; }

}  // namespace pscg
