#include "lesionattn/types.hpp"

#include <algorithm>
#include <cctype>

namespace lesionattn {

std::string_view to_string(Group g) { return g == Group::male ? "male" : "female"; }

Group parse_group(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "male" || lower == "m") return Group::male;
  if (lower == "female" || lower == "f") return Group::female;
  throw Error("unrecognized group value '" + std::string(text) + "'");
}

std::size_t count_nonzero(const LesionMask& mask) {
  return static_cast<std::size_t>(std::count_if(mask.values.begin(), mask.values.end(), [](std::uint8_t v) { return v != 0; }));
}

}  // namespace lesionattn
