#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace guide {

// Pixel-coordinate fragments in free text, case-insensitive:
//   a click/tap/move/drag verb within 20 characters before "(123, 456)"
//   "x=120" or "y = 40"
//   "300px" or "300 px"
// Returns the matched fragments in order of appearance.
std::vector<std::string> find_coordinate_patterns(std::string_view text);

}  // namespace guide
