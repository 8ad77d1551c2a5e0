#include "guide/coordinates.hpp"

#include <algorithm>
#include <regex>

namespace guide {

std::vector<std::string> find_coordinate_patterns(std::string_view text) {
  static const std::regex verb_tuple(R"((click|tap|move|drag)\w*[^\n]{0,20}?\(\s*\d+\s*,\s*\d+\s*\))",
                                     std::regex::icase);
  static const std::regex axis(R"(\b[xy]\s*=\s*\d+)", std::regex::icase);
  static const std::regex pixels(R"(\b\d+\s*px\b)", std::regex::icase);

  std::vector<std::pair<std::size_t, std::string>> found;
  std::string s(text);
  for (const auto* re : {&verb_tuple, &axis, &pixels}) {
    for (auto it = std::sregex_iterator(s.begin(), s.end(), *re); it != std::sregex_iterator(); ++it) {
      found.emplace_back(static_cast<std::size_t>(it->position()), it->str());
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

}  // namespace guide
