#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace spamdet {

// Words (whitespace-delimited) shorter than this many code points are removed.
inline constexpr std::size_t kMinWordLength = 4;

// Drops every whitespace-delimited token of at most three Unicode scalar
// values, then rejoins the survivors with single spaces. Case is preserved.
std::string clean(std::string_view text);

} // namespace spamdet
