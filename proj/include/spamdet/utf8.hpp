#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace spamdet::utf8 {

bool is_valid(std::string_view s);

// Valid UTF-8 is returned unchanged; anything else is read as Latin-1.
std::string sanitize(std::string_view bytes);

// Decodes valid UTF-8 into code points. Invalid sequences become U+FFFD.
std::u32string decode(std::string_view s);

std::string encode(std::u32string_view cps);
void append(std::string &out, char32_t cp);

bool is_whitespace(char32_t cp);

} // namespace spamdet::utf8
