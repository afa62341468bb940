#include "spamdet/preprocess.hpp"

#include "spamdet/utf8.hpp"

namespace spamdet {

std::string clean(std::string_view text) {
    const std::u32string cps = utf8::decode(text);
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < cps.size()) {
        while (i < cps.size() && utf8::is_whitespace(cps[i])) ++i;
        const std::size_t begin = i;
        while (i < cps.size() && !utf8::is_whitespace(cps[i])) ++i;
        if (i - begin < kMinWordLength) continue;
        if (!out.empty()) out.push_back(' ');
        out += utf8::encode(std::u32string_view(cps).substr(begin, i - begin));
    }
    return out;
}

} // namespace spamdet
