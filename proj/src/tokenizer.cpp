#include "spamdet/tokenizer.hpp"

#include <fstream>
#include <sstream>

#include "spamdet/error.hpp"
#include "spamdet/hash.hpp"
#include "spamdet/utf8.hpp"

namespace spamdet {

namespace {

constexpr std::size_t kMaxWordChars = 100;

bool is_control(char32_t cp) {
    if (cp == U'\t' || cp == U'\n' || cp == U'\r') return false;
    if (cp < 0x20 || (cp >= 0x7F && cp <= 0x9F)) return true;
    // Format characters (Cf) that commonly leak into mail bodies.
    return cp == 0xAD || (cp >= 0x200B && cp <= 0x200F) || (cp >= 0x202A && cp <= 0x202E) ||
           (cp >= 0x2060 && cp <= 0x2064) || cp == 0xFEFF;
}

bool is_punctuation(char32_t cp) {
    if ((cp >= 33 && cp <= 47) || (cp >= 58 && cp <= 64) || (cp >= 91 && cp <= 96) || (cp >= 123 && cp <= 126))
        return true;
    switch (cp) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF: case 0x37E: case 0x387:
        return true;
    default:
        break;
    }
    return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) || (cp >= 0x3001 && cp <= 0x3003) ||
           (cp >= 0x3008 && cp <= 0x3011) || (cp >= 0x3014 && cp <= 0x301F) || (cp >= 0xFF01 && cp <= 0xFF0F) ||
           (cp >= 0xFF1A && cp <= 0xFF20) || (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65);
}

bool is_cjk(char32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) || (cp >= 0x20000 && cp <= 0x2A6DF) ||
           (cp >= 0x2A700 && cp <= 0x2B73F) || (cp >= 0x2B740 && cp <= 0x2B81F) ||
           (cp >= 0x2B820 && cp <= 0x2CEAF) || (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x2F800 && cp <= 0x2FA1F);
}

bool is_combining_mark(char32_t cp) { return cp >= 0x300 && cp <= 0x36F; }

char32_t to_lower(char32_t cp) {
    if (cp < 0x80) return (cp >= U'A' && cp <= U'Z') ? cp + 32 : cp;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
    if (cp >= 0x100 && cp <= 0x17F) {
        if (cp == 0x130) return U'i';
        if (cp == 0x178) return 0xFF;
        const bool odd_upper = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
        const bool no_case = cp == 0x131 || cp == 0x138 || cp == 0x149 || cp == 0x17F;
        if (no_case) return cp;
        if (odd_upper) return (cp % 2 == 1) ? cp + 1 : cp;
        return (cp % 2 == 0) ? cp + 1 : cp;
    }
    if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
    return cp;
}

// Canonical base letter of a lowercase precomposed Latin letter, or 0.
char32_t accent_base(char32_t cp) {
    static constexpr char32_t latin1[] = {
        // U+00E0 .. U+00FF
        U'a', U'a', U'a', U'a', U'a', U'a', 0,    U'c', U'e', U'e', U'e', U'e', U'i', U'i', U'i', U'i',
        0,    U'n', U'o', U'o', U'o', U'o', U'o', 0,    0,    U'u', U'u', U'u', U'u', U'y', 0,    U'y'};
    static constexpr char32_t ext_a[] = {
        // U+0100 .. U+017F, both cases
        U'A', U'a', U'A', U'a', U'A', U'a', U'C', U'c', U'C', U'c', U'C', U'c', U'C', U'c', U'D', U'd',
        0,    0,    U'E', U'e', U'E', U'e', U'E', U'e', U'E', U'e', U'E', U'e', U'G', U'g', U'G', U'g',
        U'G', U'g', U'G', U'g', U'H', U'h', 0,    0,    U'I', U'i', U'I', U'i', U'I', U'i', U'I', U'i',
        U'I', 0,    0,    0,    U'J', U'j', U'K', U'k', 0,    U'L', U'l', U'L', U'l', U'L', U'l', 0,
        0,    0,    0,    U'N', U'n', U'N', U'n', U'N', U'n', 0,    0,    0,    U'O', U'o', U'O', U'o',
        U'O', U'o', 0,    0,    U'R', U'r', U'R', U'r', U'R', U'r', U'S', U's', U'S', U's', U'S', U's',
        U'S', U's', U'T', U't', U'T', U't', 0,    0,    U'U', U'u', U'U', U'u', U'U', U'u', U'U', U'u',
        U'U', U'u', U'U', U'u', U'W', U'w', U'Y', U'y', U'Y', U'Z', U'z', U'Z', U'z', U'Z', U'z', 0};
    if (cp >= 0xE0 && cp <= 0xFF) return latin1[cp - 0xE0];
    if (cp >= 0x100 && cp <= 0x17F) return ext_a[cp - 0x100];
    return 0;
}

} // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
            throw VocabError("duplicate vocabulary token '" + tokens_[i] + "' at line " + std::to_string(i + 1));
    }
    auto special = [this](std::string_view t) {
        const auto id = find(t);
        if (!id) throw VocabError("vocabulary lacks special token " + std::string(t));
        return *id;
    };
    cls_ = special(kClsToken);
    sep_ = special(kSepToken);
    pad_ = special(kPadToken);
    unk_ = special(kUnkToken);
}

Vocab Vocab::load(const std::filesystem::path &file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw VocabError("cannot read vocabulary " + file.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return Vocab(std::move(tokens));
}

void Vocab::save(const std::filesystem::path &file) const {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw VocabError("cannot write vocabulary " + file.string());
    for (const auto &t : tokens_) out << t << '\n';
}

std::optional<int> Vocab::find(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::uint64_t Vocab::fingerprint() const {
    Fnv1a64 h;
    for (const auto &t : tokens_) {
        h.update(t);
        h.update("\n");
    }
    return h.digest();
}

std::vector<std::string> basic_tokenize(std::string_view text, const TokenizerOptions &options) {
    std::vector<std::string> words;
    std::u32string current;
    auto flush = [&] {
        if (!current.empty()) words.push_back(utf8::encode(current));
        current.clear();
    };
    for (char32_t cp : utf8::decode(text)) {
        if (cp == 0 || cp == 0xFFFD || is_control(cp)) continue;
        if (utf8::is_whitespace(cp)) {
            flush();
            continue;
        }
        if (options.lowercase) cp = to_lower(cp);
        if (options.strip_accents) {
            if (is_combining_mark(cp)) continue;
            if (char32_t base = accent_base(cp)) cp = base;
        }
        if (is_punctuation(cp) || is_cjk(cp)) {
            flush();
            words.push_back(utf8::encode(std::u32string(1, cp)));
            continue;
        }
        current.push_back(cp);
    }
    flush();
    return words;
}

std::vector<std::string> wordpiece(std::string_view word, const Vocab &vocab) {
    const std::u32string chars = utf8::decode(word);
    if (chars.size() > kMaxWordChars) return {std::string(kUnkToken)};

    std::vector<std::string> pieces;
    std::size_t start = 0;
    while (start < chars.size()) {
        std::size_t end = chars.size();
        std::optional<std::string> match;
        while (start < end) {
            std::string candidate = utf8::encode(std::u32string_view(chars).substr(start, end - start));
            if (start > 0) candidate.insert(0, "##");
            if (vocab.find(candidate)) {
                match = std::move(candidate);
                break;
            }
            --end;
        }
        if (!match) return {std::string(kUnkToken)};
        pieces.push_back(std::move(*match));
        start = end;
    }
    return pieces;
}

TokenizedSample encode(std::string_view text, const Vocab &vocab, std::size_t seq_len,
                       const TokenizerOptions &options) {
    if (seq_len < 3) throw ConfigError("seq_len must be at least 3, got " + std::to_string(seq_len));
    const std::size_t budget = seq_len - 2;

    TokenizedSample out;
    out.ids.reserve(seq_len);
    out.ids.push_back(vocab.cls_id());
    for (const auto &word : basic_tokenize(text, options)) {
        for (const auto &piece : wordpiece(word, vocab)) {
            if (out.ids.size() - 1 == budget) break;
            out.ids.push_back(*vocab.find(piece));
        }
        if (out.ids.size() - 1 == budget) break;
    }
    out.ids.push_back(vocab.sep_id());
    out.mask.assign(out.ids.size(), 1);
    out.ids.resize(seq_len, vocab.pad_id());
    out.mask.resize(seq_len, 0);
    return out;
}

} // namespace spamdet
