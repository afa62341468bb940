#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace spamdet {

inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";

// Token list with dense ids (id = position). Immutable after construction.
class Vocab {
  public:
    // Throws VocabError on duplicates or a missing special token.
    explicit Vocab(std::vector<std::string> tokens);

    // One token per line, LF endings, id = zero-based line index.
    static Vocab load(const std::filesystem::path &file);
    void save(const std::filesystem::path &file) const;

    std::size_t size() const { return tokens_.size(); }
    std::optional<int> find(std::string_view token) const;
    const std::string &token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string> &tokens() const { return tokens_; }

    int cls_id() const { return cls_; }
    int sep_id() const { return sep_; }
    int pad_id() const { return pad_; }
    int unk_id() const { return unk_; }

    // FNV-1a over the newline-joined token list.
    std::uint64_t fingerprint() const;

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int cls_ = -1, sep_ = -1, pad_ = -1, unk_ = -1;
};

struct TokenizerOptions {
    bool lowercase = true;
    bool strip_accents = true;
};

// Uncased normalization and whitespace/punctuation splitting.
std::vector<std::string> basic_tokenize(std::string_view text, const TokenizerOptions &options = {});

// Greedy longest-match-first subword split. Continuations carry "##".
std::vector<std::string> wordpiece(std::string_view word, const Vocab &vocab);

struct TokenizedSample {
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;
    int label = 0;
};

// Layout: [CLS] content... [SEP] [PAD]...; content is truncated to keep the
// first seq_len - 2 pieces. Throws ConfigError when seq_len < 3.
TokenizedSample encode(std::string_view text, const Vocab &vocab, std::size_t seq_len,
                       const TokenizerOptions &options = {});

} // namespace spamdet
