#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spamdet {

enum class Source { LingSpam, SpamText, Enron, SpamAssassin };

std::string_view to_string(Source s);
std::optional<Source> parse_source(std::string_view name);

inline constexpr int kHam = 0;
inline constexpr int kSpam = 1;

struct Sample {
    std::string id;
    Source source = Source::LingSpam;
    std::string text;
    int label = kHam;

    bool operator==(const Sample &) const = default;
};

// Per-ingestion bookkeeping. Empty bodies are expected (header-only mails);
// invalid rows count toward the 1% rejection threshold.
struct IngestStats {
    std::size_t skipped_empty = 0;
    std::size_t skipped_invalid = 0;
};

// Immutable ordered collection of samples with cached class counts.
class Corpus {
  public:
    Corpus() = default;
    explicit Corpus(std::vector<Sample> samples, IngestStats stats = {});

    const std::vector<Sample> &samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    std::size_t ham() const { return counts_[kHam]; }
    std::size_t spam() const { return counts_[kSpam]; }
    const IngestStats &stats() const { return stats_; }

  private:
    std::vector<Sample> samples_;
    std::array<std::size_t, 2> counts_{0, 0};
    IngestStats stats_;
};

Corpus load_lingspam(const std::filesystem::path &path);
Corpus load_sms(const std::filesystem::path &csv);
Corpus load_enron(const std::filesystem::path &dir);
Corpus load_spamassassin(const std::filesystem::path &dir);
Corpus load_dataset(Source source, const std::filesystem::path &path);

// Concatenates corpora; every id becomes "<source>/<id>".
Corpus combine(std::span<const Corpus> corpora);

// Removes an RFC-822 header block terminated by the first blank line.
// Text without a leading header block is returned unchanged.
std::string strip_headers(std::string_view message);

// Minimal RFC-4180 reader: quoted fields, doubled quotes, embedded newlines.
std::vector<std::vector<std::string>> parse_csv(std::string_view content, char delimiter = ',');

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;

    bool operator==(const SplitRatios &) const = default;
};

// Parses "a:b:c" (percentages or fractions), normalized to sum 1.
SplitRatios parse_ratios(std::string_view text);
std::string format_ratios(const SplitRatios &r);

struct SplitIndices {
    std::vector<std::size_t> train, valid, test;
};

// Stratified, seeded partition of positions 0..labels.size()-1. Per class and
// part the count is n_class * ratio rounded up or down so that class counts
// sum exactly and part sizes stay within one sample of N * ratio; leftover
// rounding units prefer train. Each class must have at least 3 samples.
SplitIndices split_indices(std::span<const int> labels, const SplitRatios &ratios,
                           std::uint64_t seed);

struct CorpusSplit {
    std::vector<Sample> train, valid, test;
    SplitRatios ratios;
    std::uint64_t seed = 0;
};

CorpusSplit split(const Corpus &corpus, const SplitRatios &ratios, std::uint64_t seed);

// JSON-lines corpus cache: {id, source, label, text} per line.
void write_corpus_jsonl(const Corpus &corpus, std::ostream &out);
void save_corpus(const Corpus &corpus, const std::filesystem::path &file);
Corpus load_corpus(const std::filesystem::path &file);

} // namespace spamdet
