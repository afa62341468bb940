#include "spamdet/corpus.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spamdet/error.hpp"
#include "spamdet/rng.hpp"
#include "spamdet/utf8.hpp"

namespace fs = std::filesystem;

namespace spamdet {

namespace {

constexpr double kMaxInvalidFraction = 0.01;

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

std::string read_file(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IngestError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::optional<int> parse_label(std::string_view raw) {
    const std::string v = lower(trim(raw));
    if (v == "ham" || v == "0") return kHam;
    if (v == "spam" || v == "1") return kSpam;
    return std::nullopt;
}

// Accumulates samples and enforces the invalid-row threshold at the end.
class Ingest {
  public:
    Ingest(Source source, fs::path origin) : source_(source), origin_(std::move(origin)) {}

    void add(std::string id, std::string_view raw_text, int label) {
        std::string text = utf8::sanitize(raw_text);
        if (is_blank(text)) {
            ++stats_.skipped_empty;
            return;
        }
        samples_.push_back(Sample{std::move(id), source_, std::move(text), label});
    }
    void invalid() { ++stats_.skipped_invalid; }

    Corpus finish() {
        const std::size_t seen = samples_.size() + stats_.skipped_invalid;
        if (samples_.empty())
            throw IngestError("no samples ingested from " + origin_.string());
        if (static_cast<double>(stats_.skipped_invalid) > kMaxInvalidFraction * seen)
            throw IngestError(std::to_string(stats_.skipped_invalid) + " of " +
                              std::to_string(seen) + " rows unparseable in " + origin_.string());
        return Corpus(std::move(samples_), stats_);
    }

  private:
    Source source_;
    fs::path origin_;
    std::vector<Sample> samples_;
    IngestStats stats_;
};

void require_directory(const fs::path &dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IngestError("not a readable directory: " + dir.string());
}

// All regular files below root, sorted by relative generic path.
std::vector<fs::path> list_files(const fs::path &root) {
    std::vector<fs::path> files;
    std::error_code ec;
    fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied, ec);
    if (ec) throw IngestError("cannot list " + root.string() + ": " + ec.message());
    for (const auto &entry : it) {
        if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), root));
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path &a, const fs::path &b) { return a.generic_string() < b.generic_string(); });
    return files;
}

bool is_header_line(std::string_view line) {
    if (line.starts_with("From ")) return true;
    const auto colon = line.find(':');
    if (colon == 0 || colon == std::string_view::npos) return false;
    for (std::size_t i = 0; i < colon; ++i) {
        const unsigned char c = line[i];
        if (c <= 32 || c >= 127) return false;
    }
    return true;
}

std::size_t find_column(const std::vector<std::string> &header, std::initializer_list<std::string_view> names) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string h = lower(trim(header[i]));
        for (auto n : names)
            if (h == n) return i;
    }
    return std::string::npos;
}

Corpus load_csv(const fs::path &file, Source source, std::initializer_list<std::string_view> label_names,
                std::initializer_list<std::string_view> text_names) {
    std::string content = read_file(file);
    // Strip a UTF-8 byte-order mark.
    if (content.starts_with("\xEF\xBB\xBF")) content.erase(0, 3);
    const char delim = file.extension() == ".tsv" ? '\t' : ',';
    auto rows = parse_csv(content, delim);
    if (rows.empty()) throw SchemaError("empty CSV: " + file.string());

    const auto &header = rows.front();
    const std::size_t label_col = find_column(header, label_names);
    const std::size_t text_col = find_column(header, text_names);
    const std::size_t subject_col = find_column(header, {"subject"});
    if (label_col == std::string::npos || text_col == std::string::npos)
        throw SchemaError("CSV " + file.string() + " lacks a label/category or message/text column");

    Ingest ingest(source, file);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto &row = rows[r];
        if (row.size() == 1 && is_blank(row[0])) continue;
        if (row.size() <= std::max(label_col, text_col)) {
            ingest.invalid();
            continue;
        }
        const auto label = parse_label(row[label_col]);
        if (!label) {
            ingest.invalid();
            continue;
        }
        std::string text = row[text_col];
        if (subject_col != std::string::npos && subject_col < row.size() && !is_blank(row[subject_col]))
            text = row[subject_col] + "\n" + text;
        ingest.add("row-" + std::to_string(r), text, *label);
    }
    return ingest.finish();
}

} // namespace

std::string_view to_string(Source s) {
    switch (s) {
    case Source::LingSpam: return "LingSpam";
    case Source::SpamText: return "SpamText";
    case Source::Enron: return "Enron";
    case Source::SpamAssassin: return "SpamAssassin";
    }
    return "?";
}

std::optional<Source> parse_source(std::string_view name) {
    const std::string n = lower(name);
    if (n == "lingspam" || n == "ling-spam") return Source::LingSpam;
    if (n == "spamtext" || n == "sms") return Source::SpamText;
    if (n == "enron" || n == "enron-spam") return Source::Enron;
    if (n == "spamassassin") return Source::SpamAssassin;
    return std::nullopt;
}

Corpus::Corpus(std::vector<Sample> samples, IngestStats stats)
    : samples_(std::move(samples)), stats_(stats) {
    for (const auto &s : samples_) {
        if (s.label != kHam && s.label != kSpam)
            throw InputError("sample " + s.id + " has label " + std::to_string(s.label));
        ++counts_[s.label];
    }
}

std::vector<std::vector<std::string>> parse_csv(std::string_view content, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == delimiter) {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else {
            field.push_back(c);
            any = true;
        }
    }
    if (any || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string strip_headers(std::string_view message) {
    std::size_t pos = 0;
    bool saw_header = false;
    while (pos < message.size()) {
        std::size_t end = message.find('\n', pos);
        const std::size_t next = end == std::string_view::npos ? message.size() : end + 1;
        std::string_view line = message.substr(pos, (end == std::string_view::npos ? message.size() : end) - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) return saw_header ? std::string(message.substr(next)) : std::string(message);
        const bool continuation = saw_header && (line.front() == ' ' || line.front() == '\t');
        if (!continuation && !is_header_line(line)) return std::string(message);
        saw_header = true;
        pos = next;
    }
    // Only header lines: no body.
    return saw_header ? std::string() : std::string(message);
}

Corpus load_lingspam(const fs::path &path) {
    std::error_code ec;
    if (fs::is_regular_file(path, ec))
        return load_csv(path, Source::LingSpam, {"label", "category", "class"}, {"message", "text", "body"});
    require_directory(path);

    fs::path root = path;
    if (fs::is_directory(path / "bare", ec)) root = path / "bare";

    const auto files = list_files(root);
    std::vector<fs::path> messages;
    std::vector<fs::path> csvs;
    for (const auto &f : files) {
        const std::string name = lower(f.filename().string());
        if (name.find("msg") != std::string::npos) messages.push_back(f);
        else if (f.extension() == ".csv" && f.parent_path().empty()) csvs.push_back(f);
    }
    if (messages.empty() && csvs.size() == 1)
        return load_csv(root / csvs.front(), Source::LingSpam, {"label", "category", "class"},
                        {"message", "text", "body"});

    Ingest ingest(Source::LingSpam, path);
    for (const auto &f : messages) {
        const int label = lower(f.filename().string()).starts_with("spmsg") ? kSpam : kHam;
        ingest.add(f.generic_string(), read_file(root / f), label);
    }
    return ingest.finish();
}

Corpus load_sms(const fs::path &csv) {
    std::error_code ec;
    if (!fs::is_regular_file(csv, ec)) throw IngestError("not a readable file: " + csv.string());
    return load_csv(csv, Source::SpamText, {"category", "label", "v1", "class", "type"},
                    {"message", "text", "v2", "sms"});
}

Corpus load_enron(const fs::path &dir) {
    require_directory(dir);
    Ingest ingest(Source::Enron, dir);
    bool saw_ham = false, saw_spam = false;
    for (const auto &f : list_files(dir)) {
        std::optional<int> label;
        for (const auto &part : f.parent_path()) {
            const std::string p = lower(part.string());
            if (p == "ham") label = kHam;
            else if (p == "spam") label = kSpam;
        }
        if (!label) continue;
        (*label == kSpam ? saw_spam : saw_ham) = true;
        ingest.add(f.generic_string(), strip_headers(read_file(dir / f)), *label);
    }
    if (!saw_ham && !saw_spam) throw IngestError("no ham/ or spam/ subdirectories under " + dir.string());
    return ingest.finish();
}

Corpus load_spamassassin(const fs::path &dir) {
    require_directory(dir);
    enum Kind { EasyHam, HardHam, Spam, None };
    auto kind_of = [](const fs::path &component) {
        std::string n = lower(component.string());
        std::replace(n.begin(), n.end(), '-', '_');
        if (n.find("easy_ham") != std::string::npos) return EasyHam;
        if (n.find("hard_ham") != std::string::npos) return HardHam;
        if (n.starts_with("spam") || n.find("_spam") != std::string::npos) return Spam;
        return None;
    };

    bool present[3] = {false, false, false};
    std::error_code ec;
    for (const auto &entry : fs::recursive_directory_iterator(dir, ec)) {
        if (!entry.is_directory()) continue;
        if (auto k = kind_of(entry.path().filename()); k != None) present[k] = true;
    }
    const char *names[3] = {"easy-ham", "hard-ham", "spam"};
    for (int k = 0; k < 3; ++k)
        if (!present[k]) throw IngestError("SpamAssassin tree " + dir.string() + " has no " + names[k] + " subset");

    Ingest ingest(Source::SpamAssassin, dir);
    for (const auto &f : list_files(dir)) {
        if (f.filename() == "cmds") continue;
        Kind kind = None;
        for (const auto &part : f.parent_path())
            if (auto k = kind_of(part); k != None) kind = k;
        if (kind == None) continue;
        ingest.add(f.generic_string(), strip_headers(read_file(dir / f)), kind == Spam ? kSpam : kHam);
    }
    return ingest.finish();
}

Corpus load_dataset(Source source, const fs::path &path) {
    switch (source) {
    case Source::LingSpam: return load_lingspam(path);
    case Source::SpamText: return load_sms(path);
    case Source::Enron: return load_enron(path);
    case Source::SpamAssassin: return load_spamassassin(path);
    }
    throw InputError("unknown source");
}

Corpus combine(std::span<const Corpus> corpora) {
    if (corpora.size() == 1) return corpora.front();
    std::vector<Sample> all;
    IngestStats stats;
    for (const auto &c : corpora) {
        stats.skipped_empty += c.stats().skipped_empty;
        stats.skipped_invalid += c.stats().skipped_invalid;
        for (Sample s : c.samples()) {
            s.id = std::string(to_string(s.source)) + "/" + s.id;
            all.push_back(std::move(s));
        }
    }
    return Corpus(std::move(all), stats);
}

SplitRatios parse_ratios(std::string_view text) {
    std::vector<double> parts;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find(':', pos), text.size());
        const std::string token(trim(text.substr(pos, end - pos)));
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(token, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used == 0 || used != token.size()) throw ConfigError("bad split ratio '" + std::string(text) + "'");
        parts.push_back(v);
        pos = end + 1;
    }
    if (parts.size() != 3) throw ConfigError("split needs three parts a:b:c, got '" + std::string(text) + "'");
    const double sum = parts[0] + parts[1] + parts[2];
    if (!(parts[0] > 0 && parts[1] > 0 && parts[2] > 0))
        throw ConfigError("every split part must be positive: '" + std::string(text) + "'");
    return {parts[0] / sum, parts[1] / sum, parts[2] / sum};
}

std::string format_ratios(const SplitRatios &r) {
    auto pct = [](double x) { return std::to_string(static_cast<long>(std::lround(x * 100))); };
    return pct(r.train) + ":" + pct(r.valid) + ":" + pct(r.test);
}

SplitIndices split_indices(std::span<const int> labels, const SplitRatios &ratios, std::uint64_t seed) {
    if (!(ratios.train > 0 && ratios.valid > 0 && ratios.test > 0))
        throw SplitError("split ratios must all be positive");
    if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
        throw SplitError("split ratios must sum to 1");

    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != kHam && labels[i] != kSpam) throw SplitError("label outside {0,1}");
        by_class[labels[i]].push_back(i);
    }

    for (int cls = 0; cls < 2; ++cls) {
        if (by_class[cls].size() < 3)
            throw SplitError("class " + std::to_string(cls) + " has " + std::to_string(by_class[cls].size()) +
                             " samples, fewer than the 3 split parts");
    }

    // Controlled rounding of the 2 x 3 table n_c * r_p: every class row sums
    // to n_c, every cell is within 1 of its exact value, and among those the
    // choice minimizing the worst per-part total error wins, ties going to
    // the option that puts more units in train.
    const std::array<double, 3> r = {ratios.train, ratios.valid, ratios.test};
    std::array<std::array<std::size_t, 3>, 2> base{};
    std::array<std::array<double, 3>, 2> frac{};
    std::array<std::size_t, 2> extra{};
    for (int c = 0; c < 2; ++c) {
        std::size_t floors = 0;
        for (int p = 0; p < 3; ++p) {
            const double exact = static_cast<double>(by_class[c].size()) * r[p];
            base[c][p] = static_cast<std::size_t>(std::floor(exact + 1e-9));
            frac[c][p] = exact - static_cast<double>(base[c][p]);
            floors += base[c][p];
        }
        extra[c] = by_class[c].size() - floors;
    }
    auto subsets = [](std::size_t k) {
        std::vector<std::array<int, 3>> out;
        for (int m = 0; m < 8; ++m)
            if (static_cast<std::size_t>(std::popcount(static_cast<unsigned>(m))) == k)
                out.push_back({m & 1, (m >> 1) & 1, (m >> 2) & 1});
        return out;
    };
    std::array<std::array<std::size_t, 3>, 2> counts{};
    double best_err = std::numeric_limits<double>::infinity();
    int best_train = -1;
    for (const auto &up0 : subsets(extra[0]))
        for (const auto &up1 : subsets(extra[1])) {
            double err = 0;
            for (int p = 0; p < 3; ++p)
                err = std::max(err, std::abs(up0[p] - frac[0][p] + up1[p] - frac[1][p]));
            const int train_units = up0[0] + up1[0];
            if (err < best_err - 1e-12 || (std::abs(err - best_err) <= 1e-12 && train_units > best_train)) {
                best_err = err;
                best_train = train_units;
                for (int p = 0; p < 3; ++p) {
                    counts[0][p] = base[0][p] + static_cast<std::size_t>(up0[p]);
                    counts[1][p] = base[1][p] + static_cast<std::size_t>(up1[p]);
                }
            }
        }
    Rng rng = Rng::substream(seed, "split");
    SplitIndices out;
    for (int cls = 0; cls < 2; ++cls) {
        auto &idx = by_class[cls];
        const std::size_t n = idx.size();
        for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.index(i + 1)]);

        const std::size_t n_valid = counts[cls][1];
        const std::size_t n_test = counts[cls][2];
        out.valid.insert(out.valid.end(), idx.begin(), idx.begin() + n_valid);
        out.test.insert(out.test.end(), idx.begin() + n_valid, idx.begin() + n_valid + n_test);
        out.train.insert(out.train.end(), idx.begin() + n_valid + n_test, idx.end());
    }
    for (auto *part : {&out.train, &out.valid, &out.test}) std::sort(part->begin(), part->end());
    return out;
}

CorpusSplit split(const Corpus &corpus, const SplitRatios &ratios, std::uint64_t seed) {
    std::vector<int> labels;
    labels.reserve(corpus.size());
    for (const auto &s : corpus.samples()) labels.push_back(s.label);
    const auto idx = split_indices(labels, ratios, seed);

    CorpusSplit out;
    out.ratios = ratios;
    out.seed = seed;
    auto gather = [&](const std::vector<std::size_t> &from, std::vector<Sample> &to) {
        to.reserve(from.size());
        for (auto i : from) to.push_back(corpus.samples()[i]);
    };
    gather(idx.train, out.train);
    gather(idx.valid, out.valid);
    gather(idx.test, out.test);
    return out;
}

void write_corpus_jsonl(const Corpus &corpus, std::ostream &out) {
    for (const auto &s : corpus.samples()) {
        nlohmann::ordered_json j;
        j["id"] = s.id;
        j["source"] = to_string(s.source);
        j["label"] = s.label;
        j["text"] = s.text;
        out << j.dump() << '\n';
    }
}

void save_corpus(const Corpus &corpus, const fs::path &file) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestError("cannot write " + file.string());
    write_corpus_jsonl(corpus, out);
    if (!out) throw IngestError("write failed: " + file.string());
}

Corpus load_corpus(const fs::path &file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IngestError("cannot read corpus cache " + file.string());
    std::vector<Sample> samples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto source = parse_source(j.at("source").get<std::string>());
            if (!source) throw SchemaError("unknown source");
            samples.push_back(Sample{j.at("id").get<std::string>(), *source, j.at("text").get<std::string>(),
                                     j.at("label").get<int>()});
        } catch (const std::exception &e) {
            throw IngestError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return Corpus(std::move(samples));
}

} // namespace spamdet
