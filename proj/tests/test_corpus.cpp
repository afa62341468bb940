#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "spamdet/corpus.hpp"
#include "spamdet/error.hpp"
#include "test_util.hpp"

using namespace spamdet;
using spamdet::testing::TempDir;
using spamdet::testing::write_file;

namespace {

Corpus make_corpus(std::size_t ham, std::size_t spam) {
    std::vector<Sample> s;
    for (std::size_t i = 0; i < ham; ++i) s.push_back({"h" + std::to_string(i), Source::SpamText, "ham text", kHam});
    for (std::size_t i = 0; i < spam; ++i) s.push_back({"s" + std::to_string(i), Source::SpamText, "spam text", kSpam});
    return Corpus(std::move(s));
}

} // namespace

TEST(LingSpam, ThreeFileFixture) {
    TempDir dir;
    write_file(dir / "part1/3-1msg1.txt", "Subject: conference\n\ncall for papers on syntax\n");
    write_file(dir / "part1/3-1msg2.txt", "Subject: query\n\nanyone know a good parser\n");
    write_file(dir / "part2/spmsga1.txt", "Subject: free money\n\nclick here now\n");
    write_file(dir / "readme.txt", "not a message");
    const Corpus c = load_lingspam(dir.path());
    EXPECT_EQ(c.size(), 3u);
    EXPECT_EQ(c.ham(), 2u);
    EXPECT_EQ(c.spam(), 1u);
    EXPECT_EQ(c.samples()[0].id, "part1/3-1msg1.txt");
    EXPECT_EQ(c.samples()[2].label, kSpam);
}

TEST(LingSpam, PrefersBareVariant) {
    TempDir dir;
    write_file(dir / "bare/part1/1msg.txt", "hello linguists");
    write_file(dir / "lemm/part1/1msg.txt", "hello linguist");
    write_file(dir / "bare/part1/spmsg1.txt", "buy now");
    const Corpus c = load_lingspam(dir.path());
    EXPECT_EQ(c.size(), 2u);
}

TEST(LingSpam, CsvExport) {
    TempDir dir;
    write_file(dir / "messages.csv", "subject,message,label\nhi,\"a message, with comma\",0\nwin,cash now,1\n");
    const Corpus c = load_lingspam(dir.path());
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.samples()[0].text, "hi\na message, with comma");
    EXPECT_EQ(c.spam(), 1u);
}

TEST(LingSpam, EmptyDirectoryIsAnError) {
    TempDir dir;
    EXPECT_THROW(load_lingspam(dir.path()), IngestError);
    EXPECT_THROW(load_lingspam(dir / "does-not-exist"), IngestError);
}

TEST(Sms, SingleHamRow) {
    TempDir dir;
    write_file(dir / "sms.csv", "Category,Message\n\"ham\",\"hello\"\n");
    const Corpus c = load_sms(dir / "sms.csv");
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c.samples()[0].label, kHam);
    EXPECT_EQ(c.samples()[0].text, "hello");
    EXPECT_EQ(c.samples()[0].source, Source::SpamText);
}

TEST(Sms, CategoryIsCaseInsensitive) {
    TempDir dir;
    write_file(dir / "sms.csv", "Category,Message\nSpam,WIN a prize\nHAM,see you\n");
    const Corpus c = load_sms(dir / "sms.csv");
    EXPECT_EQ(c.samples()[0].label, kSpam);
    EXPECT_EQ(c.samples()[1].label, kHam);
}

TEST(Sms, MissingColumnsIsSchemaError) {
    TempDir dir;
    write_file(dir / "sms.csv", "foo,bar\nham,hello\n");
    EXPECT_THROW(load_sms(dir / "sms.csv"), SchemaError);
}

TEST(Sms, UnknownCategoryIsRowError) {
    TempDir dir;
    write_file(dir / "sms.csv", "Category,Message\nham,hello\nmaybe,what\n");
    // 1 of 2 rows invalid exceeds the 1% tolerance.
    EXPECT_THROW(load_sms(dir / "sms.csv"), IngestError);

    std::string many = "Category,Message\n";
    for (int i = 0; i < 200; ++i) many += "ham,message " + std::to_string(i) + "\n";
    many += "unknown,odd\n";
    write_file(dir / "many.csv", many);
    const Corpus c = load_sms(dir / "many.csv");
    EXPECT_EQ(c.size(), 200u);
    EXPECT_EQ(c.stats().skipped_invalid, 1u);
}

TEST(Sms, Latin1IsTranscoded) {
    TempDir dir;
    write_file(dir / "sms.csv", "v1,v2\nham,caf\xE9 tonight\n");
    const Corpus c = load_sms(dir / "sms.csv");
    EXPECT_EQ(c.samples()[0].text, "caf\xC3\xA9 tonight");
}

TEST(Enron, FourMailsPlusEmptyBody) {
    TempDir dir;
    write_file(dir / "enron1/ham/0001.txt", "Subject: meeting\nmeeting moved to friday\n");
    write_file(dir / "enron1/ham/0002.txt", "Subject: report\nplease review the report\n");
    write_file(dir / "enron1/spam/0003.txt", "From: a@b.c\nSubject: deal\n\ncheap pills online\n");
    write_file(dir / "enron1/spam/0004.txt", "Subject: offer\nlimited offer\n");
    write_file(dir / "enron1/spam/0005.txt", "From: x@y.z\nSubject: empty\n\n");
    const Corpus c = load_enron(dir.path());
    EXPECT_EQ(c.ham(), 2u);
    EXPECT_EQ(c.spam(), 2u);
    EXPECT_EQ(c.stats().skipped_empty, 1u);
    EXPECT_EQ(c.samples()[2].text, "cheap pills online\n");
}

TEST(Enron, RequiresHamOrSpamDirectories) {
    TempDir dir;
    write_file(dir / "misc/1.txt", "hello");
    EXPECT_THROW(load_enron(dir.path()), IngestError);
}

TEST(SpamAssassin, HamSubsetsMerge) {
    TempDir dir;
    write_file(dir / "easy_ham/0001.abc", "From: a@b\nSubject: hi\n\nlunch?\n");
    write_file(dir / "hard_ham/0001.def", "From: c@d\nContent-Type: text/html\n\n<b>newsletter</b>\n");
    write_file(dir / "spam/0001.ghi", "From: e@f\n\nbuy now\n");
    write_file(dir / "spam/cmds", "mv foo bar");
    const Corpus c = load_spamassassin(dir.path());
    EXPECT_EQ(c.ham(), 2u);
    EXPECT_EQ(c.spam(), 1u);
}

TEST(SpamAssassin, MissingSpamSubset) {
    TempDir dir;
    write_file(dir / "easy_ham/1", "From: a@b\n\nhi\n");
    write_file(dir / "hard_ham/1", "From: a@b\n\nhi\n");
    EXPECT_THROW(load_spamassassin(dir.path()), IngestError);
}

TEST(StripHeaders, Rules) {
    EXPECT_EQ(strip_headers("From: a\r\nSubject: b\r\n\r\nbody\r\n"), "body\r\n");
    EXPECT_EQ(strip_headers("Subject: x\n  continued\n\nbody"), "body");
    EXPECT_EQ(strip_headers("just a body\n\nmore"), "just a body\n\nmore");
    EXPECT_EQ(strip_headers("Subject: only\nthen body text"), "Subject: only\nthen body text");
    EXPECT_EQ(strip_headers("Subject: only headers\n"), "");
}

TEST(Combine, IdentityAndCounts) {
    const Corpus a = make_corpus(3, 2);
    const Corpus one[] = {a};
    EXPECT_EQ(combine(one).samples(), a.samples());

    std::vector<Sample> xs = {{"1", Source::Enron, "a", kHam}};
    std::vector<Sample> ys = {{"1", Source::SpamAssassin, "b", kSpam}};
    const Corpus both[] = {Corpus(xs), Corpus(ys)};
    const Corpus c = combine(both);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_NE(c.samples()[0].id, c.samples()[1].id);
    EXPECT_EQ(c.samples()[0].id, "Enron/1");
    EXPECT_EQ(c.ham(), 1u);
    EXPECT_EQ(c.spam(), 1u);
}

TEST(Combine, OfficialCountsSum) { EXPECT_EQ(2893 + 5574 + 32638 + 6047, 47152); }

TEST(Split, HundredSamplesEightyTenTen) {
    const Corpus c = make_corpus(50, 50);
    for (std::uint64_t seed : {0u, 7u, 12345u}) {
        const auto s = split(c, {0.8, 0.1, 0.1}, seed);
        EXPECT_EQ(s.train.size(), 80u);
        EXPECT_EQ(s.valid.size(), 10u);
        EXPECT_EQ(s.test.size(), 10u);
        auto spam = [](const std::vector<Sample> &v) {
            return std::count_if(v.begin(), v.end(), [](const Sample &x) { return x.label == kSpam; });
        };
        EXPECT_EQ(spam(s.train), 40);
        EXPECT_EQ(spam(s.valid), 5);
        EXPECT_EQ(spam(s.test), 5);
    }
}

TEST(Split, RejectsDegenerateRatiosAndTinyClasses) {
    const Corpus c = make_corpus(10, 10);
    EXPECT_THROW(split(c, {1.0, 0.0, 0.0}, 0), SplitError);
    EXPECT_THROW(split(c, {0.5, 0.2, 0.2}, 0), SplitError);
    EXPECT_THROW(parse_ratios("1:0:0"), ConfigError);
    EXPECT_THROW(split(make_corpus(10, 2), {0.8, 0.1, 0.1}, 0), SplitError);
}

TEST(Split, Deterministic) {
    const Corpus c = make_corpus(37, 11);
    const auto a = split(c, {0.7, 0.15, 0.15}, 99);
    const auto b = split(c, {0.7, 0.15, 0.15}, 99);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.valid, b.valid);
    EXPECT_EQ(a.test, b.test);
    const auto other = split(c, {0.7, 0.15, 0.15}, 100);
    EXPECT_NE(a.test, other.test);
}

TEST(Split, ParseRatios) {
    EXPECT_EQ(format_ratios(parse_ratios("60:20:20")), "60:20:20");
    const auto r = parse_ratios("0.7:0.15:0.15");
    EXPECT_NEAR(r.train + r.valid + r.test, 1.0, 1e-12);
    EXPECT_THROW(parse_ratios("80:20"), ConfigError);
    EXPECT_THROW(parse_ratios("a:b:c"), ConfigError);
}

// Property: for random corpora and each standard ratio triple the parts
// partition the corpus, sizes track the ratio products, and every part keeps
// the class mix within one sample.
TEST(SplitProperty, PartitionSizesAndStratification) {
    Rng rng(2024);
    const SplitRatios ratios[] = {{0.6, 0.2, 0.2}, {0.7, 0.15, 0.15}, {0.8, 0.1, 0.1}};
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t ham = 3 + rng.index(400), spam = 3 + rng.index(400);
        const Corpus c = make_corpus(ham, spam);
        const double n = static_cast<double>(ham + spam);
        const double spam_frac = static_cast<double>(spam) / n;
        for (const auto &r : ratios) {
            const auto s = split(c, r, rng.next_u64());
            std::set<std::string> ids;
            for (const auto *part : {&s.train, &s.valid, &s.test})
                for (const auto &x : *part) EXPECT_TRUE(ids.insert(x.id).second);
            EXPECT_EQ(ids.size(), c.size());

            EXPECT_LE(std::abs(static_cast<double>(s.valid.size()) - n * r.valid), 1.0);
            EXPECT_LE(std::abs(static_cast<double>(s.test.size()) - n * r.test), 1.0);
            EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - n * r.train), 1.0 + 1e-9);
            for (const auto *part : {&s.train, &s.valid, &s.test}) {
                const double m = static_cast<double>(part->size());
                const double f = static_cast<double>(std::count_if(part->begin(), part->end(),
                                                                   [](const Sample &x) { return x.label == kSpam; })) / m;
                EXPECT_LE(std::abs(f - spam_frac), 1.0 / m + 1e-12) << "ham=" << ham << " spam=" << spam;
            }
        }
    }
}

TEST(CorpusCache, JsonLinesRoundTrip) {
    TempDir dir;
    std::vector<Sample> s = {{"a/1", Source::Enron, "line one\nline \"two\" \xC3\xA9", kSpam},
                             {"b", Source::LingSpam, "hello", kHam}};
    const Corpus c(s);
    save_corpus(c, dir / "c.jsonl");
    const std::string text = spamdet::testing::read_file(dir / "c.jsonl");
    EXPECT_EQ(text.substr(0, text.find('\n')),
              R"({"id":"a/1","source":"Enron","label":1,"text":"line one\nline \"two\" é"})");
    EXPECT_EQ(load_corpus(dir / "c.jsonl").samples(), c.samples());
}

TEST(Csv, QuotedNewlinesAndEscapes) {
    const auto rows = parse_csv("a,b\r\n\"x\ny\",\"he said \"\"hi\"\"\"\n");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1][0], "x\ny");
    EXPECT_EQ(rows[1][1], "he said \"hi\"");
}
