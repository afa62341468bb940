#include <gtest/gtest.h>

#include <fcntl.h>
#include <sys/file.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <set>
#include <sstream>

#include "spamdet/embedding_cache.hpp"
#include "spamdet/head.hpp"
#include "spamdet/trainer.hpp"
#include "test_util.hpp"

using namespace spamdet;
using spamdet::testing::read_file;
using spamdet::testing::TempDir;
using spamdet::testing::write_file;

namespace {

struct RunResult {
    int status = -1;
    std::string out;
};

RunResult run(const std::string &args) {
    const std::string cmd = std::string(SPAMDET_CLI) + " " + args + " 2>/dev/null";
    RunResult r;
    FILE *pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
    const int st = ::pclose(pipe);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string last_line(const std::string &text) {
    std::istringstream in(text);
    std::string line, last;
    while (std::getline(in, line))
        if (!line.empty()) last = line;
    return last;
}

long newlines(const std::filesystem::path &file) {
    const std::string text = read_file(file);
    return std::count(text.begin(), text.end(), '\n');
}

std::string q(const std::filesystem::path &p) { return "'" + p.string() + "'"; }

const char *kWords[] = {"free",    "money",   "winner", "prize",   "click",  "offer",   "urgent", "claim",
                        "meeting", "project", "report", "lunch",   "family", "weekend", "dinner", "schedule"};

// Vocabulary, SMS-style CSV and a toy encoder in one directory.
struct Pipeline {
    TempDir dir{"spamdet-cli"};
    std::filesystem::path vocab = dir / "vocab.txt", csv = dir / "sms.csv", weights = dir / "enc";

    Pipeline() {
        std::string v = "[PAD]\n[UNK]\n[CLS]\n[SEP]\n";
        for (const char *w : kWords) v += std::string(w) + "\n";
        write_file(vocab, v);
        Rng rng(5);
        std::string c = "v1,v2\n";
        for (int i = 0; i < 60; ++i) {
            const bool spam = i % 2 == 0;
            std::string text;
            for (int k = 0; k < 6; ++k) text += std::string(kWords[(spam ? 0 : 8) + rng.index(8)]) + " ";
            c += std::string(spam ? "spam" : "ham") + ",\"" + text + "\"\n";
        }
        write_file(csv, c);
    }
};

} // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
    TempDir dir;
    EXPECT_EQ(run("").status, 2);
    EXPECT_EQ(run("frobnicate").status, 2);
    EXPECT_EQ(run("ingest --dataset nonsense --src " + q(dir.path()) + " --out " + q(dir / "o")).status, 2);
    EXPECT_EQ(run("eval --head " + q(dir / "missing") + " --cache " + q(dir / "x.emb")).status, 2);
    EXPECT_EQ(run("train --cache " + q(dir / "missing.emb")).status, 2);
    EXPECT_EQ(run("--help").status, 0);
}

TEST(Cli, IngestPrintsCountsAndIsIdempotent) {
    Pipeline p;
    const auto a = run("ingest --dataset sms --src " + q(p.csv) + " --out " + q(p.dir / "a"));
    ASSERT_EQ(a.status, 0);
    EXPECT_EQ(last_line(a.out), "60 total, 30 spam, 30 ham");
    const auto b = run("ingest --dataset sms --src " + q(p.csv) + " --out " + q(p.dir / "b"));
    ASSERT_EQ(b.status, 0);
    EXPECT_EQ(read_file(p.dir / "a" / "SpamText.jsonl"), read_file(p.dir / "b" / "SpamText.jsonl"));
    auto cfg_a = nlohmann::json::parse(read_file(p.dir / "a" / "run_config.json"));
    auto cfg_b = nlohmann::json::parse(read_file(p.dir / "b" / "run_config.json"));
    EXPECT_EQ(cfg_a["config"]["src"], p.csv.string());
    cfg_a["config"].erase("out");
    cfg_b["config"].erase("out");
    EXPECT_EQ(cfg_a, cfg_b);
}

TEST(Cli, EndToEndPipeline) {
    Pipeline p;
    ASSERT_EQ(run("init-encoder --vocab " + q(p.vocab) + " --layers 1 --heads 2 --d-model 16 --d-ff 32 "
                  "--max-position 64 --seed 3 --out " + q(p.weights)).status, 0);
    ASSERT_EQ(run("ingest --dataset sms --src " + q(p.csv) + " --out " + q(p.dir / "corpus")).status, 0);

    const std::string embed = "embed --corpus " + q(p.dir / "corpus" / "SpamText.jsonl") + " --weights " +
                              q(p.weights) + " --vocab " + q(p.vocab) + " --seq-len 40 --out " + q(p.dir / "emb");
    const auto e1 = run(embed);
    ASSERT_EQ(e1.status, 0);
    EXPECT_NE(e1.out.find("60 rows (60 computed, 0 reused)"), std::string::npos) << e1.out;
    const auto cache = p.dir / "emb" / "SpamText.emb";
    const auto set = read_embedding_cache(cache);
    EXPECT_EQ(set.header.seq_len, 40u);
    EXPECT_EQ(set.size(), 60u);

    // Interrupted run: drop the tail and rerun.
    std::filesystem::resize_file(cache, std::filesystem::file_size(cache) - 30);
    const auto e2 = run(embed);
    ASSERT_EQ(e2.status, 0);
    EXPECT_NE(e2.out.find("(1 computed, 59 reused)"), std::string::npos) << e2.out;
    EXPECT_EQ(read_embedding_cache(cache).features, set.features);
    EXPECT_EQ(run(embed + " --no-clean").status, 1);

    const std::string train = "train --cache " + q(cache) + " --epochs 40 --batch-size 8 --lr 0.003 --seed 1 --out ";
    const auto t1 = run(train + q(p.dir / "run1"));
    ASSERT_EQ(t1.status, 0) << t1.out;
    EXPECT_EQ(last_line(t1.out).rfind("train accuracy ", 0), 0u);
    const auto t2 = run(train + q(p.dir / "run2"));
    ASSERT_EQ(t2.status, 0);
    EXPECT_EQ(t1.out, t2.out);
    for (const char *f : {"head/weights.bin", "metrics.json", "train_log.jsonl"})
        EXPECT_EQ(read_file(p.dir / "run1" / f), read_file(p.dir / "run2" / f)) << f;
    EXPECT_EQ(newlines(p.dir / "run1" / "train_log.jsonl"), 40);

    const auto ev = run("eval --head " + q(p.dir / "run1" / "head"));
    ASSERT_EQ(ev.status, 0);
    const auto metrics = nlohmann::json::parse(read_file(p.dir / "run1" / "metrics.json"));
    const MetricsReport test = metrics["test"].get<MetricsReport>();
    EXPECT_NE(ev.out.find("n " + std::to_string(test.cm.total()) + " "), std::string::npos) << ev.out;

    // classify agrees with the head applied to cached features.
    const auto head = load_head(p.dir / "run1" / "head");
    const auto lp = predict_log_probs(head.params, LabeledFeatures::from(set).x, head.options);
    const auto pred = predict_classes(lp);
    const auto corpus = load_corpus(p.dir / "corpus" / "SpamText.jsonl");
    std::string lines;
    for (const auto &s : corpus.samples()) lines += s.text + "\n";
    write_file(p.dir / "batch.txt", lines);
    const auto cl = run("classify --head " + q(p.dir / "run1" / "head") + " --weights " + q(p.weights) +
                        " --vocab " + q(p.vocab) + " --file " + q(p.dir / "batch.txt"));
    ASSERT_EQ(cl.status, 0);
    std::istringstream in(cl.out);
    std::string line;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        ASSERT_TRUE(std::getline(in, line));
        std::istringstream fields(line);
        std::string verdict;
        double p_ham = 0, p_spam = 0;
        fields >> verdict >> p_ham >> p_spam;
        EXPECT_EQ(verdict, pred[i] ? "spam" : "ham") << i;
        EXPECT_NEAR(p_ham, std::exp(lp(i, 0)), 5e-5);
        EXPECT_NEAR(p_ham + p_spam, 1.0, 2e-4);
    }

    const auto empty = run("classify --head " + q(p.dir / "run1" / "head") + " --weights " + q(p.weights) +
                           " --vocab " + q(p.vocab) + " ''");
    EXPECT_EQ(empty.status, 0);
    EXPECT_TRUE(empty.out.rfind("ham ", 0) == 0 || empty.out.rfind("spam ", 0) == 0);
}

TEST(Cli, TrainOnSeparableCacheReachesFullTrainAccuracy) {
    TempDir dir;
    Rng rng(1);
    EmbeddingSet set;
    set.header = {0, 4, 64, 1, 2};
    set.features = MatrixF(40, 4);
    for (std::size_t i = 0; i < 40; ++i) {
        set.ids.push_back("x" + std::to_string(i));
        set.labels.push_back(static_cast<int>(i % 2));
        for (std::size_t j = 0; j < 4; ++j) set.features(i, j) = static_cast<float>(rng.normal(0, 0.5));
        set.features(i, 0) += set.labels.back() ? 2.0f : -2.0f;
    }
    write_embedding_cache(dir / "toy.emb", set);
    const auto r = run("train --cache " + q(dir / "toy.emb") + " --batch-size 8 --out " + q(dir / "out"));
    ASSERT_EQ(r.status, 0);
    EXPECT_EQ(last_line(r.out), "train accuracy 1.0000");
}

TEST(Cli, ClassifyDegenerateHeadSaysHam) {
    Pipeline p;
    ASSERT_EQ(run("init-encoder --vocab " + q(p.vocab) + " --layers 1 --heads 2 --d-model 16 --d-ff 32 --out " +
                  q(p.weights)).status, 0);
    HeadParams h = HeadParams::zeros(16);
    h.b3 = {1.0, 0.0};
    save_head(p.dir / "head", h, {}, nlohmann::ordered_json::object());
    const auto r = run("classify --head " + q(p.dir / "head") + " --weights " + q(p.weights) + " --vocab " +
                       q(p.vocab) + " 'free money winner prize' 'meeting lunch'");
    ASSERT_EQ(r.status, 0);
    EXPECT_EQ(r.out, "ham 0.7311 0.2689\nham 0.7311 0.2689\n");
}

TEST(Cli, FlagOverridesConfigFile) {
    TempDir dir;
    write_file(dir / "cfg.json", R"({"epochs": 3, "batch_size": 8, "seed": 4, "unrelated": true})");
    EmbeddingSet set;
    set.header = {0, 2, 64, 1, 2};
    set.features = MatrixF(30, 2);
    for (std::size_t i = 0; i < 30; ++i) {
        set.ids.push_back(std::to_string(i));
        set.labels.push_back(static_cast<int>(i % 2));
        set.features(i, 0) = static_cast<float>(i % 2) + 0.01f * static_cast<float>(i);
    }
    write_embedding_cache(dir / "c.emb", set);
    ASSERT_EQ(run("train --config " + q(dir / "cfg.json") + " --epochs 2 --cache " + q(dir / "c.emb") + " --out " +
                  q(dir / "out")).status, 0);
    const auto cfg = nlohmann::json::parse(read_file(dir / "out" / "run_config.json"));
    EXPECT_EQ(cfg["command"], "train");
    EXPECT_EQ(cfg["config"]["epochs"], 2);
    EXPECT_EQ(cfg["config"]["batch_size"], 8);
    EXPECT_EQ(cfg["config"]["seed"], 4);
    EXPECT_EQ(cfg["config"]["lr"], 3e-4);
    EXPECT_FALSE(cfg["config"].contains("unrelated"));
    EXPECT_EQ(newlines(dir / "out" / "train_log.jsonl"), 2);
}

TEST(Cli, LockedOutputDirectoryIsRejected) {
    TempDir dir;
    write_file(dir / "cfg.json", "{}");
    const int fd = ::open((dir / ".spamdet.lock").c_str(), O_CREAT | O_RDWR, 0644);
    ASSERT_GE(fd, 0);
    ASSERT_EQ(::flock(fd, LOCK_EX), 0);
    EXPECT_EQ(run("init-encoder --layers 1 --heads 1 --d-model 4 --d-ff 4 --vocab-size 8 --out " + q(dir.path()))
                  .status,
              1);
    ::close(fd);
    EXPECT_EQ(run("init-encoder --layers 1 --heads 1 --d-model 4 --d-ff 4 --vocab-size 8 --out " + q(dir.path()))
                  .status,
              0);
}

TEST(Cli, SweepResumesWithoutDuplicates) {
    TempDir dir;
    Rng rng(2);
    for (const char *name : {"Enron", "LingSpam"}) {
        EmbeddingSet set;
        set.header = {0, 3, 64, 1, 2};
        set.features = MatrixF(60, 3);
        for (std::size_t i = 0; i < 60; ++i) {
            set.ids.push_back(std::to_string(i));
            set.labels.push_back(static_cast<int>(i % 2));
            for (std::size_t j = 0; j < 3; ++j) set.features(i, j) = static_cast<float>(rng.normal());
            set.features(i, 1) += set.labels.back() ? 1.0f : -1.0f;
        }
        write_embedding_cache(dir / (std::string(name) + ".emb"), set);
    }
    const std::string base = "sweep --cache-dir " + q(dir.path()) + " --datasets Enron LingSpam --epochs 2 --out " +
                             q(dir / "out") + " --batch-sizes 16";
    ASSERT_EQ(run(base).status, 0);
    auto count_lines = [&] {
        std::set<std::string> keys;
        std::size_t n = 0;
        std::istringstream in(read_file(dir / "out" / "journal.jsonl"));
        for (std::string line; std::getline(in, line); ++n) {
            const auto j = nlohmann::json::parse(line);
            keys.insert(j["dataset"].get<std::string>() + j["batch"].dump() + j["split"].get<std::string>());
        }
        EXPECT_EQ(keys.size(), n);
        return n;
    };
    EXPECT_EQ(count_lines(), 6u);
    const auto second = run(base + " 32");
    ASSERT_EQ(second.status, 0);
    EXPECT_EQ(count_lines(), 12u);
    EXPECT_NE(read_file(dir / "out" / "table2.csv").find("Enron"), std::string::npos);
    EXPECT_NE(second.out.find("12 of 12 cells completed"), std::string::npos) << second.out;
}
