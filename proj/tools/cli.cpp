// spamdet command-line driver: ingest, embed, train, eval, sweep, classify,
// init-encoder. Exit status 0 on success, 1 on runtime failure, 2 on usage
// errors.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spamdet/corpus.hpp"
#include "spamdet/embedding_cache.hpp"
#include "spamdet/encoder.hpp"
#include "spamdet/error.hpp"
#include "spamdet/head.hpp"
#include "spamdet/metrics.hpp"
#include "spamdet/sweep.hpp"
#include "spamdet/tokenizer.hpp"
#include "spamdet/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace spamdet;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Resolves settings with precedence flag > config file > default and keeps
// the resolved values for provenance.
class Settings {
  public:
    template <typename T>
    void option(CLI::App *app, const std::string &flag, const std::string &key, std::optional<T> def,
                const std::string &help) {
        defaults_[key] = def ? json(*def) : json(nullptr);
        auto holder = std::make_shared<std::optional<T>>();
        app->add_option(flag, *holder, help);
        collect_.push_back([this, holder, key] {
            if (*holder) flags_[key] = **holder;
        });
    }

    // Boolean switch: presence sets `key` to `value`.
    void toggle(CLI::App *app, const std::string &flag, const std::string &key, bool def, bool value,
                const std::string &help) {
        defaults_[key] = def;
        auto holder = std::make_shared<bool>(false);
        app->add_flag(flag, *holder, help);
        collect_.push_back([this, holder, key, value] {
            if (*holder) flags_[key] = value;
        });
    }

    void config_option(CLI::App *app) { app->add_option("--config", config_file_, "JSON file with default settings"); }

    void resolve() {
        for (auto &c : collect_) c();
        resolved_ = defaults_;
        if (!config_file_.empty()) {
            std::ifstream in(config_file_);
            if (!in) throw UsageError("cannot read config file " + config_file_);
            json file;
            try {
                file = json::parse(in);
            } catch (const json::exception &e) {
                throw UsageError("config file " + config_file_ + " is not valid JSON: " + e.what());
            }
            if (!file.is_object()) throw UsageError("config file must hold a JSON object");
            for (const auto &[key, value] : file.items()) {
                const std::string k = normalize(key);
                if (resolved_.contains(k)) resolved_[k] = value;
            }
        }
        for (const auto &[key, value] : flags_.items()) resolved_[key] = value;
    }

    template <typename T>
    T get(const std::string &key) const {
        const auto &v = resolved_.at(key);
        if (v.is_null()) throw UsageError("missing required setting --" + flag_name(key));
        try {
            return v.get<T>();
        } catch (const json::exception &) {
            throw UsageError("setting '" + key + "' has the wrong type: " + v.dump());
        }
    }

    bool has(const std::string &key) const { return resolved_.contains(key) && !resolved_.at(key).is_null(); }
    const json &resolved() const { return resolved_; }

  private:
    static std::string normalize(std::string key) {
        for (auto &c : key)
            if (c == '-') c = '_';
        return key;
    }
    static std::string flag_name(std::string key) {
        for (auto &c : key)
            if (c == '_') c = '-';
        return key;
    }

    json defaults_ = json::object(), flags_ = json::object(), resolved_;
    std::string config_file_;
    std::vector<std::function<void()>> collect_;
};

// Exclusive advisory lock on <dir>/.spamdet.lock, released on exit.
class DirLock {
  public:
    explicit DirLock(const fs::path &dir) {
        fs::create_directories(dir);
        const fs::path file = dir / ".spamdet.lock";
        fd_ = ::open(file.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd_ < 0) throw Error("cannot create lock file " + file.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            throw Error("output directory " + dir.string() + " is in use by another spamdet process");
        }
    }
    ~DirLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    DirLock(const DirLock &) = delete;
    DirLock &operator=(const DirLock &) = delete;

  private:
    int fd_ = -1;
};

void write_text(const fs::path &file, const std::string &text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write " + file.string());
}

std::string read_text(const fs::path &file) {
    std::ifstream in(file, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path &file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot read " + file.string());
    return json::parse(in);
}

void echo_config(const fs::path &dir, const std::string &command, const Settings &s) {
    json j;
    j["command"] = command;
    j["config"] = s.resolved();
    write_text(dir / "run_config.json", j.dump(2) + "\n");
}

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

SplitRatios ratios_setting(const Settings &s, const std::string &key) {
    try {
        return parse_ratios(s.get<std::string>(key));
    } catch (const ConfigError &e) {
        throw UsageError(e.what());
    }
}

DatasetId dataset_setting(const std::string &name) {
    const auto d = parse_dataset(name);
    if (!d) throw UsageError("unknown dataset '" + name + "'");
    return *d;
}

// Settings shared by the embed sidecar and head metadata.
struct FeatureInfo {
    std::size_t seq_len = 64;
    bool clean = true;
    bool pooled = true;
};

json sidecar_json(const FeatureInfo &f) { return json{{"seq_len", f.seq_len}, {"clean", f.clean}, {"pooled", f.pooled}}; }

std::optional<FeatureInfo> read_sidecar(const fs::path &cache) {
    const fs::path file = cache.string() + ".json";
    if (!fs::exists(file)) return std::nullopt;
    const json j = read_json(file);
    return FeatureInfo{j.at("seq_len").get<std::size_t>(), j.at("clean").get<bool>(), j.at("pooled").get<bool>()};
}

// ---------------------------------------------------------------- ingest

int cmd_ingest(const Settings &s) {
    const std::string name = s.get<std::string>("dataset");
    const auto source = parse_source(name);
    if (!source) throw UsageError("unknown dataset '" + name + "' (lingspam, sms, enron, spamassassin)");
    const fs::path src = s.get<std::string>("src");
    if (!fs::exists(src)) throw UsageError("source path " + src.string() + " does not exist");
    const fs::path out = s.get<std::string>("out");
    DirLock lock(out);

    const Corpus corpus = load_dataset(*source, src);
    const fs::path file = out / (std::string(to_string(*source)) + ".jsonl");
    save_corpus(corpus, file);
    echo_config(out, "ingest", s);
    if (corpus.stats().skipped_empty || corpus.stats().skipped_invalid)
        std::cerr << "skipped " << corpus.stats().skipped_empty << " empty and " << corpus.stats().skipped_invalid
                  << " invalid entries\n";
    std::cout << corpus.size() << " total, " << corpus.spam() << " spam, " << corpus.ham() << " ham\n";
    return 0;
}

// ---------------------------------------------------------------- embed

int cmd_embed(const Settings &s) {
    const fs::path corpus_file = s.get<std::string>("corpus");
    const fs::path weights = s.get<std::string>("weights");
    const fs::path vocab_file = s.get<std::string>("vocab");
    for (const auto &p : {corpus_file, weights / "manifest.json", vocab_file})
        if (!fs::exists(p)) throw UsageError("input " + p.string() + " does not exist");
    const fs::path out = s.get<std::string>("out");
    DirLock lock(out);

    FeatureInfo info{s.get<std::size_t>("seq_len"), s.get<bool>("clean"), s.get<bool>("pooled")};
    const fs::path cache = out / (corpus_file.stem().string() + ".emb");
    if (auto existing = read_sidecar(cache); existing && sidecar_json(*existing) != sidecar_json(info))
        throw CacheError(cache.string() + " was built with " + sidecar_json(*existing).dump() +
                         "; refusing to append rows built with " + sidecar_json(info).dump());

    const Corpus corpus = load_corpus(corpus_file);
    const EncoderConfig config = read_encoder_config(weights);
    const Encoder encoder(load_weights(weights, config), EncodeOptions{info.pooled});
    const Vocab vocab = Vocab::load(vocab_file);

    EmbedOptions opts;
    opts.seq_len = info.seq_len;
    opts.clean = info.clean;
    opts.threads = s.get<unsigned>("threads");
    write_text(cache.string() + ".json", sidecar_json(info).dump(2) + "\n");
    const auto report = embed_corpus(corpus.samples(), encoder, vocab, opts, cache,
                                     [](std::size_t done, std::size_t total) {
                                         std::cerr << "\rembedded " << done << "/" << total << std::flush;
                                     });
    if (report.computed) std::cerr << "\n";
    echo_config(out, "embed", s);
    std::cout << cache.string() << ": " << report.reused + report.computed << " rows (" << report.computed
              << " computed, " << report.reused << " reused)\n";
    return 0;
}

// ---------------------------------------------------------------- train / eval

fs::path cache_setting(const Settings &s) {
    if (s.has("cache")) return s.get<std::string>("cache");
    if (s.has("dataset")) {
        const DatasetId d = dataset_setting(s.get<std::string>("dataset"));
        return fs::path(s.get<std::string>("cache_dir")) / (std::string(to_string(d)) + ".emb");
    }
    throw UsageError("give --cache or --dataset with --cache-dir");
}

HeadOptions head_options(const Settings &s) {
    HeadOptions h;
    const std::string order = s.get<std::string>("block_order");
    if (order == "relu-norm") h.order = BlockOrder::ReluThenNorm;
    else if (order != "norm-relu") throw UsageError("--block-order must be norm-relu or relu-norm");
    return h;
}

int cmd_train(const Settings &s) {
    const fs::path cache = cache_setting(s);
    if (!fs::exists(cache)) throw UsageError("embedding cache " + cache.string() + " does not exist");
    const fs::path out = s.get<std::string>("out");
    DirLock lock(out);

    TrainConfig cfg;
    cfg.lr = s.get<double>("lr");
    cfg.epochs = s.get<int>("epochs");
    cfg.batch_size = s.get<std::size_t>("batch_size");
    cfg.seed = s.get<std::uint64_t>("seed");
    cfg.split = ratios_setting(s, "split");
    cfg.head = head_options(s);
    try {
        cfg.validate();
    } catch (const ConfigError &e) {
        throw UsageError(e.what());
    }

    const EmbeddingSet set = read_embedding_cache(cache);
    const auto all = LabeledFeatures::from(set);
    const auto idx = split_indices(all.y, cfg.split, cfg.seed);
    const auto train = all.rows(idx.train), valid = all.rows(idx.valid), test = all.rows(idx.test);

    std::ostringstream log;
    FitCallbacks cb;
    cb.on_epoch = [&](const EpochRecord &r) {
        log << json{{"epoch", r.epoch},
                    {"train_loss", r.train_loss},
                    {"train_accuracy", r.train_accuracy},
                    {"valid_loss", r.valid_loss},
                    {"valid_accuracy", r.valid_accuracy}}
                   .dump()
            << "\n";
    };
    const FitResult fitted = fit(train, valid, cfg, cb);
    const MetricsReport test_metrics = evaluate(fitted.params, test, cfg.head);
    const double train_accuracy = evaluate(fitted.params, train, cfg.head).accuracy;

    json meta;
    meta["cache"] = fs::absolute(cache).lexically_normal().string();
    meta["split"] = format_ratios(cfg.split);
    meta["seed"] = cfg.seed;
    meta["best_epoch"] = fitted.history.best_epoch;
    meta["d_model"] = set.header.d_model;
    meta["seq_len"] = set.header.seq_len;
    meta["vocab_hash"] = set.header.vocab_hash;
    meta["weights_hash"] = set.header.weights_hash;
    if (auto info = read_sidecar(cache)) {
        meta["clean"] = info->clean;
        meta["pooled"] = info->pooled;
    }
    meta["train"] = cfg;
    save_head(out / "head", fitted.params, cfg.head, meta);
    write_text(out / "train_log.jsonl", log.str());
    json metrics;
    metrics["test"] = test_metrics;
    metrics["train_accuracy"] = train_accuracy;
    metrics["best_epoch"] = fitted.history.best_epoch;
    write_text(out / "metrics.json", metrics.dump(2) + "\n");
    echo_config(out, "train", s);

    std::cout << "best epoch " << fitted.history.best_epoch << "\n";
    std::cout << "test accuracy " << fixed(test_metrics.accuracy) << " precision " << fixed(test_metrics.precision)
              << " recall " << fixed(test_metrics.recall) << " f1 " << fixed(test_metrics.f1) << "\n";
    std::cout << "train accuracy " << fixed(train_accuracy) << "\n";
    return 0;
}

fs::path head_setting(const Settings &s) {
    const fs::path head = s.get<std::string>("head");
    if (!fs::exists(head / "manifest.json")) throw UsageError("no head checkpoint at " + head.string());
    return head;
}

int cmd_eval(const Settings &s) {
    const fs::path head_dir = head_setting(s);
    const HeadCheckpoint head = load_head(head_dir);
    const json &meta = head.metadata;
    const fs::path cache = s.has("cache") || s.has("dataset") ? cache_setting(s)
                                                              : fs::path(meta.at("cache").get<std::string>());
    if (!fs::exists(cache)) throw UsageError("embedding cache " + cache.string() + " does not exist");

    const EmbeddingSet set = read_embedding_cache(cache);
    if (meta.contains("weights_hash") && meta["weights_hash"].get<std::uint64_t>() != set.header.weights_hash)
        throw CacheError(cache.string() + " was embedded with a different encoder than the head was trained on");
    const auto all = LabeledFeatures::from(set);
    LabeledFeatures part;
    if (s.get<bool>("all")) {
        part = all;
    } else {
        const SplitRatios ratios = s.has("split") ? ratios_setting(s, "split")
                                                  : parse_ratios(meta.at("split").get<std::string>());
        const std::uint64_t seed = s.has("seed") ? s.get<std::uint64_t>("seed") : meta.at("seed").get<std::uint64_t>();
        part = all.rows(split_indices(all.y, ratios, seed).test);
    }
    const MetricsReport r = evaluate(head.params, part, head.options);
    if (s.has("out")) {
        const fs::path out = s.get<std::string>("out");
        DirLock lock(out);
        json j;
        j["metrics"] = r;
        write_text(out / "metrics.json", j.dump(2) + "\n");
        echo_config(out, "eval", s);
    }
    std::cout << "n " << r.cm.total() << " accuracy " << fixed(r.accuracy) << " precision " << fixed(r.precision)
              << " recall " << fixed(r.recall) << " f1 " << fixed(r.f1) << "\n";
    std::cout << "confusion tn " << r.cm.tn << " fp " << r.cm.fp << " fn " << r.cm.fn << " tp " << r.cm.tp << "\n";
    return 0;
}

// ---------------------------------------------------------------- sweep

int cmd_sweep(const Settings &s) {
    SweepSpec spec;
    spec.datasets.clear();
    for (const auto &name : s.get<std::vector<std::string>>("datasets")) spec.datasets.push_back(dataset_setting(name));
    spec.batch_sizes = s.get<std::vector<std::size_t>>("batch_sizes");
    spec.splits.clear();
    for (const auto &text : s.get<std::vector<std::string>>("splits")) {
        try {
            spec.splits.push_back(parse_ratios(text));
        } catch (const ConfigError &e) {
            throw UsageError(e.what());
        }
    }
    spec.seeds = s.get<std::vector<std::uint64_t>>("seeds");
    spec.epochs = s.get<int>("epochs");
    spec.seq_len = s.get<std::size_t>("seq_len");
    spec.base.lr = s.get<double>("lr");
    spec.base.head = head_options(s);
    try {
        spec.validate();
    } catch (const ConfigError &e) {
        throw UsageError(e.what());
    }

    const fs::path cache_dir = s.get<std::string>("cache_dir");
    const fs::path out = s.get<std::string>("out");
    DirLock lock(out);

    CacheMap caches;
    for (auto d : {DatasetId::LingSpam, DatasetId::SpamText, DatasetId::Enron, DatasetId::SpamAssassin,
                   DatasetId::Combined}) {
        const fs::path file = cache_dir / (std::string(to_string(d)) + ".emb");
        if (!fs::exists(file)) continue;
        try {
            caches.emplace(d, read_embedding_cache(file));
        } catch (const CacheError &e) {
            std::cerr << "ignoring " << file.string() << ": " << e.what() << "\n";
        }
    }

    echo_config(out, "sweep", s);
    SweepOptions opts;
    opts.parallelism = s.get<unsigned>("parallelism");
    opts.journal = out / "journal.jsonl";
    const SweepResult result = run_sweep(spec, caches, opts);
    render_tables(result, out);

    std::size_t failed = 0;
    for (const auto &c : result.cells)
        if (!c.ok) {
            ++failed;
            std::cerr << "cell " << to_string(c.key.dataset) << " batch " << c.key.batch_size << " split "
                      << format_ratios(c.key.split) << " seed " << c.key.seed << " failed: " << c.failure << "\n";
        }
    std::cout << read_text(out / "table2.txt");
    std::cout << result.cells.size() - failed << " of " << result.cells.size() << " cells completed\n";
    return failed == result.cells.size() ? 1 : 0;
}

// ---------------------------------------------------------------- classify

int cmd_classify(const Settings &s, const std::vector<std::string> &texts) {
    const fs::path head_dir = head_setting(s);
    const fs::path weights = s.get<std::string>("weights");
    const fs::path vocab_file = s.get<std::string>("vocab");
    for (const auto &p : {weights / "manifest.json", vocab_file})
        if (!fs::exists(p)) throw UsageError("input " + p.string() + " does not exist");

    const HeadCheckpoint head = load_head(head_dir);
    const json &meta = head.metadata;
    FeatureInfo info;
    info.seq_len = s.has("seq_len") ? s.get<std::size_t>("seq_len") : meta.value("seq_len", info.seq_len);
    info.clean = meta.value("clean", info.clean);
    info.pooled = meta.value("pooled", info.pooled);

    const Encoder encoder(load_weights(weights, read_encoder_config(weights)), EncodeOptions{info.pooled});
    const Vocab vocab = Vocab::load(vocab_file);
    if (meta.contains("weights_hash") && meta["weights_hash"].get<std::uint64_t>() != encoder.fingerprint())
        throw Error("the head was trained on features from a different encoder than " + weights.string());
    if (meta.contains("vocab_hash") && meta["vocab_hash"].get<std::uint64_t>() != vocab.fingerprint())
        throw Error("the head was trained with a different vocabulary than " + vocab_file.string());
    if (static_cast<std::size_t>(encoder.dim()) != head.params.input_dim())
        throw Error("encoder width " + std::to_string(encoder.dim()) + " does not match head input width " +
                    std::to_string(head.params.input_dim()));

    std::vector<std::string> inputs = texts;
    if (s.has("file")) {
        const fs::path file = s.get<std::string>("file");
        std::ifstream in(file, std::ios::binary);
        if (!in) throw UsageError("cannot read " + file.string());
        for (std::string line; std::getline(in, line);) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            inputs.push_back(line);
        }
    }
    if (inputs.empty()) throw UsageError("nothing to classify: give text arguments or --file");

    EmbedOptions opts;
    opts.seq_len = info.seq_len;
    opts.clean = info.clean;
    MatrixD x(inputs.size(), head.params.input_dim());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto v = encoder.encode_cls(encode(model_input(inputs[i], opts), vocab, opts.seq_len, opts.tokenizer));
        std::copy(v.begin(), v.end(), x.row(i).begin());
    }
    const MatrixD lp = predict_log_probs(head.params, x, head.options);
    const auto verdict = predict_classes(lp);
    for (std::size_t i = 0; i < inputs.size(); ++i)
        std::cout << (verdict[i] == kSpam ? "spam" : "ham") << " " << fixed(std::exp(lp(i, 0))) << " "
                  << fixed(std::exp(lp(i, 1))) << "\n";
    return 0;
}

// ---------------------------------------------------------------- init-encoder

int cmd_init_encoder(const Settings &s) {
    EncoderConfig c;
    c.num_layers = s.get<int>("layers");
    c.num_heads = s.get<int>("heads");
    c.d_model = s.get<int>("d_model");
    c.d_ff = s.get<int>("d_ff");
    c.max_position = s.get<int>("max_position");
    if (s.has("vocab")) c.vocab_size = static_cast<int>(Vocab::load(s.get<std::string>("vocab")).size());
    else c.vocab_size = s.get<int>("vocab_size");
    try {
        c.validate();
    } catch (const ConfigError &e) {
        throw UsageError(e.what());
    }
    const fs::path out = s.get<std::string>("out");
    DirLock lock(out);
    save_weights(init_random(c, s.get<std::uint64_t>("seed")), out);
    std::cout << "wrote " << parameter_count(c) << " parameters to " << out.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"spamdet: frozen-encoder spam detection"};
    app.require_subcommand(1);

    using Sz = std::size_t;
    using U64 = std::uint64_t;
    using Str = std::string;

    Settings ingest_s, embed_s, train_s, eval_s, sweep_s, classify_s, init_s;

    auto *ingest = app.add_subcommand("ingest", "load a raw dataset into a JSON-lines corpus cache");
    ingest_s.config_option(ingest);
    ingest_s.option<Str>(ingest, "--dataset", "dataset", std::nullopt, "lingspam, sms, enron or spamassassin");
    ingest_s.option<Str>(ingest, "--src", "src", std::nullopt, "dataset file or directory");
    ingest_s.option<Str>(ingest, "--out", "out", Str("."), "output directory");

    auto *embed = app.add_subcommand("embed", "compute [CLS] features for a corpus cache");
    embed_s.config_option(embed);
    embed_s.option<Str>(embed, "--corpus", "corpus", std::nullopt, "corpus cache (.jsonl) from ingest");
    embed_s.option<Str>(embed, "--weights", "weights", std::nullopt, "encoder checkpoint directory");
    embed_s.option<Str>(embed, "--vocab", "vocab", std::nullopt, "vocabulary file");
    embed_s.option<Sz>(embed, "--seq-len", "seq_len", Sz(64), "token sequence length");
    embed_s.option<unsigned>(embed, "--threads", "threads", 0u, "worker threads (0: all cores)");
    embed_s.option<Str>(embed, "--out", "out", Str("."), "output directory");
    embed_s.toggle(embed, "--no-clean", "clean", true, false, "skip the short-word filter");
    embed_s.toggle(embed, "--raw-cls", "pooled", true, false, "use the raw [CLS] state instead of the pooler output");

    auto add_train_flags = [](CLI::App *cmd, Settings &s) {
        s.config_option(cmd);
        s.option<Str>(cmd, "--cache", "cache", std::nullopt, "embedding cache (.emb)");
        s.option<Str>(cmd, "--dataset", "dataset", std::nullopt, "dataset whose cache lives in --cache-dir");
        s.option<Str>(cmd, "--cache-dir", "cache_dir", Str("."), "directory with <Dataset>.emb caches");
    };

    auto *train = app.add_subcommand("train", "train the classifier head on an embedding cache");
    add_train_flags(train, train_s);
    train_s.option<U64>(train, "--seed", "seed", U64(0), "seed for split, shuffling, dropout and init");
    train_s.option<Sz>(train, "--batch-size", "batch_size", Sz(128), "minibatch size");
    train_s.option<Str>(train, "--split", "split", Str("80:10:10"), "train:valid:test ratios");
    train_s.option<int>(train, "--epochs", "epochs", 200, "training epochs");
    train_s.option<double>(train, "--lr", "lr", 3e-4, "Adam learning rate");
    train_s.option<Str>(train, "--block-order", "block_order", Str("norm-relu"), "norm-relu or relu-norm");
    train_s.option<Str>(train, "--out", "out", Str("."), "output directory");

    auto *eval = app.add_subcommand("eval", "evaluate a trained head");
    add_train_flags(eval, eval_s);
    eval_s.option<Str>(eval, "--head", "head", std::nullopt, "head checkpoint directory");
    eval_s.option<U64>(eval, "--seed", "seed", std::nullopt, "split seed (default: the training seed)");
    eval_s.option<Str>(eval, "--split", "split", std::nullopt, "split ratios (default: the training split)");
    eval_s.toggle(eval, "--all", "all", false, true, "evaluate every row instead of the test part");
    eval_s.option<Str>(eval, "--out", "out", std::nullopt, "directory for metrics.json");

    auto *sweep = app.add_subcommand("sweep", "run the dataset x batch x split grid");
    sweep_s.config_option(sweep);
    const SweepSpec defaults;
    std::vector<Str> all_datasets, default_splits;
    for (auto d : defaults.datasets) all_datasets.emplace_back(to_string(d));
    for (const auto &r : defaults.splits) default_splits.push_back(format_ratios(r));
    sweep_s.option<Str>(sweep, "--cache-dir", "cache_dir", Str("."), "directory with <Dataset>.emb caches");
    sweep_s.option<std::vector<Str>>(sweep, "--datasets", "datasets", all_datasets, "datasets to sweep");
    sweep_s.option<std::vector<Sz>>(sweep, "--batch-size,--batch-sizes", "batch_sizes", defaults.batch_sizes,
                                    "minibatch sizes");
    sweep_s.option<std::vector<Str>>(sweep, "--split,--splits", "splits", default_splits, "split ratios");
    sweep_s.option<std::vector<U64>>(sweep, "--seed,--seeds", "seeds", defaults.seeds, "seeds");
    sweep_s.option<int>(sweep, "--epochs", "epochs", defaults.epochs, "training epochs per cell");
    sweep_s.option<Sz>(sweep, "--seq-len", "seq_len", defaults.seq_len, "expected cache seq_len");
    sweep_s.option<double>(sweep, "--lr", "lr", defaults.base.lr, "Adam learning rate");
    sweep_s.option<Str>(sweep, "--block-order", "block_order", Str("norm-relu"), "norm-relu or relu-norm");
    sweep_s.option<unsigned>(sweep, "--parallelism", "parallelism", 1u, "cells trained concurrently");
    sweep_s.option<Str>(sweep, "--out", "out", Str("."), "output directory");

    auto *classify = app.add_subcommand("classify", "label messages as spam or ham");
    classify_s.config_option(classify);
    std::vector<Str> texts;
    classify->add_option("text", texts, "messages to classify");
    classify_s.option<Str>(classify, "--head", "head", std::nullopt, "head checkpoint directory");
    classify_s.option<Str>(classify, "--weights", "weights", std::nullopt, "encoder checkpoint directory");
    classify_s.option<Str>(classify, "--vocab", "vocab", std::nullopt, "vocabulary file");
    classify_s.option<Str>(classify, "--file", "file", std::nullopt, "one message per line");
    classify_s.option<Sz>(classify, "--seq-len", "seq_len", std::nullopt, "override the training seq_len");

    auto *init = app.add_subcommand("init-encoder", "write a randomly initialized encoder checkpoint");
    init_s.config_option(init);
    init_s.option<int>(init, "--layers", "layers", 2, "transformer layers");
    init_s.option<int>(init, "--heads", "heads", 4, "attention heads");
    init_s.option<int>(init, "--d-model", "d_model", 64, "hidden width");
    init_s.option<int>(init, "--d-ff", "d_ff", 128, "feed-forward width");
    init_s.option<int>(init, "--max-position", "max_position", 512, "position table size");
    init_s.option<int>(init, "--vocab-size", "vocab_size", 30522, "word table size (ignored with --vocab)");
    init_s.option<Str>(init, "--vocab", "vocab", std::nullopt, "take the word table size from this vocabulary");
    init_s.option<U64>(init, "--seed", "seed", U64(0), "initialization seed");
    init_s.option<Str>(init, "--out", "out", std::nullopt, "checkpoint directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 2;
    }

    try {
        auto run = [&](Settings &s, auto &&fn) {
            s.resolve();
            return fn(s);
        };
        if (*ingest) return run(ingest_s, cmd_ingest);
        if (*embed) return run(embed_s, cmd_embed);
        if (*train) return run(train_s, cmd_train);
        if (*eval) return run(eval_s, cmd_eval);
        if (*sweep) return run(sweep_s, cmd_sweep);
        if (*classify) return run(classify_s, [&](const Settings &s) { return cmd_classify(s, texts); });
        if (*init) return run(init_s, cmd_init_encoder);
    } catch (const UsageError &e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
