#include "spamdet/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "spamdet/error.hpp"

namespace fs = std::filesystem;

namespace spamdet {

namespace {

std::string exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

bool same_cell(const CellKey &a, const CellKey &b) {
    return a.dataset == b.dataset && a.batch_size == b.batch_size && a.seed == b.seed &&
           format_ratios(a.split) == format_ratios(b.split);
}

nlohmann::ordered_json journal_record(const CellResult &c) {
    return nlohmann::ordered_json{{"dataset", to_string(c.key.dataset)},
                                  {"batch", c.key.batch_size},
                                  {"split", format_ratios(c.key.split)},
                                  {"seed", c.key.seed},
                                  {"metrics", c.metrics},
                                  {"best_epoch", c.best_epoch},
                                  {"seconds", c.seconds}};
}

std::vector<CellResult> read_journal(const fs::path &file) {
    std::vector<CellResult> out;
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::ordered_json::parse(line);
            CellResult c;
            const auto ds = parse_dataset(j.at("dataset").get<std::string>());
            if (!ds) continue;
            c.key = {*ds, j.at("batch").get<std::size_t>(), parse_ratios(j.at("split").get<std::string>()),
                     j.at("seed").get<std::uint64_t>()};
            c.metrics = j.at("metrics").get<MetricsReport>();
            c.best_epoch = j.at("best_epoch").get<int>();
            c.seconds = j.at("seconds").get<double>();
            c.ok = true;
            out.push_back(std::move(c));
        } catch (const std::exception &) {
            // A torn last line from an interrupted run; the cell reruns.
        }
    }
    return out;
}

std::vector<std::string> split_line(const std::string &line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

} // namespace

std::string_view to_string(DatasetId d) {
    switch (d) {
    case DatasetId::LingSpam: return "LingSpam";
    case DatasetId::SpamText: return "SpamText";
    case DatasetId::Enron: return "Enron";
    case DatasetId::SpamAssassin: return "SpamAssassin";
    case DatasetId::Combined: return "Combined";
    }
    return "?";
}

std::optional<DatasetId> parse_dataset(std::string_view name) {
    std::string n(name);
    std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (n == "combined") return DatasetId::Combined;
    if (const auto s = parse_source(n)) return static_cast<DatasetId>(static_cast<int>(*s));
    return std::nullopt;
}

void SweepSpec::validate() const {
    if (datasets.empty() || batch_sizes.empty() || splits.empty() || seeds.empty())
        throw ConfigError("sweep spec lists must be non-empty");
    for (auto b : batch_sizes)
        if (b < 2) throw ConfigError("sweep batch sizes must be at least 2");
    if (epochs < 1) throw ConfigError("sweep epochs must be at least 1");
}

std::vector<CellKey> enumerate_cells(const SweepSpec &spec) {
    std::vector<CellKey> keys;
    keys.reserve(spec.cell_count());
    for (auto d : spec.datasets)
        for (auto b : spec.batch_sizes)
            for (const auto &s : spec.splits)
                for (auto seed : spec.seeds) keys.push_back({d, b, s, seed});
    return keys;
}

CellResult run_cell(const CellKey &key, const EmbeddingSet &cache, const SweepSpec &spec) {
    const auto start = std::chrono::steady_clock::now();
    CellResult r;
    r.key = key;
    if (cache.header.seq_len != spec.seq_len) {
        r.failure = "cache seq_len " + std::to_string(cache.header.seq_len) + " differs from sweep seq_len " +
                    std::to_string(spec.seq_len);
        return r;
    }
    try {
        const auto all = LabeledFeatures::from(cache);
        const auto idx = split_indices(all.y, key.split, key.seed);
        TrainConfig cfg = spec.base;
        cfg.batch_size = key.batch_size;
        cfg.seed = key.seed;
        cfg.split = key.split;
        cfg.epochs = spec.epochs;
        const auto fitted = fit(all.rows(idx.train), all.rows(idx.valid), cfg);
        r.metrics = evaluate(fitted.params, all.rows(idx.test), cfg.head);
        r.best_epoch = fitted.history.best_epoch;
        r.ok = true;
    } catch (const Error &e) {
        r.failure = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

std::map<DatasetId, std::size_t> select_best(const SweepSpec &spec, const std::vector<CellResult> &cells) {
    auto split_rank = [&](const SplitRatios &s) {
        for (std::size_t i = 0; i < spec.splits.size(); ++i)
            if (format_ratios(spec.splits[i]) == format_ratios(s)) return i;
        return spec.splits.size();
    };
    auto seed_rank = [&](std::uint64_t seed) {
        return static_cast<std::size_t>(std::find(spec.seeds.begin(), spec.seeds.end(), seed) - spec.seeds.begin());
    };
    std::map<DatasetId, std::size_t> best;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto &c = cells[i];
        if (!c.ok) continue;
        auto it = best.find(c.key.dataset);
        if (it == best.end()) {
            best.emplace(c.key.dataset, i);
            continue;
        }
        const auto &cur = cells[it->second];
        const auto a = std::make_tuple(-c.metrics.f1, c.key.batch_size, split_rank(c.key.split), seed_rank(c.key.seed));
        const auto b = std::make_tuple(-cur.metrics.f1, cur.key.batch_size, split_rank(cur.key.split),
                                       seed_rank(cur.key.seed));
        if (a < b) it->second = i;
    }
    return best;
}

SweepResult run_sweep(const SweepSpec &spec, const CacheMap &caches, const SweepOptions &options) {
    spec.validate();
    const auto keys = enumerate_cells(spec);

    // Combined falls back to the concatenation of the individual caches.
    CacheMap local;
    std::string combined_failure;
    const bool wants_combined = std::count(spec.datasets.begin(), spec.datasets.end(), DatasetId::Combined) > 0;
    if (wants_combined && !caches.count(DatasetId::Combined)) {
        std::vector<EmbeddingSet> parts;
        for (auto d : {DatasetId::LingSpam, DatasetId::SpamText, DatasetId::Enron, DatasetId::SpamAssassin})
            if (auto it = caches.find(d); it != caches.end()) parts.push_back(it->second);
        try {
            if (parts.empty()) throw CacheError("no per-dataset caches to combine");
            local.emplace(DatasetId::Combined, concat(parts));
        } catch (const Error &e) {
            combined_failure = e.what();
        }
    }
    auto cache_for = [&](DatasetId d) -> const EmbeddingSet * {
        if (auto it = caches.find(d); it != caches.end()) return &it->second;
        if (auto it = local.find(d); it != local.end()) return &it->second;
        return nullptr;
    };

    std::vector<CellResult> done;
    if (options.journal) done = read_journal(*options.journal);

    SweepResult result;
    result.cells.resize(keys.size());
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const auto hit = std::find_if(done.begin(), done.end(), [&](const CellResult &c) { return same_cell(c.key, keys[i]); });
        if (hit != done.end()) {
            result.cells[i] = *hit;
            result.cells[i].key = keys[i];
        } else {
            pending.push_back(i);
        }
    }

    std::ofstream journal;
    if (options.journal) {
        journal.open(*options.journal, std::ios::app);
        if (!journal) throw CacheError("cannot open sweep journal " + options.journal->string());
    }
    std::mutex journal_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < pending.size();) {
            const std::size_t i = pending[k];
            const auto &key = keys[i];
            CellResult r;
            if (const EmbeddingSet *cache = cache_for(key.dataset)) {
                r = run_cell(key, *cache, spec);
            } else {
                r.key = key;
                r.failure = key.dataset == DatasetId::Combined && !combined_failure.empty()
                                ? combined_failure
                                : "no embedding cache for " + std::string(to_string(key.dataset));
            }
            if (r.ok && options.journal) {
                std::lock_guard lock(journal_mutex);
                journal << journal_record(r).dump() << '\n';
                journal.flush();
            }
            result.cells[i] = std::move(r);
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(options.parallelism, static_cast<unsigned>(pending.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    result.best = select_best(spec, result.cells);
    return result;
}

std::vector<TableRow> table_rows(const SweepResult &result) {
    std::vector<TableRow> rows;
    for (const auto &[dataset, index] : result.best) {
        const auto &c = result.cells.at(index);
        rows.push_back({std::string(to_string(dataset)), c.key.batch_size, format_ratios(c.key.split), c.metrics.f1,
                        c.metrics.accuracy, c.metrics.precision, c.metrics.recall});
    }
    return rows;
}

void render_tables(const SweepResult &result, const fs::path &out_dir) {
    fs::create_directories(out_dir);
    const auto rows = table_rows(result);

    std::ofstream t2(out_dir / "table2.csv"), t3(out_dir / "table3.csv");
    t2 << "Dataset,Minibatch size,Distribution,Highest f1-score,Accuracy\n";
    t3 << "Dataset,Minibatch size,Distribution,Precision,Recall\n";
    for (const auto &r : rows) {
        t2 << r.dataset << ',' << r.batch_size << ',' << r.distribution << ',' << exact(r.f1) << ','
           << exact(r.accuracy) << '\n';
        t3 << r.dataset << ',' << r.batch_size << ',' << r.distribution << ',' << exact(r.precision) << ','
           << exact(r.recall) << '\n';
    }

    auto text_table = [&](const fs::path &file, const char *title, const char *c1, const char *c2, bool second) {
        std::ofstream out(file);
        out << title << "\n\n";
        char line[160];
        std::snprintf(line, sizeof line, "%-14s %-14s %-13s %-16s %-10s\n", "Dataset", "Minibatch size",
                      "Distribution", c1, c2);
        out << line;
        for (const auto &r : rows) {
            const double a = second ? r.precision : r.f1;
            const double b = second ? r.recall : r.accuracy;
            std::snprintf(line, sizeof line, "%-14s %-14zu %-13s %-16s %-10s\n", r.dataset.c_str(), r.batch_size,
                          r.distribution.c_str(), fixed4(a).c_str(), fixed4(b).c_str());
            out << line;
        }
    };
    text_table(out_dir / "table2.txt", "F1 and accuracy values for the different datasets", "Highest f1-score",
               "Accuracy", false);
    text_table(out_dir / "table3.txt", "Corresponding precision and recall values", "Precision", "Recall", true);

    std::ofstream cells(out_dir / "cells.csv");
    cells << "dataset,batch,split,seed,status,accuracy,precision,recall,f1,tn,fp,fn,tp,best_epoch,seconds,failure\n";
    for (const auto &c : result.cells) {
        std::string failure = c.failure;
        std::replace(failure.begin(), failure.end(), ',', ';');
        cells << to_string(c.key.dataset) << ',' << c.key.batch_size << ',' << format_ratios(c.key.split) << ','
              << c.key.seed << ',' << (c.ok ? "ok" : "failed") << ',' << exact(c.metrics.accuracy) << ','
              << exact(c.metrics.precision) << ',' << exact(c.metrics.recall) << ',' << exact(c.metrics.f1) << ','
              << c.metrics.cm.tn << ',' << c.metrics.cm.fp << ',' << c.metrics.cm.fn << ',' << c.metrics.cm.tp << ','
              << c.best_epoch << ',' << fixed4(c.seconds) << ',' << failure << '\n';
    }
}

std::vector<TableRow> read_tables(const fs::path &out_dir) {
    std::ifstream t2(out_dir / "table2.csv"), t3(out_dir / "table3.csv");
    if (!t2 || !t3) throw InputError("missing table2.csv/table3.csv in " + out_dir.string());
    std::string a, b;
    std::getline(t2, a);
    std::getline(t3, b);
    std::vector<TableRow> rows;
    while (std::getline(t2, a) && std::getline(t3, b)) {
        const auto f2 = split_line(a), f3 = split_line(b);
        if (f2.size() != 5 || f3.size() != 5 || f2[0] != f3[0]) throw InputError("malformed table row: " + a);
        rows.push_back({f2[0], std::stoul(f2[1]), f2[2], std::stod(f2[3]), std::stod(f2[4]), std::stod(f3[3]),
                        std::stod(f3[4])});
    }
    return rows;
}

} // namespace spamdet
