#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spamdet/corpus.hpp"
#include "spamdet/embedding_cache.hpp"
#include "spamdet/metrics.hpp"
#include "spamdet/trainer.hpp"

namespace spamdet {

enum class DatasetId { LingSpam, SpamText, Enron, SpamAssassin, Combined };

std::string_view to_string(DatasetId d);
std::optional<DatasetId> parse_dataset(std::string_view name);

struct SweepSpec {
    std::vector<DatasetId> datasets = {DatasetId::LingSpam, DatasetId::SpamText, DatasetId::Enron,
                                       DatasetId::SpamAssassin, DatasetId::Combined};
    std::vector<std::size_t> batch_sizes = {16, 32, 64, 128, 256, 512, 1024};
    std::vector<SplitRatios> splits = {{0.6, 0.2, 0.2}, {0.7, 0.15, 0.15}, {0.8, 0.1, 0.1}};
    std::vector<std::uint64_t> seeds = {0};
    int epochs = 200;
    std::size_t seq_len = 64;
    // lr, clipping, Adam and head options; batch, seed, split, epochs are per cell.
    TrainConfig base;

    void validate() const;
    std::size_t cell_count() const { return datasets.size() * batch_sizes.size() * splits.size() * seeds.size(); }
};

struct CellKey {
    DatasetId dataset = DatasetId::Combined;
    std::size_t batch_size = 0;
    SplitRatios split;
    std::uint64_t seed = 0;

    bool operator==(const CellKey &) const = default;
};

struct CellResult {
    CellKey key;
    bool ok = false;
    std::string failure;
    MetricsReport metrics;
    int best_epoch = -1;
    double seconds = 0;
};

struct SweepResult {
    std::vector<CellResult> cells; // spec order: dataset, batch, split, seed
    // Index into `cells` of each dataset's best successful cell by F1.
    std::map<DatasetId, std::size_t> best;
};

using CacheMap = std::map<DatasetId, EmbeddingSet>;

struct SweepOptions {
    unsigned parallelism = 1;
    std::optional<std::filesystem::path> journal; // JSON-lines; enables resume
};

// Cells in spec order.
std::vector<CellKey> enumerate_cells(const SweepSpec &spec);

CellResult run_cell(const CellKey &key, const EmbeddingSet &cache, const SweepSpec &spec);

// Runs every cell not already in the journal. Missing or mismatched caches
// mark cells failed; the sweep continues. A Combined cache, if absent, is the
// concatenation of the four per-dataset caches.
SweepResult run_sweep(const SweepSpec &spec, const CacheMap &caches, const SweepOptions &options = {});

// Best-row choice: highest F1, then smaller batch, then earlier split, then earlier seed.
std::map<DatasetId, std::size_t> select_best(const SweepSpec &spec, const std::vector<CellResult> &cells);

struct TableRow {
    std::string dataset;
    std::size_t batch_size = 0;
    std::string distribution;
    double f1 = 0, accuracy = 0, precision = 0, recall = 0;

    bool operator==(const TableRow &) const = default;
};

std::vector<TableRow> table_rows(const SweepResult &result);

// Writes table2.csv, table3.csv, table2.txt, table3.txt and cells.csv.
void render_tables(const SweepResult &result, const std::filesystem::path &out_dir);

// Reads table2.csv + table3.csv back into rows.
std::vector<TableRow> read_tables(const std::filesystem::path &out_dir);

} // namespace spamdet
