#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace spamdet {

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> values;

    std::size_t numel() const;
    bool operator==(const Tensor &) const = default;
};

struct TensorSpec {
    std::string name;
    std::vector<std::size_t> shape;

    std::size_t numel() const;
};

// Neutral checkpoint: <dir>/manifest.json plus <dir>/weights.bin holding
// row-major little-endian float32 payloads at the manifest offsets.
//
// manifest.json = {format_version: 1, dtype: "f32", byte_order: "little",
//                  tensors: [{name, shape, offset}], ...extra}
struct Checkpoint {
    nlohmann::ordered_json manifest;
    std::vector<Tensor> tensors;

    const Tensor *find(const std::string &name) const;
};

inline constexpr int kCheckpointFormatVersion = 1;

// `extra` members are copied into the manifest after the fixed header fields.
void write_checkpoint(const std::filesystem::path &dir, const std::vector<Tensor> &tensors,
                      const nlohmann::ordered_json &extra = nlohmann::ordered_json::object());

// Reads the manifest and every listed tensor. Throws LoadError naming the
// offending tensor on truncation, bad offsets, or non-finite values.
Checkpoint read_checkpoint(const std::filesystem::path &dir);

// Checks that `checkpoint` contains exactly the tensors in `schema` with the
// listed shapes; returns them in schema order.
std::vector<Tensor> match_schema(const Checkpoint &checkpoint, const std::vector<TensorSpec> &schema);

} // namespace spamdet
