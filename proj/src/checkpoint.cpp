#include "spamdet/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "spamdet/error.hpp"

namespace fs = std::filesystem;

namespace spamdet {

namespace {

std::size_t product(const std::vector<std::size_t> &shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t> &shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
}

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
}

} // namespace

std::size_t Tensor::numel() const { return product(shape); }
std::size_t TensorSpec::numel() const { return product(shape); }

const Tensor *Checkpoint::find(const std::string &name) const {
    for (const auto &t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

void write_checkpoint(const fs::path &dir, const std::vector<Tensor> &tensors, const nlohmann::ordered_json &extra) {
    fs::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format_version"] = kCheckpointFormatVersion;
    manifest["dtype"] = "f32";
    manifest["byte_order"] = "little";
    for (const auto &[key, value] : extra.items()) manifest[key] = value;

    std::ofstream bin(dir / "weights.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw LoadError("cannot write " + (dir / "weights.bin").string());
    auto list = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto &t : tensors) {
        if (t.values.size() != t.numel())
            throw ShapeError("tensor " + t.name + " has " + std::to_string(t.values.size()) +
                             " values for shape " + shape_string(t.shape));
        nlohmann::ordered_json entry;
        entry["name"] = t.name;
        entry["shape"] = t.shape;
        entry["offset"] = offset;
        list.push_back(std::move(entry));
        for (float f : t.values) {
            const std::uint32_t le = to_little(std::bit_cast<std::uint32_t>(f));
            bin.write(reinterpret_cast<const char *>(&le), sizeof le);
        }
        offset += t.values.size() * sizeof(float);
    }
    manifest["tensors"] = std::move(list);
    if (!bin) throw LoadError("write failed: " + (dir / "weights.bin").string());

    std::ofstream m(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    m << manifest.dump(2) << '\n';
    if (!m) throw LoadError("write failed: " + (dir / "manifest.json").string());
}

Checkpoint read_checkpoint(const fs::path &dir) {
    Checkpoint ck;
    {
        std::ifstream m(dir / "manifest.json", std::ios::binary);
        if (!m) throw LoadError("missing manifest.json in " + dir.string());
        try {
            ck.manifest = nlohmann::ordered_json::parse(m);
        } catch (const nlohmann::json::exception &e) {
            throw LoadError("malformed manifest.json in " + dir.string() + ": " + e.what());
        }
    }
    const auto &man = ck.manifest;
    if (man.value("format_version", 0) != kCheckpointFormatVersion || man.value("dtype", "") != "f32" ||
        man.value("byte_order", "") != "little")
        throw LoadError("unsupported checkpoint header in " + dir.string());
    if (!man.contains("tensors") || !man["tensors"].is_array())
        throw LoadError("manifest in " + dir.string() + " has no tensor list");

    std::ifstream bin(dir / "weights.bin", std::ios::binary | std::ios::ate);
    if (!bin) throw LoadError("missing weights.bin in " + dir.string());
    const auto file_size = static_cast<std::uint64_t>(bin.tellg());

    for (const auto &entry : man["tensors"]) {
        Tensor t;
        try {
            t.name = entry.at("name").get<std::string>();
            t.shape = entry.at("shape").get<std::vector<std::size_t>>();
        } catch (const nlohmann::json::exception &e) {
            throw LoadError(std::string("malformed tensor entry: ") + e.what());
        }
        const auto offset = entry.at("offset").get<std::uint64_t>();
        const std::uint64_t bytes = t.numel() * sizeof(float);
        if (offset + bytes > file_size)
            throw LoadError("tensor " + t.name + " extends past the end of weights.bin");
        std::vector<std::uint32_t> raw(t.numel());
        bin.seekg(static_cast<std::streamoff>(offset));
        bin.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(bytes));
        if (!bin) throw LoadError("short read for tensor " + t.name);
        t.values.resize(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) {
            t.values[i] = std::bit_cast<float>(to_little(raw[i]));
            if (!std::isfinite(t.values[i])) throw LoadError("tensor " + t.name + " contains a non-finite value");
        }
        ck.tensors.push_back(std::move(t));
    }
    return ck;
}

std::vector<Tensor> match_schema(const Checkpoint &checkpoint, const std::vector<TensorSpec> &schema) {
    std::vector<Tensor> out;
    out.reserve(schema.size());
    for (const auto &spec : schema) {
        const Tensor *t = checkpoint.find(spec.name);
        if (!t) throw LoadError("checkpoint is missing tensor " + spec.name);
        if (t->shape != spec.shape)
            throw LoadError("tensor " + spec.name + " has shape " + shape_string(t->shape) + ", expected " +
                            shape_string(spec.shape));
        out.push_back(*t);
    }
    return out;
}

} // namespace spamdet
