#include "spamdet/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "spamdet/error.hpp"
#include "spamdet/hash.hpp"
#include "spamdet/rng.hpp"

namespace spamdet {

namespace {

constexpr float kMaskedScore = -1e9f;
constexpr double kInitStddev = 0.02;

bool ends_with(const std::string &s, std::string_view suffix) { return s.ends_with(suffix); }

MatrixF as_matrix(const Tensor &t) {
    if (t.shape.size() != 2) throw ShapeError("tensor " + t.name + " is not a matrix");
    return MatrixF(t.shape[0], t.shape[1], t.values);
}

} // namespace

void EncoderConfig::validate() const {
    if (num_layers <= 0 || num_heads <= 0 || d_model <= 0 || d_ff <= 0 || vocab_size <= 0 || max_position <= 0)
        throw ConfigError("encoder dimensions must be positive");
    if (d_model % num_heads != 0)
        throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by num_heads " +
                          std::to_string(num_heads));
    if (!(layer_norm_eps > 0)) throw ConfigError("layer_norm_eps must be positive");
}

void to_json(nlohmann::ordered_json &j, const EncoderConfig &c) {
    j = nlohmann::ordered_json{{"num_layers", c.num_layers}, {"num_heads", c.num_heads},
                               {"d_model", c.d_model},       {"d_ff", c.d_ff},
                               {"vocab_size", c.vocab_size}, {"max_position", c.max_position},
                               {"layer_norm_eps", c.layer_norm_eps}};
}

void from_json(const nlohmann::ordered_json &j, EncoderConfig &c) {
    j.at("num_layers").get_to(c.num_layers);
    j.at("num_heads").get_to(c.num_heads);
    j.at("d_model").get_to(c.d_model);
    j.at("d_ff").get_to(c.d_ff);
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("max_position").get_to(c.max_position);
    j.at("layer_norm_eps").get_to(c.layer_norm_eps);
}

std::vector<TensorSpec> encoder_schema(const EncoderConfig &config) {
    config.validate();
    const auto d = static_cast<std::size_t>(config.d_model);
    const auto ff = static_cast<std::size_t>(config.d_ff);
    std::vector<TensorSpec> s = {
        {"embeddings.word", {static_cast<std::size_t>(config.vocab_size), d}},
        {"embeddings.position", {static_cast<std::size_t>(config.max_position), d}},
        {"embeddings.segment", {d}},
        {"embeddings.ln.gamma", {d}},
        {"embeddings.ln.beta", {d}},
    };
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        for (const char *proj : {"q", "k", "v", "out"}) {
            s.push_back({p + "attn." + proj + ".weight", {d, d}});
            s.push_back({p + "attn." + proj + ".bias", {d}});
        }
        s.push_back({p + "attn.ln.gamma", {d}});
        s.push_back({p + "attn.ln.beta", {d}});
        s.push_back({p + "ffn.in.weight", {d, ff}});
        s.push_back({p + "ffn.in.bias", {ff}});
        s.push_back({p + "ffn.out.weight", {ff, d}});
        s.push_back({p + "ffn.out.bias", {d}});
        s.push_back({p + "ffn.ln.gamma", {d}});
        s.push_back({p + "ffn.ln.beta", {d}});
    }
    s.push_back({"pooler.weight", {d, d}});
    s.push_back({"pooler.bias", {d}});
    return s;
}

std::uint64_t parameter_count(const EncoderConfig &config) {
    std::uint64_t n = 0;
    for (const auto &spec : encoder_schema(config)) n += spec.numel();
    return n;
}

EncoderWeights::EncoderWeights(EncoderConfig config, std::vector<Tensor> tensors)
    : config_(config), tensors_(std::move(tensors)) {
    const auto schema = encoder_schema(config_);
    if (schema.size() != tensors_.size())
        throw LoadError("expected " + std::to_string(schema.size()) + " encoder tensors, got " +
                        std::to_string(tensors_.size()));
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto &t = tensors_[i];
        if (t.name != schema[i].name || t.shape != schema[i].shape || t.values.size() != t.numel())
            throw LoadError("tensor " + schema[i].name + " is missing or misshapen");
        for (float f : t.values)
            if (!std::isfinite(f)) throw LoadError("tensor " + t.name + " contains a non-finite value");
        index_.emplace(t.name, i);
    }
}

const Tensor &EncoderWeights::at(const std::string &name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw LoadError("no encoder tensor named " + name);
    return tensors_[it->second];
}

EncoderWeights init_random(const EncoderConfig &config, std::uint64_t seed) {
    Rng rng = Rng::substream(seed, "encoder-init");
    std::vector<Tensor> tensors;
    for (const auto &spec : encoder_schema(config)) {
        Tensor t{spec.name, spec.shape, std::vector<float>(spec.numel())};
        if (ends_with(spec.name, ".gamma")) {
            std::fill(t.values.begin(), t.values.end(), 1.0f);
        } else if (!ends_with(spec.name, ".beta") && !ends_with(spec.name, ".bias")) {
            for (auto &v : t.values) v = static_cast<float>(rng.normal(0.0, kInitStddev));
        }
        tensors.push_back(std::move(t));
    }
    return EncoderWeights(config, std::move(tensors));
}

void save_weights(const EncoderWeights &weights, const std::filesystem::path &dir) {
    nlohmann::ordered_json extra;
    extra["config"] = weights.config();
    write_checkpoint(dir, weights.tensors(), extra);
}

EncoderConfig read_encoder_config(const std::filesystem::path &dir) {
    const Checkpoint ck = read_checkpoint(dir);
    if (!ck.manifest.contains("config")) throw LoadError("manifest in " + dir.string() + " has no encoder config");
    try {
        return ck.manifest["config"].get<EncoderConfig>();
    } catch (const nlohmann::json::exception &e) {
        throw LoadError(std::string("bad encoder config: ") + e.what());
    }
}

EncoderWeights load_weights(const std::filesystem::path &dir, const EncoderConfig &config) {
    const Checkpoint ck = read_checkpoint(dir);
    if (ck.manifest.contains("config")) {
        EncoderConfig stored;
        try {
            stored = ck.manifest["config"].get<EncoderConfig>();
        } catch (const nlohmann::json::exception &e) {
            throw LoadError(std::string("bad encoder config: ") + e.what());
        }
        if (!(stored == config)) throw LoadError("checkpoint config in " + dir.string() + " differs from requested");
    }
    return EncoderWeights(config, match_schema(ck, encoder_schema(config)));
}

float gelu(float x) { return 0.5f * x * (1.0f + std::erf(x * static_cast<float>(M_SQRT1_2))); }

MatrixF attention(const MatrixF &q, const MatrixF &k, const MatrixF &v, std::span<const std::uint8_t> mask,
                  MatrixF *probs) {
    if (q.rows() != k.rows() || k.rows() != v.rows() || q.cols() != k.cols() || mask.size() != k.rows())
        throw ShapeError("attention: Q/K/V rows, Q/K widths and mask length must agree");
    const float scale = 1.0f / std::sqrt(static_cast<float>(q.cols()));
    MatrixF scores = matmul_bt(q, k);
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        auto row = scores.row(i);
        float max = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] = row[j] * scale + (mask[j] ? 0.0f : kMaskedScore);
            max = std::max(max, row[j]);
        }
        float sum = 0.0f;
        for (auto &s : row) {
            s = std::exp(s - max);
            sum += s;
        }
        for (auto &s : row) s /= sum;
    }
    MatrixF out = matmul(scores, v);
    if (probs) *probs = std::move(scores);
    return out;
}

MatrixF Encoder::Linear::apply(const MatrixF &x) const {
    MatrixF y = matmul(x, weight);
    add_row_bias<float>(y, bias);
    return y;
}

Encoder::Encoder(const EncoderWeights &weights, EncodeOptions options)
    : config_(weights.config()), options_(options) {
    auto linear = [&](const std::string &prefix) {
        return Linear{as_matrix(weights.at(prefix + ".weight")), weights.at(prefix + ".bias").values};
    };
    auto norm = [&](const std::string &prefix) {
        return Norm{weights.at(prefix + ".gamma").values, weights.at(prefix + ".beta").values};
    };
    word_ = as_matrix(weights.at("embeddings.word"));
    position_ = as_matrix(weights.at("embeddings.position"));
    segment_ = weights.at("embeddings.segment").values;
    embed_norm_ = norm("embeddings.ln");
    for (int l = 0; l < config_.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        layers_.push_back(Layer{linear(p + "attn.q"), linear(p + "attn.k"), linear(p + "attn.v"),
                                linear(p + "attn.out"), norm(p + "attn.ln"), linear(p + "ffn.in"),
                                linear(p + "ffn.out"), norm(p + "ffn.ln")});
    }
    pooler_ = linear("pooler");

    Fnv1a64 h;
    for (const auto &t : weights.tensors()) {
        h.update(t.name);
        for (auto dim : t.shape) h.update_value(static_cast<std::uint64_t>(dim));
        h.update(std::as_bytes(std::span(t.values)));
    }
    h.update_value(static_cast<std::uint8_t>(options_.pooled));
    fingerprint_ = h.digest();
}

void Encoder::layer_norm(MatrixF &x, const Norm &norm) const {
    const auto eps = static_cast<float>(config_.layer_norm_eps);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto row = x.row(i);
        float mean = 0.0f;
        for (float v : row) mean += v;
        mean /= static_cast<float>(row.size());
        float var = 0.0f;
        for (float v : row) var += (v - mean) * (v - mean);
        var /= static_cast<float>(row.size());
        const float inv = 1.0f / std::sqrt(var + eps);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean) * inv * norm.gamma[j] + norm.beta[j];
    }
}

MatrixF Encoder::hidden_states(const TokenizedSample &sample) const {
    const std::size_t n = sample.ids.size();
    if (sample.mask.size() != n) throw ShapeError("token ids and mask lengths differ");
    if (n == 0 || n > static_cast<std::size_t>(config_.max_position))
        throw InputError("sequence length " + std::to_string(n) + " outside [1, " +
                         std::to_string(config_.max_position) + "]");
    const auto d = static_cast<std::size_t>(config_.d_model);

    MatrixF x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const int id = sample.ids[i];
        if (id < 0 || id >= config_.vocab_size)
            throw InputError("token id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(config_.vocab_size));
        auto out = x.row(i);
        auto w = word_.row(static_cast<std::size_t>(id));
        auto p = position_.row(i);
        for (std::size_t j = 0; j < d; ++j) out[j] = w[j] + p[j] + segment_[j];
    }
    layer_norm(x, embed_norm_);

    const auto heads = static_cast<std::size_t>(config_.num_heads);
    const auto hd = static_cast<std::size_t>(config_.head_dim());
    auto head_slice = [&](const MatrixF &m, std::size_t h) {
        MatrixF s(n, hd);
        for (std::size_t i = 0; i < n; ++i) std::copy_n(m.row(i).begin() + h * hd, hd, s.row(i).begin());
        return s;
    };

    for (const auto &layer : layers_) {
        const MatrixF q = layer.q.apply(x), k = layer.k.apply(x), v = layer.v.apply(x);
        MatrixF context(n, d);
        for (std::size_t h = 0; h < heads; ++h) {
            const MatrixF o = attention(head_slice(q, h), head_slice(k, h), head_slice(v, h), sample.mask);
            for (std::size_t i = 0; i < n; ++i) std::copy_n(o.row(i).begin(), hd, context.row(i).begin() + h * hd);
        }
        MatrixF attn = layer.out.apply(context);
        for (std::size_t i = 0; i < x.size(); ++i) attn.data()[i] += x.data()[i];
        layer_norm(attn, layer.attn_norm);
        x = std::move(attn);

        MatrixF inner = layer.ffn_in.apply(x);
        for (auto &val : inner.data()) val = gelu(val);
        MatrixF ffn = layer.ffn_out.apply(inner);
        for (std::size_t i = 0; i < x.size(); ++i) ffn.data()[i] += x.data()[i];
        layer_norm(ffn, layer.ffn_norm);
        x = std::move(ffn);
    }
    return x;
}

std::vector<float> Encoder::encode_cls(const TokenizedSample &sample) const {
    const MatrixF states = hidden_states(sample);
    MatrixF cls(1, states.cols(), std::vector<float>(states.row(0).begin(), states.row(0).end()));
    if (!options_.pooled) return cls.data();
    MatrixF pooled = pooler_.apply(cls);
    for (auto &v : pooled.data()) v = std::tanh(v);
    return pooled.data();
}

} // namespace spamdet
