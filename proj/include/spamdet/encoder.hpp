#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spamdet/checkpoint.hpp"
#include "spamdet/tensor.hpp"
#include "spamdet/tokenizer.hpp"

namespace spamdet {

struct EncoderConfig {
    int num_layers = 12;
    int num_heads = 12;
    int d_model = 768;
    int d_ff = 3072;
    int vocab_size = 30522;
    int max_position = 512;
    double layer_norm_eps = 1e-12;

    static EncoderConfig base() { return {}; }

    // Throws ConfigError on non-positive dims or d_model % num_heads != 0.
    void validate() const;
    int head_dim() const { return d_model / num_heads; }

    bool operator==(const EncoderConfig &) const = default;
};

void to_json(nlohmann::ordered_json &j, const EncoderConfig &c);
void from_json(const nlohmann::ordered_json &j, EncoderConfig &c);

// Tensor names and shapes in checkpoint order. Linear weights are [in, out].
std::vector<TensorSpec> encoder_schema(const EncoderConfig &config);
std::uint64_t parameter_count(const EncoderConfig &config);

// Frozen transformer parameters, keyed by schema name.
class EncoderWeights {
  public:
    EncoderWeights(EncoderConfig config, std::vector<Tensor> tensors);

    const EncoderConfig &config() const { return config_; }
    const Tensor &at(const std::string &name) const;
    const std::vector<Tensor> &tensors() const { return tensors_; }

    bool operator==(const EncoderWeights &) const = default;

  private:
    EncoderConfig config_;
    std::vector<Tensor> tensors_;
    std::map<std::string, std::size_t> index_;
};

// Weight matrices and embeddings ~ N(0, 0.02); biases 0; layer-norm scale 1.
EncoderWeights init_random(const EncoderConfig &config, std::uint64_t seed);

void save_weights(const EncoderWeights &weights, const std::filesystem::path &dir);
EncoderWeights load_weights(const std::filesystem::path &dir, const EncoderConfig &config);
// Reads only the config stored in a checkpoint manifest.
EncoderConfig read_encoder_config(const std::filesystem::path &dir);

// Scaled dot-product attention for one head. Rows of Q, K, V are positions;
// key positions with mask 0 get an additive -1e9 before the row softmax.
// If `probs` is non-null it receives the attention weight matrix.
MatrixF attention(const MatrixF &q, const MatrixF &k, const MatrixF &v, std::span<const std::uint8_t> mask,
                  MatrixF *probs = nullptr);

float gelu(float x);

struct EncodeOptions {
    // Pass the position-0 state through the pooler (linear + tanh).
    bool pooled = true;
};

// Forward-only encoder producing the [CLS] feature vector.
class Encoder {
  public:
    explicit Encoder(const EncoderWeights &weights, EncodeOptions options = {});

    const EncoderConfig &config() const { return config_; }
    const EncodeOptions &options() const { return options_; }
    int dim() const { return config_.d_model; }

    // Final hidden states, one row per position.
    MatrixF hidden_states(const TokenizedSample &sample) const;
    std::vector<float> encode_cls(const TokenizedSample &sample) const;

    // Identifies weights and options; stored in embedding cache headers.
    std::uint64_t fingerprint() const { return fingerprint_; }

  private:
    struct Linear {
        MatrixF weight;
        std::vector<float> bias;
        MatrixF apply(const MatrixF &x) const;
    };
    struct Norm {
        std::vector<float> gamma, beta;
    };
    struct Layer {
        Linear q, k, v, out;
        Norm attn_norm;
        Linear ffn_in, ffn_out;
        Norm ffn_norm;
    };

    void layer_norm(MatrixF &x, const Norm &norm) const;

    EncoderConfig config_;
    EncodeOptions options_;
    MatrixF word_, position_;
    std::vector<float> segment_;
    Norm embed_norm_;
    std::vector<Layer> layers_;
    Linear pooler_;
    std::uint64_t fingerprint_ = 0;
};

} // namespace spamdet
