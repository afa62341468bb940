#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "spamdet/rng.hpp"
#include "spamdet/tensor.hpp"

namespace spamdet {

inline constexpr std::size_t kHidden1 = 175;
inline constexpr std::size_t kHidden2 = 100;
inline constexpr std::size_t kNumClasses = 2;

// Trainable and running-statistic parameters of the classifier head:
//   d_model -> 175 -> 100 -> 2, weights stored [in, out].
struct HeadParams {
    MatrixD w1;
    std::vector<double> b1, gamma1, beta1, running_mean1, running_var1;
    MatrixD w2;
    std::vector<double> b2, gamma2, beta2, running_mean2, running_var2;
    MatrixD w3;
    std::vector<double> b3;

    // Shapes for input width d_model; weights zero, gamma 1, running var 1.
    static HeadParams zeros(std::size_t d_model);

    std::size_t input_dim() const { return w1.rows(); }

    static constexpr std::array<std::string_view, 10> kTrainableNames = {
        "w1", "b1", "bn1.gamma", "bn1.beta", "w2", "b2", "bn2.gamma", "bn2.beta", "w3", "b3"};
    std::array<std::span<double>, 10> trainable();
    std::array<std::span<const double>, 10> trainable() const;

    bool operator==(const HeadParams &) const = default;
};

// Xavier/Glorot uniform weights, a = sqrt(6 / (fan_in + fan_out)); biases 0.
HeadParams init_xavier(std::size_t d_model, std::uint64_t seed);

enum class Mode { Train, Eval };

// Where the ReLU sits relative to batch norm inside each hidden block.
//   NormThenRelu: Linear -> Dropout -> BatchNorm -> ReLU -> Dropout (default)
//   ReluThenNorm: Linear -> Dropout -> ReLU -> BatchNorm -> Dropout
enum class BlockOrder { NormThenRelu, ReluThenNorm };

struct HeadOptions {
    double dropout_p = 0.1;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    BlockOrder order = BlockOrder::NormThenRelu;

    void validate() const;
};

void to_json(nlohmann::ordered_json &j, const HeadOptions &o);
void from_json(const nlohmann::ordered_json &j, HeadOptions &o);

// Mode plus the dropout stream. Eval mode never draws from the stream.
class HeadState {
  public:
    HeadState(HeadOptions options, std::uint64_t seed)
        : options_(options), rng_(Rng::substream(seed, "dropout")) {}

    Mode mode = Mode::Train;
    const HeadOptions &options() const { return options_; }
    Rng &rng() { return rng_; }

  private:
    HeadOptions options_;
    Rng rng_;
};

std::vector<double> relu(std::span<const double> x);
std::vector<double> softmax(std::span<const double> x);
std::vector<double> log_softmax(std::span<const double> x);

// Inverted dropout: survivors scaled by 1/(1-p). In eval mode (or p == 0)
// returns the input and leaves `mask_out` empty. Otherwise `mask_out`
// receives the per-element multiplier (0 or 1/(1-p)).
MatrixD dropout(const MatrixD &x, double p, Mode mode, Rng &rng, MatrixD *mask_out = nullptr);

struct BatchNormCache {
    MatrixD xhat;
    std::vector<double> mean, var, inv_std; // var is the biased batch variance
};

// Train: batch statistics (biased variance), running stats updated with
// momentum using the unbiased variance; batch must have >= 2 rows.
// Eval: running statistics; nothing is updated.
MatrixD batchnorm_forward(const MatrixD &x, std::span<const double> gamma, std::span<const double> beta,
                          std::span<double> running_mean, std::span<double> running_var, Mode mode,
                          double momentum, double eps, BatchNormCache *cache = nullptr);

struct DropoutMasks {
    std::array<MatrixD, 4> masks; // empty matrix: identity
};

// Intermediates kept for backward.
struct HeadCache {
    struct Block {
        MatrixD input, drop_in_mask, relu_in, drop_out_mask;
        BatchNormCache bn;
    };
    bool valid = false;
    Mode mode = Mode::Eval;
    std::array<Block, 2> blocks;
    MatrixD hidden; // input to the final linear layer
    MatrixD log_probs;
};

// Pure forward pass given explicit dropout masks (ignored in eval mode).
// Train mode normalizes with batch statistics but does not touch the
// running statistics; use update_running_stats for that.
MatrixD forward_with_masks(const MatrixD &x, const HeadParams &params, Mode mode, const HeadOptions &options,
                           const DropoutMasks *masks, HeadCache *cache = nullptr);

DropoutMasks draw_masks(std::size_t batch, HeadState &state);
void update_running_stats(HeadParams &params, const HeadCache &cache, double momentum);

// Full forward: in train mode draws fresh masks from the state and updates
// the running statistics. Returns batch x 2 log-probabilities.
MatrixD forward(const MatrixD &x, HeadParams &params, HeadState &state, HeadCache *cache = nullptr);

// Mean negative log-likelihood of the true classes.
double nll_loss(const MatrixD &log_probs, std::span<const int> labels);

// Gradients of nll_loss with respect to every trainable field, reusing the
// masks and statistics recorded in `cache`. Running stats in the result are
// zero. Throws StateError if `cache` holds no completed forward pass.
HeadParams backward(const HeadCache &cache, std::span<const int> labels, const HeadParams &params,
                    const HeadOptions &options);

// Argmax of each row; ties go to class 0.
std::vector<int> predict_classes(const MatrixD &log_probs);

// Head checkpoint in the neutral tensor format plus head options and
// free-form run metadata.
void save_head(const std::filesystem::path &dir, const HeadParams &params, const HeadOptions &options,
               const nlohmann::ordered_json &metadata);

struct HeadCheckpoint {
    HeadParams params;
    HeadOptions options;
    nlohmann::ordered_json metadata;
};

HeadCheckpoint load_head(const std::filesystem::path &dir);

} // namespace spamdet
