#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "spamdet/corpus.hpp"
#include "spamdet/embedding_cache.hpp"
#include "spamdet/head.hpp"
#include "spamdet/metrics.hpp"
#include "spamdet/tensor.hpp"

namespace spamdet {

struct TrainConfig {
    double lr = 3e-4;
    int epochs = 200;
    std::size_t batch_size = 128;
    double clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    SplitRatios split;
    HeadOptions head;

    void validate() const;
};

void to_json(nlohmann::ordered_json &j, const TrainConfig &c);

// Features (one row per sample) with their labels, at float64.
struct LabeledFeatures {
    MatrixD x;
    std::vector<int> y;

    std::size_t size() const { return y.size(); }
    static LabeledFeatures from(const EmbeddingSet &set);
    LabeledFeatures rows(std::span<const std::size_t> idx) const;
};

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::uint64_t t = 0;

    static AdamState zeros_like(const HeadParams &params);
};

// Global L2 norm of every trainable gradient concatenated.
double global_norm(const HeadParams &grads);

// Rescales all gradients by max_norm / norm when the global norm exceeds
// max_norm. Returns the pre-clip norm. Throws TrainingError on NaN/Inf.
double clip_gradients(HeadParams &grads, double max_norm);

// One bias-corrected Adam update of every trainable field.
void adam_step(HeadParams &params, const HeadParams &grads, AdamState &state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;     // mean of train-mode batch losses
    double train_accuracy = 0; // eval-mode over the whole train set
    double valid_loss = 0;
    double valid_accuracy = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1; // first argmin of valid_loss
};

struct FitCallbacks {
    std::function<void(const EpochRecord &)> on_epoch;
    std::function<void(const HeadParams &, const EpochRecord &)> on_improvement;
};

struct FitResult {
    HeadParams params; // checkpoint at the best validation loss
    HeadParams final_params;
    TrainHistory history;
};

FitResult fit(const LabeledFeatures &train, const LabeledFeatures &valid, const TrainConfig &config,
              const FitCallbacks &callbacks = {});

// Eval-mode log-probabilities, batched to bound memory.
MatrixD predict_log_probs(const HeadParams &params, const MatrixD &x, const HeadOptions &options);

MetricsReport evaluate(const HeadParams &params, const LabeledFeatures &test, const HeadOptions &options,
                       std::vector<int> *predictions = nullptr);

} // namespace spamdet
