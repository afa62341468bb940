#include "spamdet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spamdet/error.hpp"

namespace spamdet {

namespace {

constexpr std::size_t kEvalBatch = 4096;

double accuracy_of(const MatrixD &log_probs, std::span<const int> labels) {
    const auto pred = predict_classes(log_probs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("learning rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 2) throw ConfigError("batch size must be at least 2 (batch norm)");
    if (!(clip_norm > 0)) throw ConfigError("clip norm must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0))
        throw ConfigError("invalid Adam hyperparameters");
    head.validate();
}

void to_json(nlohmann::ordered_json &j, const TrainConfig &c) {
    j = nlohmann::ordered_json{{"lr", c.lr},
                               {"epochs", c.epochs},
                               {"batch_size", c.batch_size},
                               {"clip_norm", c.clip_norm},
                               {"beta1", c.beta1},
                               {"beta2", c.beta2},
                               {"adam_eps", c.adam_eps},
                               {"seed", c.seed},
                               {"split", format_ratios(c.split)},
                               {"head", c.head}};
}

LabeledFeatures LabeledFeatures::from(const EmbeddingSet &set) {
    LabeledFeatures out;
    out.x = MatrixD(set.features.rows(), set.features.cols(),
                    std::vector<double>(set.features.data().begin(), set.features.data().end()));
    out.y = set.labels;
    return out;
}

LabeledFeatures LabeledFeatures::rows(std::span<const std::size_t> idx) const {
    LabeledFeatures out;
    out.x = MatrixD(idx.size(), x.cols());
    out.y.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(x.row(idx[i]).begin(), x.cols(), out.x.row(i).begin());
        out.y.push_back(y.at(idx[i]));
    }
    return out;
}

AdamState AdamState::zeros_like(const HeadParams &params) {
    AdamState s;
    for (auto p : params.trainable()) {
        s.m.emplace_back(p.size(), 0.0);
        s.v.emplace_back(p.size(), 0.0);
    }
    return s;
}

double global_norm(const HeadParams &grads) {
    double sq = 0.0;
    for (auto g : grads.trainable())
        for (double v : g) sq += v * v;
    return std::sqrt(sq);
}

double clip_gradients(HeadParams &grads, double max_norm) {
    const double norm = global_norm(grads);
    if (!std::isfinite(norm)) throw TrainingError("non-finite gradient (global norm " + std::to_string(norm) + ")");
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto g : grads.trainable())
            for (double &v : g) v *= scale;
    }
    return norm;
}

void adam_step(HeadParams &params, const HeadParams &grads, AdamState &state, double lr, double beta1, double beta2,
               double eps) {
    auto p = params.trainable();
    const auto g = grads.trainable();
    if (state.m.size() != p.size()) state = AdamState::zeros_like(params);
    ++state.t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (g[k].size() != p[k].size() || state.m[k].size() != p[k].size())
            throw ShapeError("adam_step: gradient shape differs for " + std::string(HeadParams::kTrainableNames[k]));
        auto &m = state.m[k];
        auto &v = state.v[k];
        for (std::size_t i = 0; i < p[k].size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[k][i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[k][i] * g[k][i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[k][i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

MatrixD predict_log_probs(const HeadParams &params, const MatrixD &x, const HeadOptions &options) {
    MatrixD out(x.rows(), kNumClasses);
    for (std::size_t begin = 0; begin < x.rows(); begin += kEvalBatch) {
        const std::size_t end = std::min(x.rows(), begin + kEvalBatch);
        MatrixD chunk(end - begin, x.cols(),
                      std::vector<double>(x.data().begin() + static_cast<std::ptrdiff_t>(begin * x.cols()),
                                          x.data().begin() + static_cast<std::ptrdiff_t>(end * x.cols())));
        const MatrixD lp = forward_with_masks(chunk, params, Mode::Eval, options, nullptr);
        std::copy(lp.data().begin(), lp.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(begin * kNumClasses));
    }
    return out;
}

FitResult fit(const LabeledFeatures &train, const LabeledFeatures &valid, const TrainConfig &config,
              const FitCallbacks &callbacks) {
    config.validate();
    if (train.size() == 0 || valid.size() == 0) throw ConfigError("fit needs non-empty train and valid sets");
    if (config.batch_size > train.size())
        throw ConfigError("batch size " + std::to_string(config.batch_size) + " exceeds train size " +
                          std::to_string(train.size()));
    if (train.x.cols() != valid.x.cols()) throw ShapeError("train and valid feature widths differ");

    HeadParams params = init_xavier(train.x.cols(), config.seed);
    HeadState state(config.head, config.seed);
    Rng shuffle = Rng::substream(config.seed, "shuffle");
    AdamState adam = AdamState::zeros_like(params);

    FitResult result;
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(train.size());

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.index(i + 1)]);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        state.mode = Mode::Train;
        for (std::size_t begin = 0, b = 0; begin < order.size(); begin += config.batch_size, ++b) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            if (end - begin < 2) continue;
            const auto batch = train.rows(std::span(order).subspan(begin, end - begin));
            HeadCache cache;
            const MatrixD lp = forward(batch.x, params, state, &cache);
            const double loss = nll_loss(lp, batch.y);
            if (!std::isfinite(loss))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(b));
            HeadParams grads = backward(cache, batch.y, params, config.head);
            try {
                clip_gradients(grads, config.clip_norm);
            } catch (const TrainingError &e) {
                throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(b));
            }
            adam_step(params, grads, adam, config.lr, config.beta1, config.beta2, config.adam_eps);
            loss_sum += loss;
            ++batches;
        }
        state.mode = Mode::Eval;

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1));
        rec.train_accuracy = accuracy_of(predict_log_probs(params, train.x, config.head), train.y);
        const MatrixD valid_lp = predict_log_probs(params, valid.x, config.head);
        rec.valid_loss = nll_loss(valid_lp, valid.y);
        rec.valid_accuracy = accuracy_of(valid_lp, valid.y);
        if (!std::isfinite(rec.valid_loss))
            throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
        result.history.epochs.push_back(rec);

        if (rec.valid_loss < best_loss) {
            best_loss = rec.valid_loss;
            result.history.best_epoch = epoch;
            result.params = params;
            if (callbacks.on_improvement) callbacks.on_improvement(params, rec);
        }
        if (callbacks.on_epoch) callbacks.on_epoch(rec);
    }
    result.final_params = std::move(params);
    return result;
}

MetricsReport evaluate(const HeadParams &params, const LabeledFeatures &test, const HeadOptions &options,
                       std::vector<int> *predictions) {
    if (test.size() == 0) throw InputError("evaluate needs a non-empty test set");
    const auto pred = predict_classes(predict_log_probs(params, test.x, options));
    const MetricsReport r = report(confusion(pred, test.y));
    if (predictions) *predictions = pred;
    return r;
}

} // namespace spamdet
