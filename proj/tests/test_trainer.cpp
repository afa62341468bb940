#include <gtest/gtest.h>

#include <cmath>
#include <utility>

#include "spamdet/error.hpp"
#include "spamdet/trainer.hpp"
#include "test_util.hpp"

using namespace spamdet;

namespace {

HeadParams filled(std::size_t d, double value) {
    HeadParams p = HeadParams::zeros(d);
    for (auto field : p.trainable()) std::fill(field.begin(), field.end(), value);
    return p;
}

// Two Gaussian blobs centred at +-2 on the first axis.
LabeledFeatures blobs(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    LabeledFeatures f{MatrixD(n, d), std::vector<int>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        f.y[i] = static_cast<int>(i % 2);
        for (std::size_t j = 0; j < d; ++j) f.x(i, j) = rng.normal(0, 0.5);
        f.x(i, 0) += f.y[i] ? 2.0 : -2.0;
    }
    return f;
}

} // namespace

TEST(Clip, RescalesAboveThreshold) {
    HeadParams g = filled(1, 0.0);
    g.b3 = {3.0, 4.0};
    EXPECT_DOUBLE_EQ(global_norm(g), 5.0);
    EXPECT_DOUBLE_EQ(clip_gradients(g, 1.0), 5.0);
    EXPECT_NEAR(g.b3[0], 0.6, 1e-12);
    EXPECT_NEAR(g.b3[1], 0.8, 1e-12);

    HeadParams small = filled(1, 0.0);
    small.b3 = {0.3, 0.4};
    const HeadParams before = small;
    clip_gradients(small, 1.0);
    EXPECT_EQ(small, before);
}

TEST(Clip, PostClipNormBounded) {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        HeadParams g = filled(3, 0.0);
        const double scale = std::exp(rng.uniform(-5, 5));
        for (auto field : g.trainable())
            for (auto &v : field) v = rng.normal(0, scale);
        const double pre = global_norm(g);
        EXPECT_DOUBLE_EQ(clip_gradients(g, 1.0), pre);
        EXPECT_LE(global_norm(g), 1.0 + 1e-9);
        if (pre <= 1.0) EXPECT_NEAR(global_norm(g), pre, 1e-12);
    }
}

TEST(Clip, NonFiniteIsFatal) {
    HeadParams g = filled(1, 0.0);
    g.w2(3, 4) = std::nan("");
    EXPECT_THROW(clip_gradients(g, 1.0), TrainingError);
}

TEST(Adam, FirstStepIsLearningRateSized) {
    HeadParams p = filled(2, 0.5);
    Rng rng(2);
    HeadParams g = filled(2, 0.0);
    for (auto field : g.trainable())
        for (auto &v : field) v = rng.normal(0, 3);
    AdamState s = AdamState::zeros_like(p);
    const HeadParams before = p;
    adam_step(p, g, s, 1e-3);
    EXPECT_EQ(s.t, 1u);
    const auto a = before.trainable();
    const auto b = std::as_const(p).trainable();
    const auto gr = std::as_const(g).trainable();
    for (std::size_t f = 0; f < a.size(); ++f)
        for (std::size_t i = 0; i < a[f].size(); ++i) {
            const double step = a[f][i] - b[f][i];
            EXPECT_NEAR(std::abs(step), 1e-3, 1e-6);
            EXPECT_EQ(step > 0, gr[f][i] > 0);
        }
}

TEST(Adam, ZeroGradientLeavesParameters) {
    HeadParams p = filled(2, 0.25);
    AdamState s = AdamState::zeros_like(p);
    const HeadParams before = p;
    for (int i = 0; i < 5; ++i) adam_step(p, filled(2, 0.0), s, 1e-2);
    EXPECT_EQ(p, before);
}

TEST(Adam, MinimizesQuadratic) {
    HeadParams p = filled(1, 1.0);
    AdamState s = AdamState::zeros_like(p);
    for (int step = 0; step < 200; ++step) {
        HeadParams g = p;
        for (auto field : g.trainable())
            for (auto &v : field) v *= 2.0;
        adam_step(p, g, s, 0.1);
    }
    for (auto field : p.trainable())
        for (double v : field) EXPECT_LT(std::abs(v), 0.05);
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.lr = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.batch_size = 1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.epochs = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Fit, SeparablePointsReachPerfectAccuracy) {
    const auto train = blobs(32, 4, 3);
    TrainConfig c;
    c.batch_size = 8;
    c.epochs = 200;
    const auto r = fit(train, train, c);
    ASSERT_EQ(r.history.epochs.size(), 200u);
    EXPECT_DOUBLE_EQ(r.history.epochs.back().train_accuracy, 1.0);
    EXPECT_DOUBLE_EQ(evaluate(r.final_params, train, c.head).accuracy, 1.0);
    EXPECT_LT(r.history.epochs.back().train_loss, r.history.epochs.front().train_loss);
}

TEST(Fit, DeterministicForSeed) {
    const auto train = blobs(40, 6, 4), valid = blobs(10, 6, 5);
    TrainConfig c;
    c.batch_size = 16;
    c.epochs = 15;
    c.seed = 9;
    const auto a = fit(train, valid, c), b = fit(train, valid, c);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.final_params, b.final_params);
    EXPECT_EQ(a.history.best_epoch, b.history.best_epoch);
    c.seed = 10;
    EXPECT_NE(fit(train, valid, c).final_params, a.final_params);
}

TEST(Fit, CheckpointIsBestValidationEpoch) {
    const auto train = blobs(48, 6, 6), valid = blobs(12, 6, 7);
    TrainConfig c;
    c.batch_size = 16;
    c.epochs = 30;
    c.lr = 3e-3;
    std::vector<HeadParams> snapshots;
    std::vector<double> valid_losses;
    FitCallbacks cb;
    cb.on_epoch = [&](const EpochRecord &r) { valid_losses.push_back(r.valid_loss); };
    cb.on_improvement = [&](const HeadParams &p, const EpochRecord &) { snapshots.push_back(p); };
    const auto r = fit(train, valid, c, cb);
    const auto best = std::min_element(valid_losses.begin(), valid_losses.end()) - valid_losses.begin();
    EXPECT_EQ(r.history.best_epoch, best);
    ASSERT_FALSE(snapshots.empty());
    EXPECT_EQ(snapshots.back(), r.params);
    const double reloss = nll_loss(predict_log_probs(r.params, valid.x, c.head), valid.y);
    EXPECT_NEAR(reloss, valid_losses[static_cast<std::size_t>(best)], 1e-12);
    for (double l : valid_losses) EXPECT_GE(l, reloss - 1e-12);
}

TEST(Fit, RejectsOversizedBatch) {
    const auto train = blobs(8, 3, 1);
    TrainConfig c;
    c.batch_size = 16;
    EXPECT_THROW(fit(train, train, c), ConfigError);
}

TEST(Fit, SkipsSingletonTailBatch) {
    const auto train = blobs(9, 3, 1);
    TrainConfig c;
    c.batch_size = 4;
    c.epochs = 2;
    EXPECT_NO_THROW(fit(train, train, c));
}

TEST(Evaluate, MatchesBruteForceTally) {
    Rng rng(12);
    const auto test = blobs(57, 5, 13);
    const HeadParams p = init_xavier(5, 2);
    std::vector<int> pred;
    const auto r = evaluate(p, test, {}, &pred);
    ASSERT_EQ(pred.size(), 57u);
    const MatrixD lp = forward_with_masks(test.x, p, Mode::Eval, {}, nullptr);
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < 57; ++i) {
        const int yhat = lp(i, 1) > lp(i, 0);
        EXPECT_EQ(pred[i], yhat);
        if (yhat && test.y[i]) ++tp;
        else if (yhat) ++fp;
        else if (test.y[i]) ++fn;
        else ++tn;
    }
    EXPECT_EQ(r.cm, (ConfusionMatrix{tn, fp, fn, tp}));
    EXPECT_DOUBLE_EQ(r.accuracy, double(tp + tn) / 57);
    EXPECT_EQ(evaluate(p, test, {}), r);
}

TEST(LabeledFeatures, FromEmbeddingSet) {
    EmbeddingSet set;
    set.ids = {"a", "b"};
    set.labels = {1, 0};
    set.features = MatrixF(2, 2, {0.5f, 1.5f, -2.0f, 3.0f});
    const auto f = LabeledFeatures::from(set);
    EXPECT_EQ(f.y, set.labels);
    EXPECT_DOUBLE_EQ(f.x(1, 0), -2.0);
    const std::size_t idx[] = {1};
    EXPECT_EQ(f.rows(idx).y, std::vector<int>{0});
}
