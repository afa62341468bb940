#pragma once

#include <cstddef>
#include <span>

#include <nlohmann/json.hpp>

namespace spamdet {

// Spam (label 1) is the positive class.
struct ConfusionMatrix {
    std::size_t tn = 0, fp = 0, fn = 0, tp = 0;

    std::size_t total() const { return tn + fp + fn + tp; }
    bool operator==(const ConfusionMatrix &) const = default;
};

struct MetricsReport {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    ConfusionMatrix cm;

    bool operator==(const MetricsReport &) const = default;
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels);

double accuracy(const ConfusionMatrix &cm);
// The three below return 0 on an empty denominator.
double recall(const ConfusionMatrix &cm);
double precision(const ConfusionMatrix &cm);
double f1(double precision, double recall);

MetricsReport report(const ConfusionMatrix &cm);

void to_json(nlohmann::ordered_json &j, const ConfusionMatrix &cm);
void from_json(const nlohmann::ordered_json &j, ConfusionMatrix &cm);
void to_json(nlohmann::ordered_json &j, const MetricsReport &r);
void from_json(const nlohmann::ordered_json &j, MetricsReport &r);

} // namespace spamdet
