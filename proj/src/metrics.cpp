#include "spamdet/metrics.hpp"

#include "spamdet/error.hpp"

namespace spamdet {

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw InputError("predictions and labels differ in length (" + std::to_string(predictions.size()) +
                         " vs " + std::to_string(labels.size()) + ")");
    if (labels.empty()) throw InputError("confusion matrix of zero samples");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int p = predictions[i], y = labels[i];
        if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw InputError("class outside {0,1}");
        if (y == 1) (p == 1 ? cm.tp : cm.fn) += 1;
        else (p == 1 ? cm.fp : cm.tn) += 1;
    }
    return cm;
}

double accuracy(const ConfusionMatrix &cm) {
    if (cm.total() == 0) throw InputError("accuracy of an empty confusion matrix");
    return static_cast<double>(cm.tn + cm.tp) / static_cast<double>(cm.total());
}

double recall(const ConfusionMatrix &cm) {
    const auto d = cm.tp + cm.fn;
    return d == 0 ? 0.0 : static_cast<double>(cm.tp) / static_cast<double>(d);
}

double precision(const ConfusionMatrix &cm) {
    const auto d = cm.tp + cm.fp;
    return d == 0 ? 0.0 : static_cast<double>(cm.tp) / static_cast<double>(d);
}

double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

MetricsReport report(const ConfusionMatrix &cm) {
    MetricsReport r;
    r.cm = cm;
    r.accuracy = accuracy(cm);
    r.precision = precision(cm);
    r.recall = recall(cm);
    r.f1 = f1(r.precision, r.recall);
    return r;
}

void to_json(nlohmann::ordered_json &j, const ConfusionMatrix &cm) {
    j = nlohmann::ordered_json{{"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}, {"tp", cm.tp}};
}

void from_json(const nlohmann::ordered_json &j, ConfusionMatrix &cm) {
    j.at("tn").get_to(cm.tn);
    j.at("fp").get_to(cm.fp);
    j.at("fn").get_to(cm.fn);
    j.at("tp").get_to(cm.tp);
}

void to_json(nlohmann::ordered_json &j, const MetricsReport &r) {
    j = nlohmann::ordered_json{{"accuracy", r.accuracy}, {"precision", r.precision}, {"recall", r.recall},
                               {"f1", r.f1},             {"confusion", r.cm}};
}

void from_json(const nlohmann::ordered_json &j, MetricsReport &r) {
    j.at("accuracy").get_to(r.accuracy);
    j.at("precision").get_to(r.precision);
    j.at("recall").get_to(r.recall);
    j.at("f1").get_to(r.f1);
    r.cm = j.at("confusion").get<ConfusionMatrix>();
}

} // namespace spamdet
