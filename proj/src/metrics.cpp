#include "enroll/metrics.h"

#include <algorithm>
#include <map>

#include "enroll/errors.h"

namespace enroll {

double accuracy(const std::vector<Prediction>& preds, const std::vector<Label>& gold) {
    if (preds.size() != gold.size()) throw DimError("prediction/gold length mismatch");
    if (preds.empty()) throw DataError("cannot score an empty prediction list");
    size_t hits = 0;
    for (size_t i = 0; i < preds.size(); ++i) hits += (preds[i].label == gold[i]) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double pr_auc_points(std::vector<std::pair<double, bool>> points) {
    size_t positives = 0;
    for (const auto& [score, pos] : points) positives += pos ? 1 : 0;
    if (positives == 0) throw DataError("PR-AUC needs at least one positive point");
    std::sort(points.begin(), points.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    double auc = 0.0;
    double prev_recall = 0.0, prev_precision = 1.0;
    size_t tp = 0, fp = 0, i = 0;
    while (i < points.size()) {
        // consume the whole tied-score group before emitting a curve point
        const double score = points[i].first;
        for (; i < points.size() && points[i].first == score; ++i) {
            if (points[i].second) ++tp;
            else ++fp;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        auc += (recall - prev_recall) * (precision + prev_precision) / 2.0;
        prev_recall = recall;
        prev_precision = precision;
    }
    return auc;
}

namespace {

// pooled one-vs-rest counts; for single-label data this equals accuracy
double micro_f1_pooled(const std::array<std::array<size_t, 3>, 3>& confusion) {
    size_t tp = 0, fp = 0, fn = 0;
    for (size_t c = 0; c < 3; ++c) {
        tp += confusion[c][c];
        for (size_t other = 0; other < 3; ++other) {
            if (other == c) continue;
            fp += confusion[other][c]; // gold=other predicted as c
            fn += confusion[c][other]; // gold=c predicted as other
        }
    }
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

} // namespace

MetricsReport evaluate(const std::vector<Prediction>& preds, const std::vector<Label>& gold) {
    if (preds.size() != gold.size()) throw DimError("prediction/gold length mismatch");
    if (preds.empty()) throw DataError("cannot score an empty prediction list");

    MetricsReport rep;
    for (size_t i = 0; i < preds.size(); ++i) {
        rep.confusion[static_cast<size_t>(gold[i])][static_cast<size_t>(preds[i].label)] += 1;
    }
    rep.micro_f1 = micro_f1_pooled(rep.confusion);

    for (size_t c = 0; c < 3; ++c) {
        size_t col = 0, row = 0;
        for (size_t g = 0; g < 3; ++g) col += rep.confusion[g][c];
        for (size_t p = 0; p < 3; ++p) row += rep.confusion[c][p];
        rep.precision[c] = col == 0 ? 0.0
                                    : static_cast<double>(rep.confusion[c][c]) /
                                          static_cast<double>(col);
        rep.recall[c] = row == 0 ? 0.0
                                 : static_cast<double>(rep.confusion[c][c]) /
                                       static_cast<double>(row);
    }

    // per-trial micro-F1, averaged over trials in sorted id order
    std::map<std::string, std::pair<size_t, size_t>> per_trial; // id -> (hits, total)
    for (size_t i = 0; i < preds.size(); ++i) {
        auto& [hits, total] = per_trial[preds[i].trial_id];
        hits += (preds[i].label == gold[i]) ? 1 : 0;
        total += 1;
    }
    double sum = 0.0;
    for (const auto& [id, counts] : per_trial) {
        sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
    }
    rep.averaged_f1 = sum / static_cast<double>(per_trial.size());

    std::vector<std::pair<double, bool>> points;
    points.reserve(preds.size() * 3);
    for (size_t i = 0; i < preds.size(); ++i) {
        for (size_t c = 0; c < 3; ++c) {
            points.emplace_back(preds[i].probs[c], static_cast<size_t>(gold[i]) == c);
        }
    }
    rep.pr_auc = pr_auc_points(std::move(points));
    return rep;
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["micro_f1"] = micro_f1;
    j["averaged_f1"] = averaged_f1;
    j["pr_auc"] = pr_auc;
    j["precision"] = precision;
    j["recall"] = recall;
    j["confusion"] = confusion;
    return j;
}

} // namespace enroll
