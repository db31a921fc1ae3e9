#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "enroll/data.h"

namespace enroll {

// One scored prediction; probs are the per-class scores used for ranking
// metrics and label is their argmax (possibly after the quantity override).
struct Prediction {
    std::string trial_id;
    Label label = Label::neutral;
    std::array<double, 3> probs{};
};

struct MetricsReport {
    double micro_f1 = 0.0;
    double averaged_f1 = 0.0; // mean per-trial micro-F1
    double pr_auc = 0.0;      // micro-averaged one-vs-rest
    std::array<double, 3> precision{};
    std::array<double, 3> recall{};
    std::array<std::array<size_t, 3>, 3> confusion{}; // [gold][pred]

    nlohmann::ordered_json to_json() const;
};

// Plain fraction of exact label matches. For single-label multiclass this
// coincides with micro-F1; evaluate() computes micro-F1 independently from
// pooled TP/FP/FN so tests can cross-check the identity.
double accuracy(const std::vector<Prediction>& preds, const std::vector<Label>& gold);

// Area under the precision-recall curve for (score, is_positive) points:
// descending score sweep, tied scores grouped, curve anchored at
// (recall 0, precision 1), trapezoidal integration.
double pr_auc_points(std::vector<std::pair<double, bool>> points);

MetricsReport evaluate(const std::vector<Prediction>& preds, const std::vector<Label>& gold);

} // namespace enroll
