#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "canids/features.hpp"
#include "canids/nn.hpp"
#include "canids/quant.hpp"

#include <nlohmann/json_fwd.hpp>

namespace canids {

struct ConfusionMatrix {
    int64_t tn = 0, fp = 0, fn = 0, tp = 0;
    int64_t total() const { return tn + fp + fn + tp; }
};

struct MetricSet {
    double precision = 0, recall = 0, f1 = 0, fpr = 0, fnr = 0, accuracy = 0;
    bool degenerate = false; // some 0/0 ratio was defined as 0
};

struct RocPoint {
    double fpr = 0, tpr = 0;
};

struct EvalReport {
    std::string attack;
    ConfusionMatrix cm;
    MetricSet metrics;
    double auc = 0;
    double threshold = 0.5;
    int64_t sample_count = 0;
};

// score >= threshold predicts attack (ties count as attack).
ConfusionMatrix confusion(const std::vector<float>& scores, const std::vector<int>& labels,
                          double threshold = 0.5);

// 0/0 ratios are reported as 0 with the degenerate flag set.
MetricSet metrics(const ConfusionMatrix& cm);

// Threshold sweep over the distinct scores; AUC by trapezoid, which equals
// the Mann-Whitney statistic with 0.5 credit for ties.
std::pair<std::vector<RocPoint>, double> roc_auc(const std::vector<float>& scores,
                                                 const std::vector<int>& labels);

std::vector<float> score_windows(const CnnModel& model, const std::vector<LabeledWindow>& ws);
std::vector<float> score_windows(const QuantModel& model, const std::vector<LabeledWindow>& ws);

EvalReport evaluate_model(const CnnModel& model, const std::vector<LabeledWindow>& test,
                          const std::string& attack, double threshold = 0.5);
EvalReport evaluate_model(const QuantModel& model, const std::vector<LabeledWindow>& test,
                          const std::string& attack, double threshold = 0.5);

nlohmann::json eval_report_to_json(const EvalReport& r);
void write_roc_csv(const std::vector<RocPoint>& curve, std::ostream& out);

} // namespace canids
