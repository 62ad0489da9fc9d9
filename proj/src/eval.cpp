#include "canids/eval.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "canids/error.hpp"

namespace canids {

ConfusionMatrix confusion(const std::vector<float>& scores, const std::vector<int>& labels,
                          double threshold) {
    if (scores.empty()) throw DomainError("confusion on empty score set");
    if (scores.size() != labels.size()) throw DomainError("scores/labels length mismatch");
    ConfusionMatrix cm;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = static_cast<double>(scores[i]) >= threshold;
        if (labels[i]) predicted ? ++cm.tp : ++cm.fn;
        else predicted ? ++cm.fp : ++cm.tn;
    }
    return cm;
}

MetricSet metrics(const ConfusionMatrix& cm) {
    if (cm.total() <= 0) throw DomainError("metrics on an empty confusion matrix");
    MetricSet m;
    auto ratio = [&m](int64_t num, int64_t den) {
        if (den == 0) {
            m.degenerate = true;
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    m.precision = ratio(cm.tp, cm.tp + cm.fp);
    m.recall = ratio(cm.tp, cm.tp + cm.fn);
    m.f1 = (m.precision + m.recall) == 0.0
               ? (m.degenerate = true, 0.0)
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    m.fpr = ratio(cm.fp, cm.fp + cm.tn);
    m.fnr = ratio(cm.fn, cm.fn + cm.tp);
    m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
    return m;
}

std::pair<std::vector<RocPoint>, double> roc_auc(const std::vector<float>& scores,
                                                 const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw DomainError("roc_auc needs matching non-empty scores/labels");
    int64_t pos = 0, neg = 0;
    for (int y : labels) (y ? pos : neg)++;
    if (pos == 0 || neg == 0) throw DomainError("roc_auc needs both classes present");

    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&scores](size_t a, size_t b) {
        return scores[a] > scores[b];
    });

    std::vector<RocPoint> curve;
    curve.push_back({0.0, 0.0});
    double auc = 0.0;
    int64_t tp = 0, fp = 0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    size_t i = 0;
    while (i < idx.size()) {
        // advance over one distinct score value
        const float s = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == s) {
            if (labels[idx[i]]) ++tp;
            else ++fp;
            ++i;
        }
        const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
        const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
        curve.push_back({fpr, tpr});
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    return {curve, auc};
}

std::vector<float> score_windows(const CnnModel& model, const std::vector<LabeledWindow>& ws) {
    std::vector<float> scores(ws.size());
    std::vector<int64_t> order(ws.size());
    std::iota(order.begin(), order.end(), int64_t{0});
    constexpr size_t kBatch = 512;
    for (size_t begin = 0; begin < ws.size(); begin += kBatch) {
        const size_t count = std::min(kBatch, ws.size() - begin);
        Tensor batch = windows_to_batch(ws, order, begin, count);
        std::vector<float> p = model_infer(model, batch);
        std::copy(p.begin(), p.end(), scores.begin() + static_cast<int64_t>(begin));
    }
    return scores;
}

std::vector<float> score_windows(const QuantModel& model, const std::vector<LabeledWindow>& ws) {
    return qmodel_forward_batch(model, ws);
}

namespace {

template <class M>
EvalReport evaluate_impl(const M& model, const std::vector<LabeledWindow>& test,
                         const std::string& attack, double threshold) {
    if (test.empty()) throw DomainError("empty test set");
    std::vector<int> labels(test.size());
    for (size_t i = 0; i < test.size(); ++i) labels[i] = test[i].label;
    const std::vector<float> scores = score_windows(model, test);

    EvalReport r;
    r.attack = attack;
    r.threshold = threshold;
    r.sample_count = static_cast<int64_t>(test.size());
    r.cm = confusion(scores, labels, threshold);
    r.metrics = metrics(r.cm);
    r.auc = roc_auc(scores, labels).second;
    return r;
}

} // namespace

EvalReport evaluate_model(const CnnModel& model, const std::vector<LabeledWindow>& test,
                          const std::string& attack, double threshold) {
    return evaluate_impl(model, test, attack, threshold);
}

EvalReport evaluate_model(const QuantModel& model, const std::vector<LabeledWindow>& test,
                          const std::string& attack, double threshold) {
    return evaluate_impl(model, test, attack, threshold);
}

nlohmann::json eval_report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["attack"] = r.attack;
    j["threshold"] = r.threshold;
    j["samples"] = r.sample_count;
    j["confusion"] = {{"tn", r.cm.tn}, {"fp", r.cm.fp}, {"fn", r.cm.fn}, {"tp", r.cm.tp}};
    j["metrics"] = {{"precision", r.metrics.precision}, {"recall", r.metrics.recall},
                    {"f1", r.metrics.f1},               {"fpr", r.metrics.fpr},
                    {"fnr", r.metrics.fnr},             {"accuracy", r.metrics.accuracy},
                    {"degenerate", r.metrics.degenerate}};
    j["auc"] = r.auc;
    return j;
}

void write_roc_csv(const std::vector<RocPoint>& curve, std::ostream& out) {
    out << "fpr,tpr\n";
    char buf[64];
    for (const RocPoint& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", p.fpr, p.tpr);
        out << buf;
    }
}

} // namespace canids
