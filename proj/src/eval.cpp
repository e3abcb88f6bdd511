#include "textguard/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace textguard::eval {

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truth) {
    if (preds.size() != truth.size()) throw std::invalid_argument("confusion: length mismatch");
    if (preds.empty()) throw std::invalid_argument("confusion: no items");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if ((preds[i] != 0 && preds[i] != 1) || (truth[i] != 0 && truth[i] != 1)) {
            throw std::invalid_argument("confusion: labels must be 0 or 1");
        }
        if (truth[i] == 1) {
            preds[i] == 1 ? ++cm.tp : ++cm.fn;
        } else {
            preds[i] == 1 ? ++cm.fp : ++cm.tn;
        }
    }
    return cm;
}

BinaryMetrics binary_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw std::invalid_argument("binary_metrics: empty confusion matrix");
    BinaryMetrics m;
    m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
    if (cm.tp + cm.fp > 0) {
        m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
    } else {
        m.degenerate = true;
    }
    if (cm.tp + cm.fn > 0) {
        m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    } else {
        m.degenerate = true;
    }
    if (m.precision + m.recall > 0.0) {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
        m.degenerate = true;
    }
    return m;
}

MetricsReport classification_report(const std::vector<int>& preds, const std::vector<int>& truth) {
    MetricsReport report;
    report.cm = confusion(preds, truth);
    const ConfusionMatrix& cm = report.cm;
    BinaryMetrics pos = binary_metrics(cm);

    // class 0 metrics come from the flipped matrix
    ConfusionMatrix flipped{cm.tn, cm.tp, cm.fn, cm.fp};
    BinaryMetrics neg = binary_metrics(flipped);

    report.accuracy = pos.accuracy;
    report.degenerate = pos.degenerate || neg.degenerate;
    report.class0 = {0, neg.precision, neg.recall, neg.f1, cm.tn + cm.fp};
    report.class1 = {1, pos.precision, pos.recall, pos.f1, cm.tp + cm.fn};

    std::size_t total = cm.total();
    report.macro_avg = {-1,
                        (neg.precision + pos.precision) / 2.0,
                        (neg.recall + pos.recall) / 2.0,
                        (neg.f1 + pos.f1) / 2.0,
                        total};
    double s0 = static_cast<double>(report.class0.support);
    double s1 = static_cast<double>(report.class1.support);
    double st = static_cast<double>(total);
    report.weighted_avg = {-1,
                           (neg.precision * s0 + pos.precision * s1) / st,
                           (neg.recall * s0 + pos.recall * s1) / st,
                           (neg.f1 * s0 + pos.f1 * s1) / st,
                           total};
    return report;
}

std::string format_report(const MetricsReport& report) {
    char line[160];
    std::string out = "Classification Report:\n";
    out += "              precision    recall  f1-score   support\n\n";
    for (const ClassRow* row : {&report.class0, &report.class1}) {
        std::snprintf(line, sizeof line, "%12d %10.2f %9.2f %9.2f %9zu\n", row->label, row->precision,
                      row->recall, row->f1, row->support);
        out += line;
    }
    out += '\n';
    std::snprintf(line, sizeof line, "%12s %10s %9s %9.2f %9zu\n", "accuracy", "", "", report.accuracy,
                  report.macro_avg.support);
    out += line;
    std::snprintf(line, sizeof line, "%12s %10.2f %9.2f %9.2f %9zu\n", "macro avg",
                  report.macro_avg.precision, report.macro_avg.recall, report.macro_avg.f1,
                  report.macro_avg.support);
    out += line;
    std::snprintf(line, sizeof line, "%12s %10.2f %9.2f %9.2f %9zu\n", "weighted avg",
                  report.weighted_avg.precision, report.weighted_avg.recall, report.weighted_avg.f1,
                  report.weighted_avg.support);
    out += line;
    return out;
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& truth) {
    if (scores.size() != truth.size()) throw std::invalid_argument("roc_auc: length mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int t : truth) {
        if (t != 0 && t != 1) throw std::invalid_argument("roc_auc: labels must be 0 or 1");
        t == 1 ? ++n_pos : ++n_neg;
    }
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("roc_auc: need at least one positive and one negative");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.emplace_back(0.0, 0.0);
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    while (i < order.size()) {
        double s = scores[order[i]];
        // consume the whole tie group as one threshold step
        while (i < order.size() && scores[order[i]] == s) {
            truth[order[i]] == 1 ? ++tp : ++fp;
            ++i;
        }
        double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
        double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
        curve.points.emplace_back(fpr, tpr);
        curve.auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    return curve;
}

const std::vector<Table4Row>& table4_rows() {
    static const std::vector<Table4Row> rows = {
        {"SVM", "baseline", 86.5, 87.6, 88.0, 87.0},
        {"LR", "baseline", 82.5, 85.4, 82.0, 83.0},
        {"RF", "baseline", 75.9, 80.9, 74.6, 76.0},
        {"KNN", "baseline", 85.7, 86.2, 85.5, 86.0},
        {"DT", "baseline", 82.4, 85.5, 82.1, 82.0},
        {"LSTM-TFIDF", "deep", 98.0, 57.4, 72.4, 60.0},
        {"BLSTM-TFIDF", "deep", 97.3, 57.0, 71.9, 59.0},
        {"LSTM-GloVe", "deep", 82.6, 83.2, 82.9, 82.0},
        {"BLSTM-GloVe", "deep", 75.0, 87.8, 80.9, 81.0},
        {"LSTM-ArWor2Vec", "deep", 69.6, 97.4, 81.2, 83.0},
        {"BLSTM-ArWor2Vec", "deep", 95.4, 98.4, 96.9, 97.0},
        {"LSTM-Fasttext", "deep", 84.5, 88.7, 86.6, 86.0},
        {"Bi-LSTM-Fasttext", "deep", 96.5, 99.7, 98.1, 98.0},
        {"BERT CAMeL-da", "transformer", 96.6, 97.2, 96.9, 97.0},
        {"BERT CAMeL-mix", "transformer", 95.6, 96.5, 96.0, 96.0},
        {"BERT Arabertv02", "transformer", 95.4, 95.0, 95.2, 95.0},
        {"BERT-alarge-Arabertv02", "transformer", 89.2, 95.1, 92.1, 92.0},
        {"LSTM-BERT CAMeL-da", "hybrid", 96.3, 97.2, 96.8, 97.0},
        {"Bi-LSTM-BERT CAMeL-da", "hybrid", 96.8, 97.1, 97.0, 97.0},
        {"LSTM-BERT Arabertv02", "hybrid", 95.6, 95.2, 95.4, 95.0},
        {"Bi-LSTM-BERTArabertv02", "hybrid", 95.2, 96.4, 95.8, 96.0},
    };
    return rows;
}

std::vector<Table4Row> load_table4_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_table4_csv: no such file: " + path);
    std::vector<Table4Row> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.rfind("name,", 0) == 0) continue;  // header
        }
        std::istringstream ls(line);
        Table4Row row;
        std::string field;
        std::getline(ls, row.name, ',');
        std::getline(ls, row.group, ',');
        std::getline(ls, field, ',');
        row.recall = std::stod(field);
        std::getline(ls, field, ',');
        row.precision = std::stod(field);
        std::getline(ls, field, ',');
        row.f1 = std::stod(field);
        if (!std::getline(ls, field)) throw std::runtime_error("load_table4_csv: malformed row");
        row.accuracy = std::stod(field);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<Table4Check> table4_consistency(const std::vector<Table4Row>& rows,
                                            double flag_threshold) {
    std::vector<Table4Check> checks;
    checks.reserve(rows.size());
    for (const auto& row : rows) {
        if (row.recall < 0.0 || row.recall > 100.0 || row.precision < 0.0 || row.precision > 100.0) {
            throw std::invalid_argument("table4_consistency: percentages out of range");
        }
        if (row.recall + row.precision == 0.0) {
            throw std::invalid_argument("table4_consistency: zero precision+recall in row " + row.name);
        }
        Table4Check check;
        check.row = row;
        check.recomputed_f1 = 2.0 * row.recall * row.precision / (row.recall + row.precision);
        check.deviation = std::fabs(row.f1 - check.recomputed_f1);
        check.flagged = check.deviation > flag_threshold;
        checks.push_back(std::move(check));
    }
    return checks;
}

void emit_curves(const models::TrainReport& report, const std::string& path) {
    if (report.epochs.empty()) throw std::invalid_argument("emit_curves: empty report");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_curves: cannot write " + path);
    out << "epoch,train_loss,val_loss,train_acc,val_acc\n";
    char buf[192];
    for (std::size_t e = 0; e < report.epochs.size(); ++e) {
        const auto& r = report.epochs[e];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", e + 1, r.train_loss,
                      r.val_loss, r.train_acc, r.val_acc);
        out << buf;
    }
}

models::TrainReport load_curves(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_curves: no such file: " + path);
    models::TrainReport report;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_curves: empty file");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        models::EpochRecord rec;
        std::getline(ls, field, ',');  // epoch index is implicit
        std::getline(ls, field, ',');
        rec.train_loss = std::stod(field);
        std::getline(ls, field, ',');
        rec.val_loss = std::stod(field);
        std::getline(ls, field, ',');
        rec.train_acc = std::stod(field);
        std::getline(ls, field);
        rec.val_acc = std::stod(field);
        report.epochs.push_back(rec);
    }
    report.stopped_epoch = report.epochs.size();
    return report;
}

}  // namespace textguard::eval
