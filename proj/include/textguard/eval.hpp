#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "textguard/models.hpp"

namespace textguard::eval {

/// Counts with class 1 (bullying) as the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truth);

struct BinaryMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    /// Set when a zero denominator forced a metric to its defined value 0.
    bool degenerate = false;
};

/// accuracy (tp+tn)/total, precision tp/(tp+fp), recall tp/(tp+fn),
/// f1 = 2PR/(P+R); zero-denominator cases are defined as 0 and flagged.
BinaryMetrics binary_metrics(const ConfusionMatrix& cm);

struct ClassRow {
    int label = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct MetricsReport {
    double accuracy = 0.0;
    ClassRow class0;
    ClassRow class1;
    ClassRow macro_avg;     // unweighted mean; support = total
    ClassRow weighted_avg;  // support-weighted mean; support = total
    ConfusionMatrix cm;
    bool degenerate = false;
};

MetricsReport classification_report(const std::vector<int>& preds, const std::vector<int>& truth);

/// Human-readable block laid out like the usual classification report.
std::string format_report(const MetricsReport& report);

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0) .. (1,1)
    double auc = 0.0;
};

/// Threshold sweep over distinct scores (descending), tied scores
/// grouped into one step; AUC by the trapezoidal rule, which equals
/// P(score_pos > score_neg) + 0.5 P(equal).
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& truth);

struct Table4Row {
    std::string name;
    std::string group;  // "baseline", "deep", "transformer", "hybrid"
    double recall = 0.0;     // percent
    double precision = 0.0;  // percent
    double f1 = 0.0;         // percent
    double accuracy = 0.0;   // percent
};

struct Table4Check {
    Table4Row row;
    double recomputed_f1 = 0.0;
    double deviation = 0.0;
    bool flagged = false;
};

/// The published comparison-table rows shipped with the toolkit.
const std::vector<Table4Row>& table4_rows();

std::vector<Table4Row> load_table4_csv(const std::string& path);

/// Recomputes each row's F1 from its recall/precision and reports the
/// absolute deviation; rows beyond flag_threshold are flagged.
std::vector<Table4Check> table4_consistency(const std::vector<Table4Row>& rows,
                                            double flag_threshold = 0.15);

struct LearningCurve {
    std::vector<models::EpochRecord> epochs;
};

/// Per-epoch CSV: epoch,train_loss,val_loss,train_acc,val_acc.
void emit_curves(const models::TrainReport& report, const std::string& path);
models::TrainReport load_curves(const std::string& path);

}  // namespace textguard::eval
