#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace xdistill {

class Classifier;
struct PairedSample;

struct RocPoint {
  double fpr;
  double tpr;
};

struct MetricsReport {
  double acc = 0, pre = 0, sen = 0, spe = 0, f1 = 0;
  std::optional<double> auc;  // empty when only one class is present
  std::vector<RocPoint> roc_points;
  int n_pos = 0, n_neg = 0;
  int tp = 0, fp = 0, tn = 0, fn = 0;

  /// Throws ErrorCode::kUndefinedAuc for single-class label sets.
  double auc_value() const;
};

/// Threshold metrics at `threshold` (score >= threshold predicts positive)
/// and the full score-sweep ROC. Tied scores move the ROC diagonally, which
/// gives half credit per tied positive/negative pair.
MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                              double threshold = 0.5);

/// Trapezoidal area under a ROC polyline.
double trapezoid_auc(const std::vector<RocPoint>& roc);

struct FoldSummary {
  std::vector<MetricsReport> folds;
  double acc = 0, pre = 0, sen = 0, spe = 0, f1 = 0, auc = 0;
};

FoldSummary aggregate_folds(const std::vector<MetricsReport>& reports);

nlohmann::json metrics_json(const MetricsReport& report);
/// {"fold": {"0": {...}, ...}, "mean": {...}}
nlohmann::json summary_json(const FoldSummary& summary);

/// Writes `<path>` as "fpr,tpr" CSV and `<path minus extension>.png` plot.
void export_roc(const MetricsReport& report, const std::filesystem::path& csv_path);
std::vector<RocPoint> read_roc_csv(const std::filesystem::path& csv_path);

/// One row per sample: input | student CAM overlay | teacher CAM overlay.
/// Returns the grid size as (rows, panels).
std::pair<int, int> export_cam_overlays(const std::vector<PairedSample>& samples, const Classifier& student,
                                        const Classifier& teacher, const std::filesystem::path& png_path,
                                        bool use_predicted_class = false);

struct CorrespondenceScore {
  int hits = 0;
  int cells = 0;
  double rate() const { return cells == 0 ? 0.0 : static_cast<double>(hits) / cells; }
};

/// For every lesion cell of the student image at stage `stage`, takes the
/// argmax over teacher positions of the unmasked affinity A(n|w) and counts a
/// hit when it lies within `tolerance` cells (Chebyshev) of the ground-truth
/// correspondence. Cells warped out of view are skipped.
CorrespondenceScore correspondence_accuracy(const Classifier& student, const Classifier& teacher,
                                            const std::vector<PairedSample>& samples,
                                            const std::vector<size_t>& indices, int stage, int tolerance = 1);

}  // namespace xdistill
