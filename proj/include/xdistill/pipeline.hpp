#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "xdistill/config.hpp"
#include "xdistill/data.hpp"
#include "xdistill/eval.hpp"

namespace xdistill {

/// A named configuration delta applied on top of a base TrainConfig.
struct Variant {
  std::string name;
  std::function<void(TrainConfig&)> apply;
};

/// CIC baseline, logit + aligned consistency, ADD without SRG, ADD + SRG.
std::vector<Variant> component_ablation_variants();

struct CrossValidationResult {
  std::map<std::string, FoldSummary> variants;
  std::vector<MetricsReport> teacher_folds;  // teacher-modality test metrics
};

/// For every fold: trains a teacher on the training patients' teacher-modality
/// images, then one student per variant (identical initialization across
/// variants), and scores the test patients' student-modality images.
/// When `artifacts` is non-empty, per-fold loss logs and ROC files are
/// written below it.
CrossValidationResult cross_validate(const std::vector<PairedSample>& samples, const TrainConfig& base,
                                     const FoldPlan& plan, const std::vector<Variant>& variants,
                                     const std::filesystem::path& artifacts = {}, std::ostream* progress = nullptr);

}  // namespace xdistill
