#include "xdistill/pipeline.hpp"

#include <fstream>

#include "xdistill/error.hpp"
#include "xdistill/objective.hpp"

namespace xdistill {

namespace fs = std::filesystem;

std::vector<Variant> component_ablation_variants() {
  return {
      {"cic",
       [](TrainConfig& c) {
         c.enable_feature_distill = false;
         c.enable_logit = false;
       }},
      {"logit_consistency",
       [](TrainConfig& c) {
         c.enable_add = false;
         c.enable_srg = false;
       }},
      {"add", [](TrainConfig& c) { c.enable_srg = false; }},
      {"add_srg", [](TrainConfig&) {}},
  };
}

namespace {

Classifier make_student(const TrainConfig& config) {
  Classifier c(config.classifier_spec(), /*trainable=*/true, config.seed);
  if (!config.pretrained.empty()) c.load_weights(config.pretrained);
  return c;
}

std::vector<int> labels_of(const std::vector<PairedSample>& samples, const std::vector<size_t>& indices) {
  std::vector<int> labels;
  for (auto i : indices) labels.push_back(samples[i].label);
  return labels;
}

}  // namespace

CrossValidationResult cross_validate(const std::vector<PairedSample>& samples, const TrainConfig& base,
                                     const FoldPlan& plan, const std::vector<Variant>& variants,
                                     const fs::path& artifacts, std::ostream* progress) {
  base.validate();
  require(!variants.empty(), "no variants to evaluate");
  CrossValidationResult result;
  std::map<std::string, std::vector<MetricsReport>> reports;
  for (size_t f = 0; f < plan.folds.size(); ++f) {
    auto [train_idx, test_idx] = fold_indices(samples, plan.folds[f]);
    if (train_idx.empty() || test_idx.empty()) fail(ErrorCode::kEmptyInput, "fold " + std::to_string(f) + " is empty");
    const fs::path fold_dir = artifacts.empty() ? fs::path{} : artifacts / ("fold" + std::to_string(f));
    if (!fold_dir.empty()) fs::create_directories(fold_dir);

    TrainConfig teacher_config = base;
    teacher_config.seed = base.seed + 7919 * (f + 1);
    Classifier teacher_trainee(base.classifier_spec(), true, teacher_config.seed);
    if (!base.pretrained.empty()) teacher_trainee.load_weights(base.pretrained);
    {
      std::ofstream log;
      if (!fold_dir.empty()) log.open(fold_dir / "teacher_loss.jsonl");
      train(samples, train_idx, teacher_trainee, nullptr, TrainRole::kTeacher, teacher_config,
            log.is_open() ? &log : nullptr);
    }
    auto teacher = teacher_trainee.frozen_copy();
    if (!fold_dir.empty()) teacher.save(fold_dir / "teacher.pt");
    const auto labels = labels_of(samples, test_idx);
    auto teacher_report = compute_metrics(predict_scores(teacher, samples, test_idx, /*teacher_modality=*/true), labels);
    result.teacher_folds.push_back(teacher_report);
    if (progress)
      *progress << "fold " << f << " teacher auc=" << (teacher_report.auc ? *teacher_report.auc : -1.0) << std::endl;

    for (const auto& variant : variants) {
      TrainConfig config = base;
      variant.apply(config);
      config.seed = base.seed + 104729 * (f + 1);
      auto student = make_student(config);
      std::ofstream log;
      if (!fold_dir.empty()) log.open(fold_dir / (variant.name + "_loss.jsonl"));
      train(samples, train_idx, student, &teacher, TrainRole::kStudent, config, log.is_open() ? &log : nullptr);
      auto report = compute_metrics(predict_scores(student, samples, test_idx), labels);
      if (!fold_dir.empty() && report.auc) export_roc(report, fold_dir / (variant.name + "_roc.csv"));
      if (progress)
        *progress << "fold " << f << " " << variant.name << " auc=" << (report.auc ? *report.auc : -1.0)
                  << " acc=" << report.acc << std::endl;
      reports[variant.name].push_back(std::move(report));
    }
  }
  for (auto& [name, list] : reports) result.variants[name] = aggregate_folds(list);
  return result;
}

}  // namespace xdistill
