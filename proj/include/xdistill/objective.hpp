#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include <torch/torch.h>

#include "xdistill/config.hpp"
#include "xdistill/data.hpp"
#include "xdistill/model.hpp"

namespace xdistill {

struct LossBreakdown {
  torch::Tensor total;  // differentiable l_total
  double l_dist = 0;
  double l_logit = 0;
  double l_cls = 0;
  double l_total = 0;
};

struct Batch {
  torch::Tensor images_w;  // [B,3,H,W]
  torch::Tensor images_n;
  torch::Tensor labels;    // [B] int64
};

/// Stacks the selected samples; `flip` mirrors both images of item i when
/// flip[i] is set.
Batch make_batch(const std::vector<PairedSample>& samples, const std::vector<size_t>& indices,
                 const std::vector<bool>& flip = {});

/// Mean cross-entropy of softmax(logits) against labels in {0,1}.
torch::Tensor classification_loss(const torch::Tensor& student_logits, const torch::Tensor& labels);

/// Mean over the batch of |P^w - P^n|_2 on raw logits (or on softmax
/// probabilities when `on_probabilities`).
torch::Tensor logit_distillation_loss(const torch::Tensor& student_logits, const torch::Tensor& teacher_logits,
                                      bool on_probabilities = false);

/// Aligned-feature consistency: mean over scales of the mean positionwise
/// L2 distance between same-position student and teacher features.
torch::Tensor consistency_loss(const FeaturePyramid& student, const FeaturePyramid& teacher);

/// l_total = l_dist + l_logit + l_cls from already computed batched
/// pyramids. Heads are the classifiers' [K,C] weights, used for CAMs.
LossBreakdown compose_loss(const Batch& batch, const FeaturePyramid& student, const FeaturePyramid& teacher,
                           const torch::Tensor& student_head, const torch::Tensor& teacher_head,
                           const TrainConfig& config);

/// l_total = l_dist + l_logit + l_cls honoring the ablation flags in
/// `config`. The student's train/eval mode is left to the caller.
LossBreakdown total_loss(const Batch& batch, const Classifier& student, const Classifier& teacher,
                         const TrainConfig& config);

enum class TrainRole {
  kTeacher,  // classifier trained on teacher-modality images, l_cls only
  kStudent,  // distillation from a frozen teacher
};

struct StepRecord {
  int step = 0;
  int epoch = 0;
  double l_dist = 0, l_logit = 0, l_cls = 0, l_total = 0;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_mean_cls;
};

/// Adam over the trainable classifier's parameters. Writes one JSON line per
/// step to `log` when given. Raises ErrorCode::kDivergence on a non-finite
/// loss. `teacher` is required for kStudent.
TrainResult train(const std::vector<PairedSample>& samples, const std::vector<size_t>& indices,
                  Classifier& trainee, const Classifier* teacher, TrainRole role, const TrainConfig& config,
                  std::ostream* log = nullptr);

/// Positive-class probabilities of the classifier on the chosen modality in
/// inference mode.
std::vector<double> predict_scores(Classifier& classifier, const std::vector<PairedSample>& samples,
                                   const std::vector<size_t>& indices, bool teacher_modality = false,
                                   int batch_size = 32);

}  // namespace xdistill
