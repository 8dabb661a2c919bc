#include "xdistill/objective.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "xdistill/affinity.hpp"
#include "xdistill/error.hpp"
#include "xdistill/srg.hpp"

namespace xdistill {

Batch make_batch(const std::vector<PairedSample>& samples, const std::vector<size_t>& indices,
                 const std::vector<bool>& flip) {
  require(!indices.empty(), "batch must not be empty");
  std::vector<torch::Tensor> w, n;
  std::vector<int64_t> labels;
  for (size_t i = 0; i < indices.size(); ++i) {
    const auto& s = samples.at(indices[i]);
    const bool mirror = !flip.empty() && flip[i];
    w.push_back(mirror ? s.image_w.flip({-1}) : s.image_w);
    n.push_back(mirror ? s.image_n.flip({-1}) : s.image_n);
    labels.push_back(s.label);
  }
  return {torch::stack(w), torch::stack(n), torch::tensor(labels, torch::kInt64)};
}

torch::Tensor classification_loss(const torch::Tensor& student_logits, const torch::Tensor& labels) {
  require(student_logits.dim() == 2 && student_logits.size(1) == kNumClasses, "logits must be [B,2]");
  require(labels.dim() == 1 && labels.size(0) == student_logits.size(0), "one label per logit row required");
  if (labels.numel() > 0 && (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() > 1))
    fail(ErrorCode::kContractViolation, "labels must be 0 or 1");
  return torch::nn::functional::cross_entropy(student_logits, labels.to(torch::kInt64));
}

torch::Tensor logit_distillation_loss(const torch::Tensor& student_logits, const torch::Tensor& teacher_logits,
                                      bool on_probabilities) {
  require(student_logits.sizes() == teacher_logits.sizes(), "logit length mismatch");
  auto s = student_logits.dim() == 1 ? student_logits.unsqueeze(0) : student_logits;
  auto t = (teacher_logits.dim() == 1 ? teacher_logits.unsqueeze(0) : teacher_logits).detach();
  if (on_probabilities) {
    s = torch::softmax(s, -1);
    t = torch::softmax(t, -1);
  }
  return torch::linalg_vector_norm(s - t, 2, {-1}, false, c10::nullopt).mean();
}

torch::Tensor consistency_loss(const FeaturePyramid& student, const FeaturePyramid& teacher) {
  require(!student.levels.empty(), "student pyramid has no levels");
  require(student.levels.size() == teacher.levels.size(), "stage tap mismatch between student and teacher");
  torch::Tensor total;
  for (const auto& [tap, fw] : student.levels) {
    auto it = teacher.levels.find(tap);
    require(it != teacher.levels.end(), "teacher pyramid lacks stage " + std::to_string(tap));
    require(fw.sizes() == it->second.sizes(), "feature shape mismatch at stage " + std::to_string(tap));
    const int64_t channel_dim = fw.dim() - 3;
    auto d = torch::linalg_vector_norm(fw - it->second.detach(), 2, {channel_dim}, false, c10::nullopt).mean();
    total = total.defined() ? total + d : d;
  }
  return total / static_cast<double>(student.levels.size());
}

LossBreakdown compose_loss(const Batch& batch, const FeaturePyramid& student, const FeaturePyramid& teacher,
                           const torch::Tensor& student_head, const torch::Tensor& teacher_head,
                           const TrainConfig& config) {
  auto zero = torch::zeros({}, student.logits.options());
  auto l_cls = classification_loss(student.logits, batch.labels);
  auto l_logit = config.enable_logit
                     ? logit_distillation_loss(student.logits, teacher.logits, config.logit_mode == "softmax")
                     : zero;
  torch::Tensor l_dist = zero;
  if (config.enable_feature_distill) {
    if (!config.enable_add) {
      l_dist = consistency_loss(student, teacher);
    } else {
      std::vector<int> classes;
      auto labels = batch.labels.to(torch::kInt64);
      for (int64_t b = 0; b < labels.size(0); ++b) classes.push_back(static_cast<int>(labels[b].item<int64_t>()));
      auto relations = batch_relations(batch.images_w, batch.images_n, classes, student, teacher, student_head,
                                       teacher_head, config.srg_options());
      for (auto& [tap, r] : relations) r = r.to(student.levels.at(tap).scalar_type());
      l_dist = add_loss_all_scales(student, teacher, relations, config.add_options());
    }
  }
  LossBreakdown out;
  out.total = l_dist + l_logit + l_cls;
  out.l_dist = l_dist.item<double>();
  out.l_logit = l_logit.item<double>();
  out.l_cls = l_cls.item<double>();
  out.l_total = out.l_dist + out.l_logit + out.l_cls;
  return out;
}

LossBreakdown total_loss(const Batch& batch, const Classifier& student, const Classifier& teacher,
                         const TrainConfig& config) {
  require(!teacher.trainable(), "teacher must be frozen");
  auto sp = student.forward(batch.images_w);
  FeaturePyramid tp;
  {
    torch::NoGradGuard no_grad;
    tp = teacher.forward(batch.images_n);
  }
  return compose_loss(batch, sp, tp, student.head_weights(), teacher.head_weights(), config);
}

TrainResult train(const std::vector<PairedSample>& samples, const std::vector<size_t>& indices, Classifier& trainee,
                  const Classifier* teacher, TrainRole role, const TrainConfig& config, std::ostream* log) {
  config.validate();
  require(!indices.empty(), "training set is empty");
  if (role == TrainRole::kStudent) {
    require(teacher != nullptr, "student training needs a teacher");
    require(!teacher->trainable(), "teacher must be frozen");
  }
  torch::manual_seed(config.seed);
  torch::optim::Adam optimizer(trainee.trainable_parameters(),
                               torch::optim::AdamOptions(config.learning_rate).weight_decay(config.weight_decay));
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::bernoulli_distribution coin(0.5);
  std::vector<size_t> order(indices.begin(), indices.end());
  TrainResult result;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    trainee.set_training(true);
    double cls_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      // BatchNorm needs more than one value per channel in training mode.
      if (end - start < 2 && order.size() >= 2) continue;
      std::vector<size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<bool> flip(chunk.size(), false);
      if (config.hflip)
        for (size_t i = 0; i < flip.size(); ++i) flip[i] = coin(rng);
      auto batch = make_batch(samples, chunk, flip);
      LossBreakdown loss;
      if (role == TrainRole::kStudent) {
        loss = total_loss(batch, trainee, *teacher, config);
      } else {
        auto pyramid = trainee.forward(batch.images_n);
        auto l_cls = classification_loss(pyramid.logits, batch.labels);
        loss.total = l_cls;
        loss.l_cls = l_cls.item<double>();
        loss.l_total = loss.l_cls;
      }
      StepRecord record{step, epoch, loss.l_dist, loss.l_logit, loss.l_cls, loss.l_total};
      if (log) {
        *log << nlohmann::json{{"step", record.step},
                               {"epoch", record.epoch},
                               {"l_dist", record.l_dist},
                               {"l_logit", record.l_logit},
                               {"l_cls", record.l_cls},
                               {"l_total", record.l_total}}
                    .dump()
             << "\n";
      }
      if (!std::isfinite(loss.l_total))
        fail(ErrorCode::kDivergence, "non-finite loss at step " + std::to_string(step) + " (epoch " +
                                         std::to_string(epoch) + ")");
      optimizer.zero_grad();
      loss.total.backward();
      optimizer.step();
      result.steps.push_back(record);
      cls_sum += record.l_cls;
      ++batches;
      ++step;
    }
    result.epoch_mean_cls.push_back(batches > 0 ? cls_sum / batches : 0.0);
    if (log) log->flush();
  }
  trainee.set_training(false);
  return result;
}

std::vector<double> predict_scores(Classifier& classifier, const std::vector<PairedSample>& samples,
                                   const std::vector<size_t>& indices, bool teacher_modality, int batch_size) {
  torch::NoGradGuard no_grad;
  const bool was_training = classifier.training();
  if (was_training) classifier.set_training(false);
  std::vector<double> scores;
  scores.reserve(indices.size());
  for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(indices.size(), start + static_cast<size_t>(batch_size));
    std::vector<size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                              indices.begin() + static_cast<std::ptrdiff_t>(end));
    auto batch = make_batch(samples, chunk);
    auto logits = classifier.forward(teacher_modality ? batch.images_n : batch.images_w).logits;
    auto probs = torch::softmax(logits.to(torch::kFloat64), -1).select(1, 1).contiguous();
    for (int64_t i = 0; i < probs.size(0); ++i) scores.push_back(probs[i].item<double>());
  }
  if (was_training) classifier.set_training(true);
  return scores;
}

}  // namespace xdistill
