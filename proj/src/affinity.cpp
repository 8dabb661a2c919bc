#include "xdistill/affinity.hpp"

#include "xdistill/error.hpp"

namespace xdistill {

namespace {

constexpr double kRangeSlack = 1e-6;

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t.detach()).all().item<bool>())
    fail(ErrorCode::kRejectedInput, std::string(what) + " contains non-finite values");
}

void require_matching_features(const torch::Tensor& fw, const torch::Tensor& fn) {
  require(fw.dim() == 3 || fw.dim() == 4, "features must be [C,H,W] or [B,C,H,W]");
  require(fw.dim() == fn.dim(), "student and teacher features must have the same rank");
  const int64_t c = fw.dim() - 3;
  require(fw.size(c) == fn.size(c), "channel mismatch between student and teacher features");
  if (fw.dim() == 4) require(fw.size(0) == fn.size(0), "batch size mismatch");
}

}  // namespace

torch::Tensor positions_by_channels(const torch::Tensor& features) {
  if (features.dim() == 3) return features.flatten(1).transpose(0, 1);
  require(features.dim() == 4, "features must be [C,H,W] or [B,C,H,W]");
  return features.flatten(2).transpose(1, 2);
}

torch::Tensor cosine_similarity_matrix(const torch::Tensor& student_features,
                                       const torch::Tensor& teacher_features) {
  require_matching_features(student_features, teacher_features);
  require_finite(student_features, "student features");
  require_finite(teacher_features, "teacher features");
  auto normalize = [](const torch::Tensor& f) {
    auto v = positions_by_channels(f);
    auto norm = torch::linalg_vector_norm(v, 2, {-1}, /*keepdim=*/true).clamp_min(kCosineEpsilon);
    return v / norm;
  };
  return torch::matmul(normalize(student_features), normalize(teacher_features).transpose(-1, -2));
}

torch::Tensor directed_affinity(const torch::Tensor& similarity, const torch::Tensor& relations,
                                Direction direction) {
  require(similarity.dim() >= 2, "similarity must be at least 2-D");
  require(relations.sizes() == similarity.sizes(), "similarity and relations must have the same shape");
  // S lies in [-1,1], so exp(S) is bounded and needs no max subtraction.
  auto mask = relations.to(similarity.scalar_type());
  auto weighted = torch::exp(similarity) * mask;
  const int64_t axis = direction == Direction::kTeacherGivenStudent ? -1 : -2;
  auto denom = weighted.sum(axis, /*keepdim=*/true);
  auto safe = torch::where(denom > 0, denom, torch::ones_like(denom));
  return weighted / safe;
}

torch::Tensor path_probability(const torch::Tensor& a, const torch::Tensor& b) {
  require(a.sizes() == b.sizes(), "path_probability inputs must have the same shape");
  for (const auto* t : {&a, &b}) {
    auto d = t->detach();
    if (d.numel() > 0 && (d.min().item<double>() < -kRangeSlack || d.max().item<double>() > 1.0 + kRangeSlack))
      fail(ErrorCode::kContractViolation, "affinity entries must lie in [0,1]");
  }
  return a + b - a * b;
}

AffinityField affinity_field(const torch::Tensor& student_features, const torch::Tensor& teacher_features,
                             const torch::Tensor& relations, bool bidirectional) {
  AffinityField field;
  field.similarity = cosine_similarity_matrix(student_features, teacher_features);
  require(relations.sizes() == field.similarity.sizes(),
          "relations must be [HW,HW] (or batched) matching the feature resolution");
  field.teacher_given_student = directed_affinity(field.similarity, relations, Direction::kTeacherGivenStudent);
  field.student_given_teacher = directed_affinity(field.similarity, relations, Direction::kStudentGivenTeacher);
  field.path_probability = bidirectional
                               ? path_probability(field.teacher_given_student, field.student_given_teacher)
                               : field.teacher_given_student;
  return field;
}

torch::Tensor dense_distillation_loss(const torch::Tensor& student_features,
                                      const torch::Tensor& teacher_features,
                                      const torch::Tensor& path_probability, DistanceNorm norm) {
  require_matching_features(student_features, teacher_features);
  require_finite(student_features, "student features");
  require_finite(teacher_features, "teacher features");
  const bool batched = student_features.dim() == 4;
  auto fw = positions_by_channels(student_features);
  auto fn = positions_by_channels(teacher_features);
  if (!batched) {
    fw = fw.unsqueeze(0);
    fn = fn.unsqueeze(0);
  }
  auto paths = batched ? path_probability : path_probability.unsqueeze(0);
  require(paths.dim() == 3 && paths.size(1) == fw.size(1) && paths.size(2) == fn.size(1),
          "path probability shape does not match the feature maps");
  // compute_mode 2: exact differences, so identical vectors give exactly 0.
  const double p = norm == DistanceNorm::kL2 ? 2.0 : 1.0;
  auto distances = torch::cdist(fw, fn, p, /*compute_mode=*/2);
  auto active = (paths.detach() > 0).sum({1, 2}).to(distances.scalar_type()).clamp_min(1.0);
  auto per_item = (paths * distances).sum({1, 2}) / active;
  return per_item.mean();
}

torch::Tensor add_loss_single_scale(const torch::Tensor& student_features,
                                    const torch::Tensor& teacher_features, const torch::Tensor& relations,
                                    const AddOptions& options) {
  auto teacher = teacher_features.detach();
  auto affinity_source =
      options.gradient == AffinityGradient::kStopAffinity ? student_features.detach() : student_features;
  auto field = affinity_field(affinity_source, teacher, relations, options.bidirectional);
  return dense_distillation_loss(student_features, teacher, field.path_probability, options.norm);
}

torch::Tensor add_loss_all_scales(const FeaturePyramid& student, const FeaturePyramid& teacher,
                                  const std::map<int, torch::Tensor>& relations, const AddOptions& options) {
  require(!student.levels.empty(), "student pyramid has no levels");
  require(student.levels.size() == teacher.levels.size(), "stage tap mismatch between student and teacher");
  torch::Tensor total;
  for (const auto& [tap, fw] : student.levels) {
    auto fn = teacher.levels.find(tap);
    require(fn != teacher.levels.end(), "teacher pyramid lacks stage " + std::to_string(tap));
    auto r = relations.find(tap);
    require(r != relations.end(), "no relation matrix for stage " + std::to_string(tap));
    auto loss = add_loss_single_scale(fw, fn->second, r->second, options);
    total = total.defined() ? total + loss : loss;
  }
  return total / static_cast<double>(student.levels.size());
}

}  // namespace xdistill
