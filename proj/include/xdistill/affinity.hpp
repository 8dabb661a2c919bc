#pragma once

#include <map>

#include <torch/torch.h>

#include "xdistill/model.hpp"

namespace xdistill {

// Relation-masked cross-domain affinities and the dense distillation loss.
//
// Indexing convention: every [P x Q] matrix has rows indexed by student
// (white-light) positions p_w and columns by teacher positions p_n, with
// positions flattened row-major from an H x W feature map. Functions accept
// an optional leading batch dimension.

enum class Direction {
  kTeacherGivenStudent,  // A(p_n | p_w): normalized over p_n for each p_w
  kStudentGivenTeacher,  // A(p_w | p_n): normalized over p_w for each p_n
};

enum class DistanceNorm { kL1, kL2 };

enum class AffinityGradient {
  kFull,          // gradients flow through the affinity weights and distances
  kStopAffinity,  // affinities are treated as constants
};

struct AddOptions {
  bool bidirectional = true;
  DistanceNorm norm = DistanceNorm::kL2;
  AffinityGradient gradient = AffinityGradient::kFull;
};

struct AffinityField {
  torch::Tensor similarity;       // S, values in [-1,1]
  torch::Tensor teacher_given_student;  // A(p_n|p_w)
  torch::Tensor student_given_teacher;  // A(p_w|p_n), stored at (p_w,p_n)
  torch::Tensor path_probability;       // a + b - ab
};

inline constexpr double kCosineEpsilon = 1e-8;

/// S[i,j] = <Fw_i, Fn_j> / (max(|Fw_i|,eps) * max(|Fn_j|,eps)).
/// Inputs [C,H,W] or [B,C,H,W]; output [HW,HW] or [B,HW,HW].
torch::Tensor cosine_similarity_matrix(const torch::Tensor& student_features,
                                       const torch::Tensor& teacher_features);

/// Masked softmax of exp(S) * R along the direction's normalization axis.
/// Slices whose mask is entirely zero come back as exact zeros.
torch::Tensor directed_affinity(const torch::Tensor& similarity, const torch::Tensor& relations,
                                Direction direction);

/// Probabilistic union a + b - ab; rejects entries outside [0,1].
torch::Tensor path_probability(const torch::Tensor& a, const torch::Tensor& b);

AffinityField affinity_field(const torch::Tensor& student_features, const torch::Tensor& teacher_features,
                             const torch::Tensor& relations, bool bidirectional = true);

/// Sum over (p_w,p_n) of P(p_w,p_n) * |Fw_{p_w} - Fn_{p_n}|, divided by the
/// number of pairs with P > 0 (1 when none). Batched inputs are averaged
/// over the batch.
torch::Tensor dense_distillation_loss(const torch::Tensor& student_features,
                                      const torch::Tensor& teacher_features,
                                      const torch::Tensor& path_probability,
                                      DistanceNorm norm = DistanceNorm::kL2);

/// Affinity field and loss for one scale, honoring the gradient mode.
torch::Tensor add_loss_single_scale(const torch::Tensor& student_features,
                                    const torch::Tensor& teacher_features,
                                    const torch::Tensor& relations, const AddOptions& options = {});

/// Mean over the student's tapped scales. `relations` maps a stage index to
/// R for that scale ([HW,HW] or [B,HW,HW]).
torch::Tensor add_loss_all_scales(const FeaturePyramid& student, const FeaturePyramid& teacher,
                                  const std::map<int, torch::Tensor>& relations,
                                  const AddOptions& options = {});

/// Flattens [C,H,W] -> [HW,C] (or [B,C,H,W] -> [B,HW,C]).
torch::Tensor positions_by_channels(const torch::Tensor& features);

}  // namespace xdistill
