#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <torch/torch.h>

#include "xdistill/model.hpp"

namespace xdistill {

/// Trinarized CAM cell values. Stored as int8 tensors.
enum class Semantic : std::int8_t { kBackground = 0, kPolyp = 1, kUnsure = 2 };

struct SrgOptions {
  bool enabled = true;
  int iterations = 10;  // T; 0 disables refinement
  double tau1 = 0.3;
  double tau2 = 0.7;
};

/// Normalized 3x3 color-similarity weights for every pixel: [9,h,w] in
/// float64, neighbor index (dy+1)*3 + (dx+1). Out-of-image neighbors carry 0.
torch::Tensor psr_weights(const torch::Tensor& image);

/// T refinement passes of `map` ([h,w], values in [0,1]) guided by `image`
/// ([3,h,w], values in [0,1], same spatial size).
torch::Tensor psr_refine(const torch::Tensor& map, const torch::Tensor& image, int iterations);

/// Bilinear resize of [C,H,W] or [H,W] to the given size (float64 result).
torch::Tensor resize_bilinear(const torch::Tensor& t, int64_t height, int64_t width);

/// Resizes a refined map to feature resolution, then applies the closed
/// outer bands: <= tau1 background, >= tau2 polyp, otherwise unsure.
torch::Tensor trinarize(const torch::Tensor& refined, double tau1, double tau2, int64_t height, int64_t width);

/// R[i,j] = 1 iff mask_w[i] == mask_n[j] and neither is unsure. Both masks
/// are [H,W]; result is float32 [HW,HW].
torch::Tensor relation_matrix(const torch::Tensor& mask_w, const torch::Tensor& mask_n);

struct ScaleRelations {
  torch::Tensor mask_w;     // [H_l,W_l] int8, undefined when SRG is off
  torch::Tensor mask_n;
  torch::Tensor relations;  // [H_l W_l, H_l W_l] float32
};

struct SemanticMaps {
  torch::Tensor cam_raw_w, cam_raw_n;
  torch::Tensor cam_refined_w, cam_refined_n;
  bool degenerate_w = false;
  bool degenerate_n = false;
  std::map<int, ScaleRelations> scales;
};

/// CAM -> PSR(T) -> resize -> trinarize -> relation matrix, per tapped scale.
/// Pyramids are unbatched; images are [3,H,W]. With SRG disabled every R is
/// all ones.
SemanticMaps build_relations(const torch::Tensor& image_w, const torch::Tensor& image_n, int class_index,
                             const FeaturePyramid& student, const FeaturePyramid& teacher,
                             const torch::Tensor& student_head, const torch::Tensor& teacher_head,
                             const SrgOptions& options);

SemanticMaps build_relations(const torch::Tensor& image_w, const torch::Tensor& image_n, int class_index,
                             const Classifier& student, const Classifier& teacher, const SrgOptions& options);

/// Batched variant used during training: returns R per stage as [B,P,Q].
std::map<int, torch::Tensor> batch_relations(const torch::Tensor& images_w, const torch::Tensor& images_n,
                                             const std::vector<int>& class_indices, const FeaturePyramid& student,
                                             const FeaturePyramid& teacher, const torch::Tensor& student_head,
                                             const torch::Tensor& teacher_head, const SrgOptions& options);

}  // namespace xdistill
