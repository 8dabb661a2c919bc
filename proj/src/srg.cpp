#include "xdistill/srg.hpp"

#include <cmath>

#include "xdistill/error.hpp"

namespace xdistill {

namespace F = torch::nn::functional;

namespace {

constexpr int kWindow = 9;

// Shift of a zero-padded [..., h+2, w+2] tensor back to [..., h, w] so that
// output (y,x) reads input (y+dy, x+dx).
torch::Tensor shifted(const torch::Tensor& padded, int dy, int dx, int64_t h, int64_t w) {
  return padded.narrow(-2, 1 + dy, h).narrow(-1, 1 + dx, w);
}

torch::Tensor pad1(const torch::Tensor& t) { return F::pad(t, F::PadFuncOptions({1, 1, 1, 1})); }

}  // namespace

torch::Tensor psr_weights(const torch::Tensor& image) {
  require(image.dim() == 3 && image.size(0) == 3, "PSR guide image must be [3,h,w]");
  auto img = image.detach().to(torch::kFloat64);
  const int64_t h = img.size(1);
  const int64_t w = img.size(2);
  auto padded = pad1(img.unsqueeze(0)).squeeze(0);
  auto valid = pad1(torch::ones({1, 1, h, w}, img.options())).squeeze(0).squeeze(0);
  std::vector<torch::Tensor> raw;
  raw.reserve(kWindow);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      auto neighbor = shifted(padded, dy, dx, h, w);
      auto distance = (img - neighbor).pow(2).sum(0).sqrt() / std::sqrt(3.0);
      raw.push_back(shifted(valid, dy, dx, h, w) * (1.0 - distance));
    }
  }
  auto weights = torch::stack(raw);
  return weights / weights.sum(0, /*keepdim=*/true);
}

torch::Tensor psr_refine(const torch::Tensor& map, const torch::Tensor& image, int iterations) {
  require(iterations >= 0, "PSR iteration count must be non-negative");
  require(map.dim() == 2, "PSR map must be [h,w]");
  require(image.dim() == 3 && image.size(1) == map.size(0) && image.size(2) == map.size(1),
          "PSR map and guide image must be spatially aligned");
  auto current = map.detach().to(torch::kFloat64);
  if (iterations == 0) return current.clone();
  const int64_t h = map.size(0);
  const int64_t w = map.size(1);
  auto lambda = psr_weights(image);
  for (int t = 0; t < iterations; ++t) {
    auto padded = pad1(current.unsqueeze(0).unsqueeze(0)).squeeze(0).squeeze(0);
    auto delta = torch::zeros_like(current);
    int k = 0;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx, ++k) delta += lambda[k] * (shifted(padded, dy, dx, h, w) - current);
    current = current + delta;
  }
  return current;
}

torch::Tensor resize_bilinear(const torch::Tensor& t, int64_t height, int64_t width) {
  require(t.dim() == 2 || t.dim() == 3, "resize expects [H,W] or [C,H,W]");
  auto x = t.detach().to(torch::kFloat64);
  const bool plane = t.dim() == 2;
  if (plane) x = x.unsqueeze(0);
  if (x.size(1) == height && x.size(2) == width) return plane ? x.squeeze(0) : x;
  const bool shrinking = height < x.size(1) || width < x.size(2);
  auto out = F::interpolate(x.unsqueeze(0), F::InterpolateFuncOptions()
                                                .size(std::vector<int64_t>{height, width})
                                                .mode(torch::kBilinear)
                                                .align_corners(false)
                                                .antialias(shrinking))
                 .squeeze(0);
  return plane ? out.squeeze(0) : out;
}

torch::Tensor trinarize(const torch::Tensor& refined, double tau1, double tau2, int64_t height, int64_t width) {
  require(0.0 < tau1 && tau1 < tau2 && tau2 < 1.0, "thresholds must satisfy 0 < tau1 < tau2 < 1");
  auto resized = resize_bilinear(refined, height, width);
  auto mask = torch::full(resized.sizes(), static_cast<int8_t>(Semantic::kUnsure), torch::kInt8);
  mask.masked_fill_(resized <= tau1, static_cast<int8_t>(Semantic::kBackground));
  mask.masked_fill_(resized >= tau2, static_cast<int8_t>(Semantic::kPolyp));
  return mask;
}

torch::Tensor relation_matrix(const torch::Tensor& mask_w, const torch::Tensor& mask_n) {
  auto mw = mask_w.reshape({-1, 1});
  auto mn = mask_n.reshape({1, -1});
  const auto unsure = static_cast<int8_t>(Semantic::kUnsure);
  return ((mw == mn) & (mw != unsure) & (mn != unsure)).to(torch::kFloat32);
}

SemanticMaps build_relations(const torch::Tensor& image_w, const torch::Tensor& image_n, int class_index,
                             const FeaturePyramid& student, const FeaturePyramid& teacher,
                             const torch::Tensor& student_head, const torch::Tensor& teacher_head,
                             const SrgOptions& options) {
  SemanticMaps maps;
  if (!options.enabled) {
    for (const auto& [tap, level] : student.levels) {
      const int64_t n = level.size(-1) * level.size(-2);
      maps.scales[tap].relations = torch::ones({n, n}, torch::kFloat32);
    }
    return maps;
  }
  require(options.iterations >= 0, "PSR iteration count must be non-negative");
  auto cam_w = compute_cam(student, student_head, class_index);
  auto cam_n = compute_cam(teacher, teacher_head, class_index);
  maps.cam_raw_w = cam_w.map;
  maps.cam_raw_n = cam_n.map;
  maps.degenerate_w = cam_w.degenerate;
  maps.degenerate_n = cam_n.degenerate;
  const int64_t h = cam_w.map.size(0);
  const int64_t w = cam_w.map.size(1);
  maps.cam_refined_w = psr_refine(cam_w.map, resize_bilinear(image_w, h, w), options.iterations);
  maps.cam_refined_n = psr_refine(cam_n.map, resize_bilinear(image_n, h, w), options.iterations);
  for (const auto& [tap, level] : student.levels) {
    ScaleRelations scale;
    scale.mask_w = trinarize(maps.cam_refined_w, options.tau1, options.tau2, level.size(-2), level.size(-1));
    scale.mask_n = trinarize(maps.cam_refined_n, options.tau1, options.tau2, level.size(-2), level.size(-1));
    scale.relations = relation_matrix(scale.mask_w, scale.mask_n);
    maps.scales[tap] = std::move(scale);
  }
  return maps;
}

SemanticMaps build_relations(const torch::Tensor& image_w, const torch::Tensor& image_n, int class_index,
                             const Classifier& student, const Classifier& teacher, const SrgOptions& options) {
  torch::NoGradGuard no_grad;
  auto sp = student.extract(image_w);
  auto tp = teacher.extract(image_n);
  return build_relations(image_w, image_n, class_index, sp, tp, student.head_weights(), teacher.head_weights(),
                         options);
}

std::map<int, torch::Tensor> batch_relations(const torch::Tensor& images_w, const torch::Tensor& images_n,
                                             const std::vector<int>& class_indices, const FeaturePyramid& student,
                                             const FeaturePyramid& teacher, const torch::Tensor& student_head,
                                             const torch::Tensor& teacher_head, const SrgOptions& options) {
  const int64_t batch = images_w.size(0);
  require(static_cast<int64_t>(class_indices.size()) == batch, "one class index per batch item required");
  std::map<int, std::vector<torch::Tensor>> per_scale;
  for (int64_t b = 0; b < batch; ++b) {
    FeaturePyramid sp, tp;
    for (const auto& [tap, level] : student.levels) sp.levels[tap] = level[b].detach();
    for (const auto& [tap, level] : teacher.levels) tp.levels[tap] = level[b].detach();
    sp.last_stage = student.last_stage[b].detach();
    tp.last_stage = teacher.last_stage[b].detach();
    auto maps = build_relations(images_w[b], images_n[b], class_indices[static_cast<size_t>(b)], sp, tp,
                                student_head, teacher_head, options);
    for (auto& [tap, scale] : maps.scales) per_scale[tap].push_back(scale.relations);
  }
  std::map<int, torch::Tensor> out;
  for (auto& [tap, list] : per_scale) out[tap] = torch::stack(list);
  return out;
}

}  // namespace xdistill
