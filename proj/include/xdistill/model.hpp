#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace xdistill {

inline constexpr int kNumClasses = 2;

/// Static description of a classifier; serialized as the checkpoint sidecar.
struct ClassifierSpec {
  std::string backbone_id = "resnet18";
  std::vector<int> stage_taps = {3, 4};
  int num_classes = kNumClasses;
  int input_size = 448;
};

/// Per-stage feature maps plus logits. Tensors are either unbatched
/// ([C,H,W] / [K]) when produced by Classifier::extract, or batched
/// ([B,C,H,W] / [B,K]) when produced by Classifier::forward.
struct FeaturePyramid {
  std::map<int, torch::Tensor> levels;
  torch::Tensor logits;
  // Output of the deepest stage; CAM source. Equal to levels[4] when tapped.
  torch::Tensor last_stage;
};

struct BackboneLayout {
  int stem_channels;
  std::vector<int> stage_channels;
  std::vector<int> blocks_per_stage;
  int stem_kernel;
};

/// Known backbone ids: "resnet18", "resnet34", "resnet-small", "resnet-tiny".
BackboneLayout backbone_layout(const std::string& backbone_id);

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int in_channels, int out_channels, int stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::Sequential downsample_{nullptr};
};
TORCH_MODULE(BasicBlock);

/// ResNet-style network: stem (/4) followed by four stages with strides
/// 1, 2, 2, 2, then global average pooling and a linear head.
class ClassifierNetImpl : public torch::nn::Module {
 public:
  ClassifierNetImpl(const BackboneLayout& layout, int num_classes);

  /// Returns the four stage outputs (index 0 = stage 1) and the logits.
  std::pair<std::vector<torch::Tensor>, torch::Tensor> forward(torch::Tensor x);

  torch::nn::Linear head() const { return head_; }

 private:
  torch::nn::Sequential stem_{nullptr};
  std::vector<torch::nn::Sequential> stages_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(ClassifierNet);

/// A teacher (frozen) or student (trainable) classifier exposing multi-scale
/// features. The teacher is permanently in inference mode and holds no
/// gradient-tracking parameters.
class Classifier {
 public:
  static constexpr int kMaxStride = 32;

  Classifier(ClassifierSpec spec, bool trainable, std::uint64_t seed);

  const ClassifierSpec& spec() const { return spec_; }
  bool trainable() const { return trainable_; }

  /// Single image [3,H,W] with values in [0,1]; H and W divisible by 32.
  FeaturePyramid extract(const torch::Tensor& image) const;

  /// Batched [B,3,H,W] forward. Autograd tracks the student only.
  FeaturePyramid forward(const torch::Tensor& images) const;

  /// [num_classes x channels_of_last_stage], detached.
  torch::Tensor head_weights() const;

  /// Parameters handed to the optimizer. Throws for the teacher.
  std::vector<torch::Tensor> trainable_parameters() const;

  void set_training(bool on);
  bool training() const;

  /// FNV-1a over every parameter and buffer in registration order.
  std::uint64_t checksum() const;

  void save(const std::filesystem::path& archive) const;
  static Classifier load(const std::filesystem::path& archive, bool trainable);
  /// Frozen handle holding a copy of the current weights.
  Classifier frozen_copy() const;
  /// Copies weights from an existing archive (optional pretrained init).
  void load_weights(const std::filesystem::path& archive);

  ClassifierNet net() const { return net_; }

 private:
  void freeze();

  ClassifierSpec spec_;
  bool trainable_;
  ClassifierNet net_{nullptr};
};

/// Validates a single image or a batch: channel count 3, finite values in
/// [0,1], spatial size divisible by the maximum stride.
void validate_image(const torch::Tensor& image);

struct CamMap {
  torch::Tensor map;  // [h,w], float64, values in [0,1]
  bool degenerate = false;
};

/// Class-weighted sum of last-stage channels, min-max normalized to [0,1].
/// `last_stage` is [C,h,w]; `head_weights` is [K,C].
CamMap compute_cam(const torch::Tensor& last_stage, const torch::Tensor& head_weights,
                   int class_index);
CamMap compute_cam(const FeaturePyramid& pyramid, const torch::Tensor& head_weights,
                   int class_index);

std::filesystem::path sidecar_path(const std::filesystem::path& archive);

}  // namespace xdistill
