#include "xdistill/model.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xdistill/error.hpp"

namespace xdistill {

namespace nn = torch::nn;

BackboneLayout backbone_layout(const std::string& backbone_id) {
  if (backbone_id == "resnet18") return {64, {64, 128, 256, 512}, {2, 2, 2, 2}, 7};
  if (backbone_id == "resnet34") return {64, {64, 128, 256, 512}, {3, 4, 6, 3}, 7};
  if (backbone_id == "resnet-small") return {16, {16, 32, 64, 128}, {1, 1, 1, 1}, 3};
  if (backbone_id == "resnet-tiny") return {8, {8, 16, 32, 64}, {1, 1, 1, 1}, 3};
  fail(ErrorCode::kConfig, "unknown backbone_id '" + backbone_id + "'");
}

BasicBlockImpl::BasicBlockImpl(int in_channels, int out_channels, int stride) {
  conv1_ = register_module(
      "conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3).stride(stride).padding(1).bias(false)));
  bn1_ = register_module("bn1", nn::BatchNorm2d(out_channels));
  conv2_ = register_module(
      "conv2", nn::Conv2d(nn::Conv2dOptions(out_channels, out_channels, 3).padding(1).bias(false)));
  bn2_ = register_module("bn2", nn::BatchNorm2d(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    downsample_ = register_module(
        "downsample",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).stride(stride).bias(false)),
                       nn::BatchNorm2d(out_channels)));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1_(conv1_(x)));
  out = bn2_(conv2_(out));
  auto identity = downsample_ ? downsample_->forward(x) : x;
  return torch::relu(out + identity);
}

ClassifierNetImpl::ClassifierNetImpl(const BackboneLayout& layout, int num_classes) {
  const int k = layout.stem_kernel;
  stem_ = register_module(
      "stem", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, layout.stem_channels, k).stride(2).padding(k / 2).bias(false)),
                             nn::BatchNorm2d(layout.stem_channels), nn::ReLU(),
                             nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1))));
  int in_channels = layout.stem_channels;
  for (size_t s = 0; s < layout.stage_channels.size(); ++s) {
    nn::Sequential stage;
    const int out_channels = layout.stage_channels[s];
    for (int b = 0; b < layout.blocks_per_stage[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      stage->push_back(BasicBlock(b == 0 ? in_channels : out_channels, out_channels, stride));
    }
    in_channels = out_channels;
    stages_.push_back(register_module("stage" + std::to_string(s + 1), stage));
  }
  head_ = register_module("head", nn::Linear(in_channels, num_classes));
}

std::pair<std::vector<torch::Tensor>, torch::Tensor> ClassifierNetImpl::forward(torch::Tensor x) {
  x = (x - 0.5) / 0.25;
  x = stem_->forward(x);
  std::vector<torch::Tensor> outputs;
  outputs.reserve(stages_.size());
  for (auto& stage : stages_) {
    x = stage->forward(x);
    outputs.push_back(x);
  }
  auto pooled = x.mean({2, 3});
  return {std::move(outputs), head_(pooled)};
}

namespace {

void validate_spec(const ClassifierSpec& spec) {
  backbone_layout(spec.backbone_id);
  if (spec.stage_taps.empty()) fail(ErrorCode::kConfig, "stage_taps must not be empty");
  int previous = 0;
  for (int tap : spec.stage_taps) {
    if (tap < 1 || tap > 4 || tap <= previous)
      fail(ErrorCode::kConfig, "stage_taps must be strictly increasing stage indices in [1,4]");
    previous = tap;
  }
  if (spec.num_classes != kNumClasses) fail(ErrorCode::kConfig, "num_classes must be 2");
  if (spec.input_size <= 0 || spec.input_size % Classifier::kMaxStride != 0)
    fail(ErrorCode::kConfig, "input_size must be a positive multiple of 32");
}

nlohmann::json spec_to_json(const ClassifierSpec& spec) {
  return {{"backbone_id", spec.backbone_id},
          {"stage_taps", spec.stage_taps},
          {"num_classes", spec.num_classes},
          {"input_size", spec.input_size}};
}

}  // namespace

void validate_image(const torch::Tensor& image) {
  if (image.dim() != 3 && image.dim() != 4)
    fail(ErrorCode::kRejectedInput, "image must be [3,H,W] or [B,3,H,W]");
  const int64_t channel_dim = image.dim() - 3;
  if (image.size(channel_dim) != 3)
    fail(ErrorCode::kRejectedInput, "image must have 3 channels, got " + std::to_string(image.size(channel_dim)));
  const int64_t h = image.size(-2);
  const int64_t w = image.size(-1);
  if (h <= 0 || w <= 0 || h % Classifier::kMaxStride != 0 || w % Classifier::kMaxStride != 0)
    fail(ErrorCode::kRejectedInput, "image size must be divisible by 32");
  if (!torch::isfinite(image).all().item<bool>()) fail(ErrorCode::kRejectedInput, "image has non-finite pixels");
  if (image.min().item<double>() < 0.0 || image.max().item<double>() > 1.0)
    fail(ErrorCode::kRejectedInput, "image values must lie in [0,1]");
}

Classifier::Classifier(ClassifierSpec spec, bool trainable, std::uint64_t seed)
    : spec_(std::move(spec)), trainable_(trainable) {
  validate_spec(spec_);
  torch::manual_seed(seed);
  net_ = ClassifierNet(backbone_layout(spec_.backbone_id), spec_.num_classes);
  if (!trainable_) freeze();
}

void Classifier::freeze() {
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  net_->eval();
}

FeaturePyramid Classifier::forward(const torch::Tensor& images) const {
  validate_image(images);
  std::optional<torch::NoGradGuard> no_grad;
  if (!trainable_) no_grad.emplace();
  ClassifierNet net = net_;
  auto [stages, logits] = net->forward(images.to(torch::kFloat32));
  FeaturePyramid pyramid;
  for (int tap : spec_.stage_taps) pyramid.levels[tap] = stages[tap - 1];
  pyramid.logits = logits;
  pyramid.last_stage = stages.back();
  return pyramid;
}

FeaturePyramid Classifier::extract(const torch::Tensor& image) const {
  if (image.dim() != 3) fail(ErrorCode::kRejectedInput, "extract expects a single [3,H,W] image");
  auto batched = forward(image.unsqueeze(0));
  FeaturePyramid pyramid;
  for (auto& [tap, level] : batched.levels) pyramid.levels[tap] = level.squeeze(0);
  pyramid.logits = batched.logits.squeeze(0);
  pyramid.last_stage = batched.last_stage.squeeze(0);
  return pyramid;
}

torch::Tensor Classifier::head_weights() const { return net_->head()->weight.detach().clone(); }

std::vector<torch::Tensor> Classifier::trainable_parameters() const {
  if (!trainable_) fail(ErrorCode::kContractViolation, "teacher classifier rejects parameter updates");
  return net_->parameters();
}

void Classifier::set_training(bool on) {
  if (on && !trainable_) fail(ErrorCode::kContractViolation, "teacher classifier cannot enter training mode");
  net_->train(on);
}

bool Classifier::training() const { return net_->is_training(); }

std::uint64_t Classifier::checksum() const {
  std::uint64_t hash = 1469598103934665603ULL;
  auto mix = [&hash](const torch::Tensor& t) {
    auto c = t.detach().contiguous().cpu();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const size_t n = static_cast<size_t>(c.numel()) * c.element_size();
    for (size_t i = 0; i < n; ++i) {
      hash ^= bytes[i];
      hash *= 1099511628211ULL;
    }
  };
  for (const auto& p : net_->named_parameters()) mix(p.value());
  for (const auto& b : net_->named_buffers()) mix(b.value());
  return hash;
}

std::filesystem::path sidecar_path(const std::filesystem::path& archive) {
  auto p = archive;
  p += ".json";
  return p;
}

void Classifier::save(const std::filesystem::path& archive) const {
  if (archive.has_parent_path()) std::filesystem::create_directories(archive.parent_path());
  try {
    torch::save(net_, archive.string());
  } catch (const c10::Error& e) {
    fail(ErrorCode::kUnwritablePath, "cannot write checkpoint " + archive.string() + ": " + e.what_without_backtrace());
  }
  std::ofstream out(sidecar_path(archive));
  if (!out) fail(ErrorCode::kUnwritablePath, "cannot write " + sidecar_path(archive).string());
  out << spec_to_json(spec_).dump(2) << "\n";
}

Classifier Classifier::load(const std::filesystem::path& archive, bool trainable) {
  const auto sidecar = sidecar_path(archive);
  if (!std::filesystem::exists(archive) || !std::filesystem::exists(sidecar))
    fail(ErrorCode::kMissingFile, "checkpoint not found: " + archive.string());
  nlohmann::json j;
  try {
    std::ifstream in(sidecar);
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchema, "bad checkpoint sidecar " + sidecar.string() + ": " + e.what());
  }
  ClassifierSpec spec;
  try {
    spec.backbone_id = j.at("backbone_id").get<std::string>();
    spec.stage_taps = j.at("stage_taps").get<std::vector<int>>();
    spec.num_classes = j.at("num_classes").get<int>();
    spec.input_size = j.at("input_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchema, "bad checkpoint sidecar " + sidecar.string() + ": " + e.what());
  }
  Classifier classifier(spec, /*trainable=*/true, 0);
  classifier.load_weights(archive);
  classifier.trainable_ = trainable;
  if (!trainable) classifier.freeze();
  return classifier;
}

Classifier Classifier::frozen_copy() const {
  std::stringstream buffer;
  torch::save(net_, buffer);
  Classifier copy(spec_, /*trainable=*/true, 0);
  {
    torch::NoGradGuard no_grad;
    torch::load(copy.net_, buffer);
  }
  copy.trainable_ = false;
  copy.freeze();
  return copy;
}

void Classifier::load_weights(const std::filesystem::path& archive) {
  if (!std::filesystem::exists(archive)) fail(ErrorCode::kMissingFile, "weights not found: " + archive.string());
  const bool was_training = net_->is_training();
  try {
    torch::NoGradGuard no_grad;
    torch::load(net_, archive.string());
  } catch (const c10::Error& e) {
    fail(ErrorCode::kSchema, "cannot load weights " + archive.string() + ": " + e.what_without_backtrace());
  }
  if (!trainable_) {
    freeze();
  } else {
    net_->train(was_training);
  }
}

CamMap compute_cam(const torch::Tensor& last_stage, const torch::Tensor& head_weights, int class_index) {
  require(last_stage.dim() == 3, "compute_cam expects [C,h,w] features");
  require(head_weights.dim() == 2 && head_weights.size(1) == last_stage.size(0),
          "head_weights must be [K, C] with C matching the feature channels");
  require(class_index >= 0 && class_index < head_weights.size(0), "class_index out of range");
  auto features = last_stage.detach().to(torch::kFloat64);
  auto weights = head_weights.detach().to(torch::kFloat64)[class_index];
  auto raw = torch::einsum("c,chw->hw", {weights, features});
  const double lo = raw.min().item<double>();
  const double hi = raw.max().item<double>();
  if (!(hi > lo)) return {torch::zeros_like(raw), true};
  return {(raw - lo) / (hi - lo), false};
}

CamMap compute_cam(const FeaturePyramid& pyramid, const torch::Tensor& head_weights, int class_index) {
  return compute_cam(pyramid.last_stage, head_weights, class_index);
}

}  // namespace xdistill
