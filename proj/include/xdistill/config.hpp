#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xdistill/affinity.hpp"
#include "xdistill/model.hpp"
#include "xdistill/srg.hpp"

namespace xdistill {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-8;
  int batch_size = 16;
  int epochs = 200;
  int input_size = 448;
  int T = 10;
  double tau1 = 0.3;
  double tau2 = 0.7;

  bool enable_add = true;
  bool enable_srg = true;
  bool enable_bi_a = true;
  bool enable_psr = true;
  // Turning both of these off yields the independent (CIC) baseline.
  bool enable_feature_distill = true;
  bool enable_logit = true;

  std::vector<int> stage_taps = {3, 4};
  std::uint64_t seed = 0;

  std::string backbone = "resnet18";
  std::string distance_norm = "l2";        // l2 | l1
  std::string affinity_gradient = "full";  // full | stop
  std::string logit_mode = "logits";       // logits | softmax
  std::string cam_class = "label";         // label | predicted (visualization only)
  bool hflip = false;
  int folds = 5;
  std::string pretrained;  // optional checkpoint for student/teacher init

  void validate() const;

  ClassifierSpec classifier_spec() const;
  AddOptions add_options() const;
  SrgOptions srg_options() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Strict: unknown keys and type mismatches raise ErrorCode::kConfig.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Applies "key=value" overrides. Dotted keys address nested objects; values
/// parse as JSON when possible and fall back to plain strings.
void apply_overrides(nlohmann::json& config, const std::vector<std::string>& overrides);

/// defaults <- file (optional) <- overrides, then validated.
TrainConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

}  // namespace xdistill
