#include "xdistill/config.hpp"

#include <fstream>

#include "xdistill/error.hpp"

namespace xdistill {

using nlohmann::json;

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kConfig, what);
  };
  check(learning_rate > 0, "learning_rate must be positive");
  check(weight_decay >= 0, "weight_decay must be non-negative");
  check(batch_size > 0, "batch_size must be positive");
  check(epochs >= 0, "epochs must be non-negative");
  check(input_size > 0 && input_size % Classifier::kMaxStride == 0, "input_size must be a positive multiple of 32");
  check(T >= 0, "T must be non-negative");
  check(0.0 < tau1 && tau1 < tau2 && tau2 < 1.0, "thresholds must satisfy 0 < tau1 < tau2 < 1");
  check(distance_norm == "l2" || distance_norm == "l1", "distance_norm must be l1 or l2");
  check(affinity_gradient == "full" || affinity_gradient == "stop", "affinity_gradient must be full or stop");
  check(logit_mode == "logits" || logit_mode == "softmax", "logit_mode must be logits or softmax");
  check(cam_class == "label" || cam_class == "predicted", "cam_class must be label or predicted");
  check(folds >= 2, "folds must be at least 2");
  check(!stage_taps.empty(), "stage_taps must not be empty");
  for (size_t i = 0; i < stage_taps.size(); ++i)
    check(stage_taps[i] >= 1 && stage_taps[i] <= 4 && (i == 0 || stage_taps[i] > stage_taps[i - 1]),
          "stage_taps must be strictly increasing stage indices in [1,4]");
  backbone_layout(backbone);
}

ClassifierSpec TrainConfig::classifier_spec() const {
  ClassifierSpec spec;
  spec.backbone_id = backbone;
  spec.stage_taps = stage_taps;
  spec.input_size = input_size;
  return spec;
}

AddOptions TrainConfig::add_options() const {
  AddOptions options;
  options.bidirectional = enable_bi_a;
  options.norm = distance_norm == "l1" ? DistanceNorm::kL1 : DistanceNorm::kL2;
  options.gradient = affinity_gradient == "stop" ? AffinityGradient::kStopAffinity : AffinityGradient::kFull;
  return options;
}

SrgOptions TrainConfig::srg_options() const {
  SrgOptions options;
  options.enabled = enable_srg;
  options.iterations = enable_psr ? T : 0;
  options.tau1 = tau1;
  options.tau2 = tau2;
  return options;
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate},
           {"weight_decay", c.weight_decay},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"input_size", c.input_size},
           {"T", c.T},
           {"tau1", c.tau1},
           {"tau2", c.tau2},
           {"enable_add", c.enable_add},
           {"enable_srg", c.enable_srg},
           {"enable_bi_a", c.enable_bi_a},
           {"enable_psr", c.enable_psr},
           {"enable_feature_distill", c.enable_feature_distill},
           {"enable_logit", c.enable_logit},
           {"stage_taps", c.stage_taps},
           {"seed", c.seed},
           {"backbone", c.backbone},
           {"distance_norm", c.distance_norm},
           {"affinity_gradient", c.affinity_gradient},
           {"logit_mode", c.logit_mode},
           {"cam_class", c.cam_class},
           {"hflip", c.hflip},
           {"folds", c.folds},
           {"pretrained", c.pretrained}};
}

void from_json(const json& j, TrainConfig& c) {
  if (!j.is_object()) fail(ErrorCode::kConfig, "config must be a JSON object");
  json defaults;
  to_json(defaults, c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) fail(ErrorCode::kConfig, "unknown config key '" + key + "'");
  }
  auto get = [&j](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      const auto& v = j.at(key);
      using T = std::decay_t<decltype(field)>;
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected string");
      }
      field = v.get<T>();
    } catch (const std::exception& e) {
      fail(ErrorCode::kConfig, std::string("bad value for '") + key + "': " + e.what());
    }
  };
  get("learning_rate", c.learning_rate);
  get("weight_decay", c.weight_decay);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("input_size", c.input_size);
  get("T", c.T);
  get("tau1", c.tau1);
  get("tau2", c.tau2);
  get("enable_add", c.enable_add);
  get("enable_srg", c.enable_srg);
  get("enable_bi_a", c.enable_bi_a);
  get("enable_psr", c.enable_psr);
  get("enable_feature_distill", c.enable_feature_distill);
  get("enable_logit", c.enable_logit);
  get("stage_taps", c.stage_taps);
  get("seed", c.seed);
  get("backbone", c.backbone);
  get("distance_norm", c.distance_norm);
  get("affinity_gradient", c.affinity_gradient);
  get("logit_mode", c.logit_mode);
  get("cam_class", c.cam_class);
  get("hflip", c.hflip);
  get("folds", c.folds);
  get("pretrained", c.pretrained);
}

void apply_overrides(json& config, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) fail(ErrorCode::kConfig, "override must be key=value: '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) value = text;
    std::string pointer;
    size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) fail(ErrorCode::kConfig, "empty path segment in override '" + item + "'");
      pointer += "/" + part;
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    config[json::json_pointer(pointer)] = value;
  }
}

TrainConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json merged;
  to_json(merged, TrainConfig{});
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) fail(ErrorCode::kMissingFile, "config file not found: " + file.string());
    json from_file = json::parse(in, nullptr, /*allow_exceptions=*/false, /*ignore_comments=*/true);
    if (from_file.is_discarded()) fail(ErrorCode::kConfig, "config file is not valid JSON: " + file.string());
    if (!from_file.is_object()) fail(ErrorCode::kConfig, "config file must hold a JSON object");
    merged.update(from_file);
  }
  apply_overrides(merged, overrides);
  TrainConfig config;
  from_json(merged, config);
  config.validate();
  return config;
}

}  // namespace xdistill
