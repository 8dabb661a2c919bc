#include "cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xdistill/affinity.hpp"
#include "xdistill/config.hpp"
#include "xdistill/data.hpp"
#include "xdistill/error.hpp"
#include "xdistill/eval.hpp"
#include "xdistill/model.hpp"
#include "xdistill/objective.hpp"
#include "xdistill/pipeline.hpp"
#include "xdistill/reference.hpp"
#include "xdistill/srg.hpp"

namespace xdistill::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDeterminismNote =
    "single-process CPU execution with seeded initialization and shuffling; loss logs reproduce bit-for-bit "
    "on the same build and thread count, across builds only up to floating-point reduction order";

struct Common {
  std::string config_path;
  std::string output_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

// Records artifacts as they are produced and writes manifest.json.
class RunRecord {
 public:
  RunRecord(std::string command, fs::path dir) : command_(std::move(command)), dir_(std::move(dir)) {}

  void add(const fs::path& artifact, const std::string& kind) {
    artifacts_.push_back({{"path", fs::relative(artifact, dir_).string()}, {"kind", kind}});
  }
  void set(const std::string& key, json value) { extra_[key] = std::move(value); }

  void write() const {
    json j = {{"command", command_}, {"artifacts", artifacts_}, {"determinism", kDeterminismNote}};
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    std::ofstream out(dir_ / "manifest.json");
    if (!out) fail(ErrorCode::kUnwritablePath, "cannot write " + (dir_ / "manifest.json").string());
    out << j.dump(2) << "\n";
  }

 private:
  std::string command_;
  fs::path dir_;
  json artifacts_ = json::array();
  json extra_ = json::object();
};

void prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kUnwritablePath, "cannot create output directory " + dir.string() + ": " + ec.message());
}

TrainConfig resolve(const Common& common, const fs::path& out, RunRecord& record) {
  auto overrides = common.overrides;
  if (common.seed) overrides.push_back("seed=" + std::to_string(*common.seed));
  TrainConfig config = resolve_config(common.config_path, overrides);
  prepare_output(out);
  json snapshot;
  to_json(snapshot, config);
  std::ofstream(out / "resolved_config.json") << snapshot.dump(2) << "\n";
  record.add(out / "resolved_config.json", "resolved_config");
  return config;
}

void add_common(CLI::App* cmd, Common& common, bool require_output = true) {
  cmd->add_option("--config", common.config_path, "JSON config file (keys mirror the training config)");
  auto* out = cmd->add_option("--out,--output-dir", common.output_dir, "Output directory");
  if (require_output) out->required();
  cmd->add_option("--seed", common.seed, "Seed (overrides the config value)");
  cmd->add_option("overrides", common.overrides, "Config overrides as key=value");
}

std::vector<size_t> select_indices(const std::vector<PairedSample>& samples, const TrainConfig& config,
                                   std::optional<int> fold, bool test_side) {
  std::vector<size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  if (!fold) return all;
  auto plan = kfold_split(samples, config.folds, config.seed);
  if (*fold < 0 || *fold >= static_cast<int>(plan.folds.size()))
    fail(ErrorCode::kConfig, "fold index out of range");
  auto [train_idx, test_idx] = fold_indices(samples, plan.folds[static_cast<size_t>(*fold)]);
  return test_side ? test_idx : train_idx;
}

std::vector<int> labels_of(const std::vector<PairedSample>& samples, const std::vector<size_t>& indices) {
  std::vector<int> labels;
  for (auto i : indices) labels.push_back(samples[i].label);
  return labels;
}

// ------------------------------------------------------------- commands

int cmd_gen_data(const Common& common, int n, double warp, int size, int pairs_per_patient) {
  const fs::path out = common.output_dir;
  RunRecord record("gen-data", out);
  auto config = resolve(common, out, record);
  SyntheticDatasetOptions options;
  options.count = n;
  options.warp_magnitude = warp;
  options.seed = config.seed;
  options.size = size > 0 ? size : config.input_size;
  options.pairs_per_patient = pairs_per_patient;
  if (n <= 0) fail(ErrorCode::kConfig, "--n must be positive");
  if (warp < 0 || warp > 1) fail(ErrorCode::kConfig, "--warp must lie in [0,1]");
  if (options.size % Classifier::kMaxStride != 0) fail(ErrorCode::kConfig, "--size must be a multiple of 32");
  const auto manifest = write_synthetic_dataset(out, options);
  record.add(manifest, "manifest");
  record.add(out / "synthetic.json", "warp_sidecar");
  record.add(out / "wli", "images");
  record.add(out / "nbi", "images");
  record.add(out / "mask", "masks");
  record.set("pairs", n);
  record.write();
  std::cout << json{{"manifest", manifest.string()}, {"pairs", n}}.dump() << "\n";
  return kOk;
}

int cmd_train(const Common& common, const std::string& data, const std::string& teacher_path,
              std::optional<int> fold, bool teacher_role) {
  const fs::path out = common.output_dir;
  RunRecord record(teacher_role ? "train-teacher" : "train-student", out);
  auto config = resolve(common, out, record);
  const auto samples = load_dataset(data, config.input_size);
  const auto indices = select_indices(samples, config, fold, /*test_side=*/false);
  Classifier trainee(config.classifier_spec(), /*trainable=*/true, config.seed);
  if (!config.pretrained.empty()) trainee.load_weights(config.pretrained);
  std::ofstream log(out / "loss.jsonl");
  record.add(out / "loss.jsonl", "loss_log");
  TrainResult result;
  if (teacher_role) {
    result = train(samples, indices, trainee, nullptr, TrainRole::kTeacher, config, &log);
  } else {
    if (teacher_path.empty()) fail(ErrorCode::kMissingFile, "--teacher checkpoint is required");
    auto teacher = Classifier::load(teacher_path, /*trainable=*/false);
    if (teacher.spec().stage_taps != config.stage_taps || teacher.spec().backbone_id != config.backbone)
      fail(ErrorCode::kConfig, "teacher checkpoint backbone/stage_taps differ from the config");
    const auto before = teacher.checksum();
    result = train(samples, indices, trainee, &teacher, TrainRole::kStudent, config, &log);
    const auto after = teacher.checksum();
    record.set("teacher_checksum_before", std::to_string(before));
    record.set("teacher_checksum_after", std::to_string(after));
    if (before != after) fail(ErrorCode::kContractViolation, "teacher parameters changed during training");
  }
  const auto ckpt = out / (teacher_role ? "teacher.pt" : "student.pt");
  trainee.save(ckpt);
  record.add(ckpt, "checkpoint");
  record.add(sidecar_path(ckpt), "checkpoint_sidecar");
  record.set("steps", result.steps.size());
  record.write();
  return kOk;
}

int cmd_evaluate(const Common& common, const std::string& data, const std::string& checkpoint,
                 std::optional<int> fold, bool table2) {
  const fs::path out = common.output_dir;
  RunRecord record("evaluate", out);
  auto config = resolve(common, out, record);
  const auto samples = load_dataset(data, config.input_size);
  json metrics;
  if (!checkpoint.empty()) {
    auto student = Classifier::load(checkpoint, /*trainable=*/true);
    const auto indices = select_indices(samples, config, fold, /*test_side=*/true);
    auto report = compute_metrics(predict_scores(student, samples, indices), labels_of(samples, indices));
    auto summary = aggregate_folds({report});
    metrics = summary_json(summary);
    if (report.auc) {
      export_roc(report, out / "roc.csv");
      record.add(out / "roc.csv", "roc_csv");
      record.add(out / "roc.png", "roc_plot");
    }
  } else {
    auto plan = kfold_split(samples, config.folds, config.seed);
    std::vector<Variant> variants;
    if (table2) {
      variants = component_ablation_variants();
    } else {
      variants.push_back({"configured", [](TrainConfig&) {}});
    }
    auto result = cross_validate(samples, config, plan, variants, out / "folds", &std::cerr);
    metrics = json::object();
    for (const auto& [name, summary] : result.variants) metrics[name] = summary_json(summary);
    if (!table2) metrics = metrics["configured"];
    record.add(out / "folds", "fold_artifacts");
  }
  std::ofstream(out / "metrics.json") << metrics.dump(2) << "\n";
  record.add(out / "metrics.json", "metrics");
  record.write();
  std::cout << metrics.dump() << "\n";
  return kOk;
}

int cmd_oracle_check(const Common& common, std::uint64_t seed, int grid, int channels) {
  if (grid <= 0 || channels <= 0) fail(ErrorCode::kConfig, "--grid and --channels must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution relation(0.6);
  const int positions = grid * grid;
  std::vector<double> fw(static_cast<size_t>(channels * positions)), fn(fw.size());
  for (auto& v : fw) v = normal(rng);
  for (auto& v : fn) v = normal(rng);
  reference::Matrix r(static_cast<size_t>(positions), std::vector<double>(static_cast<size_t>(positions)));
  for (auto& row : r)
    for (auto& v : row) v = relation(rng) ? 1.0 : 0.0;

  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto tw = torch::tensor(fw, opts).view({channels, grid, grid});
  auto tn = torch::tensor(fn, opts).view({channels, grid, grid});
  std::vector<double> flat_r;
  for (const auto& row : r) flat_r.insert(flat_r.end(), row.begin(), row.end());
  auto tr = torch::tensor(flat_r, opts).view({positions, positions});

  const auto vw = reference::from_chw(fw, channels, grid, grid);
  const auto vn = reference::from_chw(fn, channels, grid, grid);
  const double brute = reference::distillation_loss(vw, vn, r, /*bidirectional=*/true, /*l2=*/true);
  const double vectorized = add_loss_single_scale(tw, tn, tr).item<double>();
  auto field = affinity_field(tw, tn, tr);
  const auto s = reference::similarity(vw, vn);
  const auto a = reference::teacher_given_student(s, r);
  const auto b = reference::student_given_teacher(s, r);
  const auto p = reference::path_probability(s, r, true);
  double max_dev = 0.0;
  auto ta = field.teacher_given_student.accessor<double, 2>();
  auto tb = field.student_given_teacher.accessor<double, 2>();
  auto tp = field.path_probability.accessor<double, 2>();
  for (int i = 0; i < positions; ++i)
    for (int j = 0; j < positions; ++j)
      max_dev = std::max({max_dev, std::abs(ta[i][j] - a[i][j]), std::abs(tb[i][j] - b[i][j]),
                          std::abs(tp[i][j] - p[i][j])});
  const double abs_dev = std::abs(brute - vectorized);
  const double rel_dev = abs_dev / std::max(std::abs(brute), 1e-12);
  json j = {{"seed", seed},
            {"grid", grid},
            {"channels", channels},
            {"bruteforce_loss", brute},
            {"vectorized_loss", vectorized},
            {"abs_deviation", abs_dev},
            {"rel_deviation", rel_dev},
            {"max_affinity_deviation", max_dev},
            {"pass", rel_dev < 1e-5 && max_dev < 1e-5}};
  if (!common.output_dir.empty()) {
    const fs::path out = common.output_dir;
    RunRecord record("oracle-check", out);
    resolve(common, out, record);
    std::ofstream(out / "oracle.json") << j.dump(2) << "\n";
    record.add(out / "oracle.json", "oracle_report");
    record.write();
  }
  std::cout << j.dump() << "\n";
  return j["pass"].get<bool>() ? kOk : kInternal;
}

torch::Tensor mask_to_rgb(const torch::Tensor& mask) {
  // background dark blue, unsure gray, polyp yellow
  auto m = mask.to(torch::kInt64);
  auto rgb = torch::zeros({3, m.size(0), m.size(1)}, torch::kFloat32);
  const std::array<std::array<float, 3>, 3> colors{{{0.1f, 0.1f, 0.5f}, {0.95f, 0.85f, 0.1f}, {0.5f, 0.5f, 0.5f}}};
  for (int c = 0; c < 3; ++c)
    for (int v = 0; v < 3; ++v) rgb[c].masked_fill_(m == v, colors[static_cast<size_t>(v)][static_cast<size_t>(c)]);
  return rgb;
}

torch::Tensor panel(const torch::Tensor& t, int size) {
  auto x = t.dim() == 2 ? t.unsqueeze(0).expand({3, t.size(0), t.size(1)}) : t;
  auto up = torch::nn::functional::interpolate(
      x.to(torch::kFloat32).unsqueeze(0),
      torch::nn::functional::InterpolateFuncOptions().size(std::vector<int64_t>{size, size}).mode(torch::kNearest));
  return up.squeeze(0).clamp(0, 1);
}

int cmd_visualize(const Common& common, const std::string& data, const std::string& student_path,
                  const std::string& teacher_path, int limit) {
  const fs::path out = common.output_dir;
  RunRecord record("visualize", out);
  auto config = resolve(common, out, record);
  if (student_path.empty() || teacher_path.empty())
    fail(ErrorCode::kMissingFile, "--student and --teacher checkpoints are required");
  auto samples = load_dataset(data, config.input_size);
  if (limit > 0 && static_cast<int>(samples.size()) > limit) samples.resize(static_cast<size_t>(limit));
  auto student = Classifier::load(student_path, /*trainable=*/true);
  student.set_training(false);
  auto teacher = Classifier::load(teacher_path, /*trainable=*/false);
  auto options = config.srg_options();
  options.enabled = true;
  const bool predicted = config.cam_class == "predicted";
  for (const auto& s : samples) {
    int cls = s.label;
    if (predicted) {
      torch::NoGradGuard no_grad;
      cls = static_cast<int>(student.extract(s.image_w).logits.argmax().item<int64_t>());
    }
    auto maps = build_relations(s.image_w, s.image_n, cls, student, teacher, options);
    const int size = s.size();
    const auto& deepest = maps.scales.rbegin()->second;
    auto row_w = torch::cat({s.image_w, panel(maps.cam_raw_w, size), panel(maps.cam_refined_w, size),
                             panel(mask_to_rgb(deepest.mask_w), size)},
                            2);
    auto row_n = torch::cat({s.image_n, panel(maps.cam_raw_n, size), panel(maps.cam_refined_n, size),
                             panel(mask_to_rgb(deepest.mask_n), size)},
                            2);
    const auto path = out / "srg" / (s.pair_id + ".png");
    write_png(path, torch::cat({row_w, row_n}, 1));
    record.add(path, "srg_panel");
  }
  const auto grid = out / "cam_overlays.png";
  export_cam_overlays(samples, student, teacher, grid, predicted);
  record.add(grid, "cam_overlay_grid");
  record.write();
  return kOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
      return kConfigError;
    case ErrorCode::kMissingFile:
    case ErrorCode::kDanglingPath:
    case ErrorCode::kSchema:
    case ErrorCode::kInvalidLabel:
    case ErrorCode::kDuplicateKey:
    case ErrorCode::kMissingWarp:
    case ErrorCode::kTooFewPatients:
    case ErrorCode::kEmptyInput:
    case ErrorCode::kUnwritablePath:
    case ErrorCode::kRejectedInput:
      return kMissingInput;
    case ErrorCode::kDivergence:
      return kDivergence;
    case ErrorCode::kContractViolation:
    case ErrorCode::kUndefinedAuc:
      return kInternal;
  }
  return kInternal;
}

int report_error(const std::string& kind, const std::string& message, int exit_code, const std::string& out_dir) {
  json record = {{"error", kind}, {"message", message}, {"exit_code", exit_code}};
  std::cerr << record.dump() << "\n";
  if (!out_dir.empty() && fs::is_directory(out_dir)) std::ofstream(fs::path(out_dir) / "error.json") << record.dump(2) << "\n";
  return exit_code;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Alignment-free dense distillation toolkit"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic paired dataset");
  int n = 64, size = 0, pairs_per_patient = 2;
  double warp = 0.5;
  add_common(gen, common);
  gen->add_option("--n", n, "Number of pairs");
  gen->add_option("--warp", warp, "Warp magnitude in [0,1]");
  gen->add_option("--size", size, "Image size (defaults to input_size)");
  gen->add_option("--pairs-per-patient", pairs_per_patient, "Pairs sharing a patient id");

  std::string data, teacher_path, student_path, checkpoint;
  std::optional<int> fold;
  auto* train_teacher = app.add_subcommand("train-teacher", "Train the teacher-modality classifier");
  add_common(train_teacher, common);
  train_teacher->add_option("--data", data, "manifest.jsonl")->required();
  train_teacher->add_option("--fold", fold, "Train on the training patients of this fold only");

  auto* train_student = app.add_subcommand("train-student", "Distill a student from a frozen teacher");
  add_common(train_student, common);
  train_student->add_option("--data", data, "manifest.jsonl")->required();
  train_student->add_option("--teacher", teacher_path, "Teacher checkpoint")->required();
  train_student->add_option("--fold", fold, "Train on the training patients of this fold only");

  bool table2 = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint or run k-fold cross-validation");
  add_common(evaluate, common);
  evaluate->add_option("--data", data, "manifest.jsonl")->required();
  evaluate->add_option("--checkpoint", checkpoint, "Student checkpoint; omit to cross-validate");
  evaluate->add_option("--fold", fold, "Evaluate on the test patients of this fold only");
  evaluate->add_flag("--ablation", table2, "Cross-validate the component ablation variants");

  std::uint64_t oracle_seed = 0;
  int grid = 4, channels = 8;
  auto* oracle = app.add_subcommand("oracle-check", "Compare vectorized and brute-force distillation loss");
  add_common(oracle, common, /*require_output=*/false);
  oracle->add_option("--grid", grid, "Feature map side length");
  oracle->add_option("--channels", channels, "Channel count");

  int limit = 8;
  auto* visualize = app.add_subcommand("visualize", "Write CAM / refined CAM / mask panels");
  add_common(visualize, common);
  visualize->add_option("--data", data, "manifest.jsonl")->required();
  visualize->add_option("--student", student_path, "Student checkpoint")->required();
  visualize->add_option("--teacher", teacher_path, "Teacher checkpoint")->required();
  visualize->add_option("--limit", limit, "Maximum number of samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return report_error("config", e.what(), kConfigError, "");
  }

  try {
    if (*gen) return cmd_gen_data(common, n, warp, size, pairs_per_patient);
    if (*train_teacher) return cmd_train(common, data, "", fold, /*teacher_role=*/true);
    if (*train_student) return cmd_train(common, data, teacher_path, fold, /*teacher_role=*/false);
    if (*evaluate) return cmd_evaluate(common, data, checkpoint, fold, table2);
    if (*oracle) {
      oracle_seed = common.seed.value_or(0);
      return cmd_oracle_check(common, oracle_seed, grid, channels);
    }
    if (*visualize) return cmd_visualize(common, data, student_path, teacher_path, limit);
  } catch (const Error& e) {
    return report_error(std::string(to_string(e.code())), e.what(), exit_code_for(e.code()), common.output_dir);
  } catch (const c10::Error& e) {
    return report_error("internal", e.what_without_backtrace(), kInternal, common.output_dir);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kInternal, common.output_dir);
  }
  return report_error("config", "unknown command", kConfigError, "");
}

}  // namespace xdistill::cli
