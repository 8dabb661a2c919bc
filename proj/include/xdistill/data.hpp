#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace xdistill {

/// 3x3 projective map in continuous pixel coordinates (pixel centers at
/// integer + 0.5), row-major.
struct Homography {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return {}; }
  static Homography translation(double dx, double dy) { return {{1, 0, dx, 0, 1, dy, 0, 0, 1}}; }

  std::array<double, 2> apply(double x, double y) const;
  double determinant() const;
  Homography inverse() const;
  bool is_identity() const;
};

struct PairedSample {
  torch::Tensor image_w;  // [3,H,W] float32 in [0,1], student modality
  torch::Tensor image_n;  // [3,H,W] float32 in [0,1], teacher modality
  int label = 0;
  std::string patient_id;
  std::string pair_id;
  std::optional<Homography> gt_warp;  // maps w-coordinates to n-coordinates
  torch::Tensor gt_lesion_mask_w;     // [H,W] uint8 {0,1}; undefined when unknown

  int size() const { return static_cast<int>(image_w.size(-1)); }
};

struct SampleDescriptor {
  std::string pair_id;
  std::string patient_id;
  int label = 0;
  std::filesystem::path wli_path;
  std::filesystem::path nbi_path;
};

/// JSON-lines manifest: {pair_id, patient_id, label, wli_path, nbi_path}
/// per line. Relative image paths resolve against the manifest directory.
std::vector<SampleDescriptor> load_manifest(const std::filesystem::path& path);

/// Reads both images and resizes them to input_size x input_size. A
/// `synthetic.json` sidecar next to the manifest, when present, supplies
/// gt_warp and the lesion mask.
PairedSample load_pair(const SampleDescriptor& descriptor, int input_size,
                       const std::filesystem::path& manifest_dir = {});

std::vector<PairedSample> load_dataset(const std::filesystem::path& manifest, int input_size);

struct Fold {
  std::set<std::string> train_patients;
  std::set<std::string> test_patients;
};

struct FoldPlan {
  std::vector<Fold> folds;
};

/// Shuffles distinct patient ids with `seed` and deals them into k groups
/// whose sizes differ by at most one.
FoldPlan kfold_split(const std::vector<std::string>& patient_ids, int k, std::uint64_t seed);
FoldPlan kfold_split(const std::vector<SampleDescriptor>& descriptors, int k, std::uint64_t seed);
FoldPlan kfold_split(const std::vector<PairedSample>& samples, int k, std::uint64_t seed);

/// Sample indices on each side of a fold.
std::pair<std::vector<size_t>, std::vector<size_t>> fold_indices(const std::vector<PairedSample>& samples,
                                                                 const Fold& fold);

/// Maximum corner displacement, as a fraction of the image width, at
/// warp_magnitude 1.
inline constexpr double kMaxCornerJitter = 0.15;

Homography random_corner_homography(std::uint64_t seed, double warp_magnitude, int size);

/// Renders a paired sample: one textured scene with an elliptical lesion,
/// seen by the student modality with faint, noisy lesion texture and by the
/// teacher modality with strong texture after a random homography.
/// Class 1 lesions carry dark striations; class 0 lesions are smooth.
PairedSample generate_synthetic_pair(std::uint64_t seed, int label, double warp_magnitude, int size);

inline constexpr int kOutOfView = -1;

/// For each student cell center of a grid_h x grid_w feature map, the
/// flattened index of the teacher cell containing its warped location, or
/// kOutOfView.
std::vector<int> correspondence_oracle(const PairedSample& sample, int grid_h, int grid_w);

/// [grid_h, grid_w] bool: cells whose center lies inside the lesion mask.
torch::Tensor lesion_cells(const PairedSample& sample, int grid_h, int grid_w);

struct SyntheticDatasetOptions {
  int count = 64;
  double warp_magnitude = 0.5;
  std::uint64_t seed = 0;
  int size = 448;
  int pairs_per_patient = 2;
};

/// In-memory synthetic dataset; labels alternate per pair after a seeded
/// shuffle so classes stay balanced.
std::vector<PairedSample> generate_synthetic_dataset(const SyntheticDatasetOptions& options);

/// Writes PNGs (wli/, nbi/, mask/), manifest.jsonl and synthetic.json.
/// Returns the manifest path.
std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir,
                                              const SyntheticDatasetOptions& options);

/// [3,H,W] float in [0,1] <-> 8-bit RGB PNG.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);
torch::Tensor read_png(const std::filesystem::path& path, int size = 0);

}  // namespace xdistill
