#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "support.hpp"
#include "xdistill/data.hpp"

using namespace xdistill;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("xdistill_data_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_lines(const fs::path& dir, const std::vector<std::string>& lines) {
  auto path = dir / "manifest.jsonl";
  std::ofstream out(path);
  for (const auto& l : lines) out << l << "\n";
  return path;
}

void touch_images(const fs::path& dir) {
  write_png(dir / "a.png", torch::rand({3, 32, 32}));
  write_png(dir / "b.png", torch::rand({3, 32, 32}));
}

std::string entry(const std::string& pair, const std::string& patient, const std::string& label,
                  const std::string& wli = "a.png") {
  return R"({"pair_id":")" + pair + R"(","patient_id":")" + patient + R"(","label":)" + label +
         R"(,"wli_path":")" + wli + R"(","nbi_path":"b.png"})";
}

}  // namespace

TEST(Homography, IdentityAndTranslation) {
  auto id = Homography::identity();
  EXPECT_TRUE(id.is_identity());
  auto p = Homography::translation(3, -2).apply(1.5, 4.5);
  EXPECT_DOUBLE_EQ(p[0], 4.5);
  EXPECT_DOUBLE_EQ(p[1], 2.5);
}

TEST(Homography, InverseRoundTrip) {
  auto h = random_corner_homography(9, 1.0, 224);
  auto inv = h.inverse();
  for (double x : {0.5, 100.0, 223.5}) {
    auto q = inv.apply(h.apply(x, 57.0)[0], h.apply(x, 57.0)[1]);
    EXPECT_NEAR(q[0], x, 1e-9);
    EXPECT_NEAR(q[1], 57.0, 1e-9);
  }
}

TEST(Homography, ZeroWarpIsExactIdentity) {
  EXPECT_TRUE(random_corner_homography(5, 0.0, 448).is_identity());
  auto s = generate_synthetic_pair(5, 1, 0.0, 64);
  EXPECT_TRUE(s.gt_warp->is_identity());
}

TEST(Homography, CornerJitterBounded) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto h = random_corner_homography(seed, 0.5, 200);
    for (auto [x, y] : std::vector<std::pair<double, double>>{{0, 0}, {200, 0}, {0, 200}, {200, 200}}) {
      auto q = h.apply(x, y);
      EXPECT_LE(std::abs(q[0] - x), 0.5 * kMaxCornerJitter * 200 + 1e-9);
      EXPECT_LE(std::abs(q[1] - y), 0.5 * kMaxCornerJitter * 200 + 1e-9);
    }
  }
}

TEST(Correspondence, TranslationByOneCell) {
  PairedSample s;
  s.image_w = torch::zeros({3, 64, 64});
  s.image_n = s.image_w;
  s.gt_warp = Homography::translation(16, 0);
  auto idx = correspondence_oracle(s, 4, 4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_EQ(idx[static_cast<size_t>(i * 4 + j)], i * 4 + j + 1);
    EXPECT_EQ(idx[static_cast<size_t>(i * 4 + 3)], kOutOfView);
  }
}

TEST(Correspondence, IdentityMapsToSelf) {
  auto s = generate_synthetic_pair(1, 0, 0.0, 64);
  auto idx = correspondence_oracle(s, 2, 2);
  EXPECT_EQ(idx, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Correspondence, MissingWarp) {
  PairedSample s;
  s.image_w = torch::zeros({3, 32, 32});
  EXPECT_TRUE(raises(ErrorCode::kMissingWarp, [&] { correspondence_oracle(s, 1, 1); }));
}

TEST(Synthetic, DeterministicAndInRange) {
  auto a = generate_synthetic_pair(42, 1, 0.5, 64);
  auto b = generate_synthetic_pair(42, 1, 0.5, 64);
  EXPECT_TRUE(torch::equal(a.image_w, b.image_w));
  EXPECT_TRUE(torch::equal(a.image_n, b.image_n));
  EXPECT_GE(a.image_w.min().item<float>(), 0.0f);
  EXPECT_LE(a.image_n.max().item<float>(), 1.0f);
  EXPECT_GT(a.gt_lesion_mask_w.sum().item<int64_t>(), 0);
  EXPECT_FALSE(torch::equal(a.image_w, generate_synthetic_pair(43, 1, 0.5, 64).image_w));
}

TEST(Synthetic, ZeroWarpSharesGeometry) {
  // Both modalities render the same lesion footprint when unwarped: the
  // darkest region of each image overlaps the lesion mask.
  auto s = generate_synthetic_pair(3, 0, 0.0, 96);
  auto mask = s.gt_lesion_mask_w.to(torch::kBool);
  auto lum_n = s.image_n.mean(0);
  auto inside = lum_n.masked_select(mask).mean().item<float>();
  auto outside = lum_n.masked_select(~mask).mean().item<float>();
  EXPECT_NE(inside, outside);
}

TEST(Synthetic, DatasetBalancedAndGrouped) {
  SyntheticDatasetOptions o;
  o.count = 10;
  o.size = 32;
  o.pairs_per_patient = 2;
  auto samples = generate_synthetic_dataset(o);
  int positives = 0;
  for (const auto& s : samples) positives += s.label;
  EXPECT_EQ(positives, 5);
  EXPECT_EQ(samples[0].patient_id, samples[1].patient_id);
  EXPECT_NE(samples[1].patient_id, samples[2].patient_id);
}

TEST(Synthetic, WriteAndReload) {
  auto dir = scratch_dir("roundtrip");
  SyntheticDatasetOptions o;
  o.count = 4;
  o.size = 64;
  auto manifest = write_synthetic_dataset(dir, o);
  auto original = generate_synthetic_dataset(o);
  auto loaded = load_dataset(manifest, 64);
  ASSERT_EQ(loaded.size(), 4u);
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(loaded[i].label, original[i].label);
    EXPECT_LE((loaded[i].image_w - original[i].image_w).abs().max().item<float>(), 0.5f / 255 + 1e-6f);
    ASSERT_TRUE(loaded[i].gt_warp.has_value());
    for (int k = 0; k < 9; ++k) EXPECT_NEAR(loaded[i].gt_warp->m[static_cast<size_t>(k)], original[i].gt_warp->m[static_cast<size_t>(k)], 1e-12);
    EXPECT_TRUE(torch::equal(loaded[i].gt_lesion_mask_w, original[i].gt_lesion_mask_w));
  }
}

TEST(Synthetic, WarpRescaledOnResize) {
  auto dir = scratch_dir("rescale");
  SyntheticDatasetOptions o;
  o.count = 2;
  o.size = 64;
  o.warp_magnitude = 1.0;
  auto manifest = write_synthetic_dataset(dir, o);
  auto native = load_dataset(manifest, 64);
  auto doubled = load_dataset(manifest, 128);
  auto p = native[0].gt_warp->apply(10.0, 20.0);
  auto q = doubled[0].gt_warp->apply(20.0, 40.0);
  EXPECT_NEAR(q[0], 2 * p[0], 1e-9);
  EXPECT_NEAR(q[1], 2 * p[1], 1e-9);
}

TEST(Manifest, ErrorsAreDistinct) {
  auto dir = scratch_dir("manifest");
  touch_images(dir);
  EXPECT_TRUE(raises(ErrorCode::kMissingFile, [&] { load_manifest(dir / "none.jsonl"); }));
  auto ok = write_lines(dir, {entry("p1", "a", "0"), "", entry("p2", "a", "1")});
  EXPECT_EQ(load_manifest(ok).size(), 2u);
  EXPECT_EQ(load_manifest(ok)[0].wli_path, dir / "a.png");
  auto schema = write_lines(dir, {entry("p1", "a", "0"), R"({"pair_id":"x"})"});
  try {
    load_manifest(schema);
    FAIL() << "expected a schema error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchema);
    EXPECT_NE(std::string(e.what()).find("entry 1"), std::string::npos);
  }
  EXPECT_TRUE(raises(ErrorCode::kSchema, [&] { load_manifest(write_lines(dir, {"not json"})); }));
  EXPECT_TRUE(raises(ErrorCode::kSchema, [&] { load_manifest(write_lines(dir, {entry("p", "a", "\"1\"")})); }));
  EXPECT_TRUE(raises(ErrorCode::kInvalidLabel, [&] { load_manifest(write_lines(dir, {entry("p", "a", "2")})); }));
  EXPECT_TRUE(raises(ErrorCode::kDuplicateKey,
                     [&] { load_manifest(write_lines(dir, {entry("p", "a", "0"), entry("p", "a", "1")})); }));
  // same pair id under another patient is allowed
  EXPECT_EQ(load_manifest(write_lines(dir, {entry("p", "a", "0"), entry("p", "b", "1")})).size(), 2u);
  EXPECT_TRUE(raises(ErrorCode::kDanglingPath,
                     [&] { load_manifest(write_lines(dir, {entry("p", "a", "0", "missing.png")})); }));
}

TEST(Folds, PatientDisjointAndCovering) {
  std::vector<std::string> ids;
  for (int i = 0; i < 23; ++i) ids.push_back("pt" + std::to_string(i % 11));
  auto plan = kfold_split(ids, 5, 3);
  ASSERT_EQ(plan.folds.size(), 5u);
  std::set<std::string> tested;
  for (const auto& f : plan.folds) {
    for (const auto& p : f.test_patients) {
      EXPECT_EQ(f.train_patients.count(p), 0u);
      EXPECT_TRUE(tested.insert(p).second) << p << " tested twice";
    }
    EXPECT_EQ(f.test_patients.size() + f.train_patients.size(), 11u);
    EXPECT_GE(f.test_patients.size(), 2u);
    EXPECT_LE(f.test_patients.size(), 3u);
  }
  EXPECT_EQ(tested.size(), 11u);
}

TEST(Folds, SeededAndOrderIndependent) {
  std::vector<std::string> a{"x", "y", "z", "w", "v", "u"};
  std::vector<std::string> b{"u", "v", "w", "x", "y", "z"};
  auto pa = kfold_split(a, 3, 7);
  auto pb = kfold_split(b, 3, 7);
  for (size_t i = 0; i < 3; ++i) EXPECT_EQ(pa.folds[i].test_patients, pb.folds[i].test_patients);
}

TEST(Folds, TooFewPatients) {
  EXPECT_TRUE(raises(ErrorCode::kTooFewPatients, [] { kfold_split(std::vector<std::string>{"a", "a", "b"}, 3, 0); }));
}

TEST(Folds, IndicesFollowPatients) {
  SyntheticDatasetOptions o;
  o.count = 12;
  o.size = 32;
  o.pairs_per_patient = 3;
  auto samples = generate_synthetic_dataset(o);
  auto plan = kfold_split(samples, 2, 1);
  auto [train, test] = fold_indices(samples, plan.folds[0]);
  EXPECT_EQ(train.size() + test.size(), 12u);
  for (auto i : test) EXPECT_TRUE(plan.folds[0].test_patients.count(samples[i].patient_id));
  for (auto i : train) EXPECT_TRUE(plan.folds[0].train_patients.count(samples[i].patient_id));
}

TEST(Lesion, CellsFromMask) {
  PairedSample s;
  s.image_w = torch::zeros({3, 8, 8});
  s.gt_lesion_mask_w = torch::zeros({8, 8}, torch::kUInt8);
  s.gt_lesion_mask_w.slice(0, 0, 4).slice(1, 4, 8).fill_(1);
  auto cells = lesion_cells(s, 2, 2);
  EXPECT_TRUE(torch::equal(cells, torch::tensor({{false, true}, {false, false}})));
}
