#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "support.hpp"
#include "xdistill/affinity.hpp"
#include "xdistill/reference.hpp"

using namespace xdistill;

namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

// [C,1,2] map from two position vectors.
torch::Tensor two_positions(std::array<double, 2> a, std::array<double, 2> b) {
  return torch::tensor({a[0], b[0], a[1], b[1]}, kF64).view({2, 1, 2});
}

}  // namespace

TEST(Affinity, CosineOfFortyFiveDegrees) {
  auto fw = torch::tensor({1.0, 0.0}, kF64).view({2, 1, 1});
  auto fn = torch::tensor({1.0, 1.0}, kF64).view({2, 1, 1});
  EXPECT_NEAR(cosine_similarity_matrix(fw, fn).item<double>(), std::sqrt(2.0) / 2.0, 1e-12);
}

TEST(Affinity, CosineOfZeroVectorIsZero) {
  auto fw = torch::zeros({3, 1, 1}, kF64);
  auto fn = torch::ones({3, 1, 1}, kF64);
  EXPECT_EQ(cosine_similarity_matrix(fw, fn).item<double>(), 0.0);
}

TEST(Affinity, SoftmaxOfOneAndZero) {
  auto s = torch::tensor({{1.0, 0.0}}, kF64);
  auto a = directed_affinity(s, torch::ones_like(s), Direction::kTeacherGivenStudent);
  EXPECT_NEAR(a[0][0].item<double>(), 0.7310585786, 1e-9);
  EXPECT_NEAR(a[0][1].item<double>(), 0.2689414214, 1e-9);
}

TEST(Affinity, MaskedEntriesAndEmptyRowsAreExactZeros) {
  auto s = torch::rand({4, 4}, kF64) * 2 - 1;
  auto r = torch::tensor({{1, 0, 1, 0}, {0, 0, 0, 0}, {1, 1, 1, 1}, {0, 0, 0, 1}}, kF64);
  auto a = directed_affinity(s, r, Direction::kTeacherGivenStudent);
  EXPECT_TRUE((a.masked_select(r == 0) == 0).all().item<bool>());
  EXPECT_TRUE((a[1] == 0).all().item<bool>());
  EXPECT_NEAR(a[0].sum().item<double>(), 1.0, 1e-12);
  EXPECT_EQ(a[3][3].item<double>(), 1.0);
  auto b = directed_affinity(s, r, Direction::kStudentGivenTeacher);
  EXPECT_NEAR(b.sum(0)[0].item<double>(), 1.0, 1e-12);
  EXPECT_TRUE((b.masked_select(r == 0) == 0).all().item<bool>());
}

TEST(Affinity, DirectionsMatchReference) {
  std::mt19937 rng(5);
  std::normal_distribution<double> g;
  std::vector<double> w(3 * 6), n(3 * 6);
  for (auto& v : w) v = g(rng);
  for (auto& v : n) v = g(rng);
  reference::Matrix r(6, std::vector<double>(6));
  std::bernoulli_distribution coin(0.5);
  for (auto& row : r)
    for (auto& v : row) v = coin(rng);
  auto vw = reference::from_chw(w, 3, 2, 3);
  auto vn = reference::from_chw(n, 3, 2, 3);
  auto s_ref = reference::similarity(vw, vn);
  auto a_ref = reference::teacher_given_student(s_ref, r);
  auto b_ref = reference::student_given_teacher(s_ref, r);
  std::vector<double> flat;
  for (auto& row : r) flat.insert(flat.end(), row.begin(), row.end());
  auto field = affinity_field(torch::tensor(w, kF64).view({3, 2, 3}), torch::tensor(n, kF64).view({3, 2, 3}),
                              torch::tensor(flat, kF64).view({6, 6}));
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      EXPECT_NEAR(field.similarity[i][j].item<double>(), s_ref[i][j], 1e-12);
      EXPECT_NEAR(field.teacher_given_student[i][j].item<double>(), a_ref[i][j], 1e-12);
      EXPECT_NEAR(field.student_given_teacher[i][j].item<double>(), b_ref[i][j], 1e-12);
    }
  }
}

TEST(Affinity, PathProbabilityUnion) {
  auto a = torch::tensor({0.0, 0.5, 1.0, 0.2}, kF64);
  auto b = torch::tensor({0.0, 0.5, 0.3, 0.0}, kF64);
  auto p = path_probability(a, b);
  EXPECT_DOUBLE_EQ(p[0].item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(p[1].item<double>(), 0.75);
  EXPECT_DOUBLE_EQ(p[2].item<double>(), 1.0);
  EXPECT_DOUBLE_EQ(p[3].item<double>(), 0.2);
}

TEST(Affinity, PathProbabilityRejectsOutOfRange) {
  auto a = torch::tensor({1.5}, kF64);
  auto b = torch::tensor({0.0}, kF64);
  EXPECT_TRUE(raises(ErrorCode::kContractViolation, [&] { path_probability(a, b); }));
}

TEST(Affinity, TwoPositionLossByHand) {
  // S = [[1,1],[0,0]]; A(n|w) is uniform, A(w|n) puts sigma(1) on the
  // first student position. Only the second student position is at
  // distance sqrt(2) from the teacher.
  auto fw = two_positions({1, 0}, {0, 1});
  auto fn = two_positions({1, 0}, {1, 0});
  const double b1 = 1.0 / (std::exp(1.0) + 1.0);
  const double p1 = 0.5 + b1 - 0.5 * b1;
  const double expected = (2.0 * p1 * std::sqrt(2.0)) / 4.0;
  auto loss = add_loss_single_scale(fw, fn, torch::ones({2, 2}, kF64));
  EXPECT_NEAR(loss.item<double>(), expected, 1e-12);
}

TEST(Affinity, UnidirectionalUsesTeacherGivenStudentOnly) {
  auto fw = two_positions({1, 0}, {0, 1});
  auto fn = two_positions({1, 0}, {1, 0});
  AddOptions options;
  options.bidirectional = false;
  // P = 0.5 everywhere; two pairs at distance sqrt(2) out of four.
  auto loss = add_loss_single_scale(fw, fn, torch::ones({2, 2}, kF64), options);
  EXPECT_NEAR(loss.item<double>(), 2 * 0.5 * std::sqrt(2.0) / 4.0, 1e-12);
}

TEST(Affinity, L1DistanceOption) {
  auto fw = two_positions({1, 0}, {0, 1});
  auto fn = two_positions({1, 0}, {1, 0});
  AddOptions options;
  options.bidirectional = false;
  options.norm = DistanceNorm::kL1;
  auto loss = add_loss_single_scale(fw, fn, torch::ones({2, 2}, kF64), options);
  EXPECT_NEAR(loss.item<double>(), 2 * 0.5 * 2.0 / 4.0, 1e-12);
}

TEST(Affinity, AllMaskedGivesZeroLossWithZeroGradient) {
  auto fw = torch::randn({4, 2, 2}, kF64).requires_grad_(true);
  auto fn = torch::randn({4, 2, 2}, kF64);
  auto loss = add_loss_single_scale(fw, fn, torch::zeros({4, 4}, kF64));
  EXPECT_EQ(loss.item<double>(), 0.0);
  loss.backward();
  EXPECT_TRUE(fw.grad().defined());
  EXPECT_EQ(fw.grad().abs().sum().item<double>(), 0.0);
}

TEST(Affinity, TeacherReceivesNoGradient) {
  auto fw = torch::randn({4, 2, 2}, kF64).requires_grad_(true);
  auto fn = torch::randn({4, 2, 2}, kF64).requires_grad_(true);
  add_loss_single_scale(fw, fn, torch::ones({4, 4}, kF64)).backward();
  EXPECT_FALSE(fn.grad().defined());
  EXPECT_GT(fw.grad().abs().sum().item<double>(), 0.0);
}

TEST(Affinity, StopAffinityChangesGradientNotValue) {
  auto base = torch::randn({3, 2, 2}, kF64);
  auto fn = torch::randn({3, 2, 2}, kF64);
  auto r = torch::ones({4, 4}, kF64);
  AddOptions stop;
  stop.gradient = AffinityGradient::kStopAffinity;
  auto a = base.clone().requires_grad_(true);
  auto b = base.clone().requires_grad_(true);
  auto la = add_loss_single_scale(a, fn, r);
  auto lb = add_loss_single_scale(b, fn, r, stop);
  EXPECT_NEAR(la.item<double>(), lb.item<double>(), 1e-14);
  la.backward();
  lb.backward();
  EXPECT_GT((a.grad() - b.grad()).abs().max().item<double>(), 1e-8);
}

TEST(Affinity, BatchedEqualsMeanOfItems) {
  auto fw = torch::randn({2, 3, 2, 2}, kF64);
  auto fn = torch::randn({2, 3, 2, 2}, kF64);
  auto r = (torch::rand({2, 4, 4}, kF64) > 0.4).to(torch::kFloat64);
  auto batched = add_loss_single_scale(fw, fn, r).item<double>();
  auto separate =
      (add_loss_single_scale(fw[0], fn[0], r[0]) + add_loss_single_scale(fw[1], fn[1], r[1])).item<double>() / 2;
  EXPECT_NEAR(batched, separate, 1e-12);
}

TEST(Affinity, MultiScaleIsMeanOverTaps) {
  FeaturePyramid s, t;
  s.levels[3] = torch::randn({4, 2, 2}, kF64);
  t.levels[3] = torch::randn({4, 2, 2}, kF64);
  s.levels[4] = torch::randn({4, 1, 1}, kF64);
  t.levels[4] = torch::randn({4, 1, 1}, kF64);
  std::map<int, torch::Tensor> r{{3, torch::ones({4, 4}, kF64)}, {4, torch::ones({1, 1}, kF64)}};
  auto total = add_loss_all_scales(s, t, r).item<double>();
  auto expected = (add_loss_single_scale(s.levels[3], t.levels[3], r[3]) +
                   add_loss_single_scale(s.levels[4], t.levels[4], r[4]))
                      .item<double>() /
                  2;
  EXPECT_NEAR(total, expected, 1e-12);
}

TEST(Affinity, RejectsNonFiniteFeatures) {
  auto fw = torch::full({2, 1, 1}, std::nan(""), kF64);
  auto fn = torch::ones({2, 1, 1}, kF64);
  EXPECT_TRUE(raises(ErrorCode::kRejectedInput, [&] { cosine_similarity_matrix(fw, fn); }));
}
