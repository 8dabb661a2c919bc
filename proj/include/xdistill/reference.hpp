#pragma once

// Direct loop evaluations of the affinity, distillation-loss and PSR
// formulas. These are deliberately written without tensors or
// vectorization and serve as independent oracles for the tensor code.

#include <vector>

namespace xdistill::reference {

/// Rows are positions, columns channels.
using Vectors = std::vector<std::vector<double>>;
using Matrix = std::vector<std::vector<double>>;

double cosine(const std::vector<double>& a, const std::vector<double>& b);

Matrix similarity(const Vectors& student, const Vectors& teacher);

/// A(p_n|p_w) at [p_w][p_n].
Matrix teacher_given_student(const Matrix& s, const Matrix& r);
/// A(p_w|p_n), also stored at [p_w][p_n].
Matrix student_given_teacher(const Matrix& s, const Matrix& r);

Matrix path_probability(const Matrix& s, const Matrix& r, bool bidirectional);

/// Loss for a given path-probability matrix. `l2` selects the Euclidean
/// distance; otherwise L1.
double distillation_loss(const Vectors& student, const Vectors& teacher, const Matrix& paths, bool l2 = true);

/// Full pipeline: similarity -> affinities -> union -> normalized loss.
double distillation_loss(const Vectors& student, const Vectors& teacher, const Matrix& relations,
                         bool bidirectional, bool l2);

/// [C][H][W] feature layout to position-major vectors.
Vectors from_chw(const std::vector<double>& chw, int channels, int height, int width);

/// Color-similarity weights of the 3x3 clipped window around (y,x); entries
/// for out-of-image neighbors are 0. Index (dy+1)*3 + (dx+1).
std::vector<double> psr_weights(const std::vector<double>& image_chw, int height, int width, int y, int x);

/// T sequential refinement passes over a row-major [h*w] map.
std::vector<double> psr_refine(const std::vector<double>& map, const std::vector<double>& image_chw, int height,
                               int width, int iterations);

}  // namespace xdistill::reference
