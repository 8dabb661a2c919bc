#include "xdistill/reference.hpp"

#include <algorithm>
#include <cmath>

namespace xdistill::reference {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t c = 0; c < a.size(); ++c) {
    dot += a[c] * b[c];
    na += a[c] * a[c];
    nb += b[c] * b[c];
  }
  return dot / (std::max(std::sqrt(na), 1e-8) * std::max(std::sqrt(nb), 1e-8));
}

Matrix similarity(const Vectors& student, const Vectors& teacher) {
  Matrix s(student.size(), std::vector<double>(teacher.size()));
  for (size_t i = 0; i < student.size(); ++i)
    for (size_t j = 0; j < teacher.size(); ++j) s[i][j] = cosine(student[i], teacher[j]);
  return s;
}

Matrix teacher_given_student(const Matrix& s, const Matrix& r) {
  Matrix a(s.size(), std::vector<double>(s.empty() ? 0 : s[0].size(), 0.0));
  for (size_t pw = 0; pw < s.size(); ++pw) {
    double denom = 0.0;
    for (size_t kn = 0; kn < s[pw].size(); ++kn) denom += std::exp(s[pw][kn]) * r[pw][kn];
    if (denom == 0.0) continue;
    for (size_t pn = 0; pn < s[pw].size(); ++pn) a[pw][pn] = std::exp(s[pw][pn]) * r[pw][pn] / denom;
  }
  return a;
}

Matrix student_given_teacher(const Matrix& s, const Matrix& r) {
  Matrix a(s.size(), std::vector<double>(s.empty() ? 0 : s[0].size(), 0.0));
  if (s.empty()) return a;
  for (size_t pn = 0; pn < s[0].size(); ++pn) {
    double denom = 0.0;
    for (size_t kw = 0; kw < s.size(); ++kw) denom += std::exp(s[kw][pn]) * r[kw][pn];
    if (denom == 0.0) continue;
    for (size_t pw = 0; pw < s.size(); ++pw) a[pw][pn] = std::exp(s[pw][pn]) * r[pw][pn] / denom;
  }
  return a;
}

Matrix path_probability(const Matrix& s, const Matrix& r, bool bidirectional) {
  auto a = teacher_given_student(s, r);
  if (!bidirectional) return a;
  auto b = student_given_teacher(s, r);
  Matrix p = a;
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < a[i].size(); ++j) p[i][j] = a[i][j] + b[i][j] - a[i][j] * b[i][j];
  return p;
}

double distillation_loss(const Vectors& student, const Vectors& teacher, const Matrix& paths, bool l2) {
  double total = 0.0;
  int active = 0;
  for (size_t pw = 0; pw < student.size(); ++pw) {
    for (size_t pn = 0; pn < teacher.size(); ++pn) {
      double dist = 0.0;
      for (size_t c = 0; c < student[pw].size(); ++c) {
        const double d = student[pw][c] - teacher[pn][c];
        dist += l2 ? d * d : std::abs(d);
      }
      if (l2) dist = std::sqrt(dist);
      total += paths[pw][pn] * dist;
      if (paths[pw][pn] > 0.0) ++active;
    }
  }
  return total / std::max(active, 1);
}

double distillation_loss(const Vectors& student, const Vectors& teacher, const Matrix& relations,
                         bool bidirectional, bool l2) {
  auto paths = path_probability(similarity(student, teacher), relations, bidirectional);
  return distillation_loss(student, teacher, paths, l2);
}

Vectors from_chw(const std::vector<double>& chw, int channels, int height, int width) {
  Vectors v(static_cast<size_t>(height * width), std::vector<double>(static_cast<size_t>(channels)));
  for (int c = 0; c < channels; ++c)
    for (int p = 0; p < height * width; ++p) v[p][c] = chw[static_cast<size_t>(c * height * width + p)];
  return v;
}

std::vector<double> psr_weights(const std::vector<double>& image_chw, int height, int width, int y, int x) {
  const int plane = height * width;
  std::vector<double> raw(9, 0.0);
  double sum = 0.0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const int ky = y + dy;
      const int kx = x + dx;
      if (ky < 0 || ky >= height || kx < 0 || kx >= width) continue;
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = image_chw[c * plane + y * width + x] - image_chw[c * plane + ky * width + kx];
        d2 += d * d;
      }
      const double w = 1.0 - std::sqrt(d2) / std::sqrt(3.0);
      raw[(dy + 1) * 3 + (dx + 1)] = w;
      sum += w;
    }
  }
  for (double& w : raw) w /= sum;
  return raw;
}

std::vector<double> psr_refine(const std::vector<double>& map, const std::vector<double>& image_chw, int height,
                               int width, int iterations) {
  std::vector<double> current = map;
  for (int t = 0; t < iterations; ++t) {
    std::vector<double> next(current.size(), 0.0);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const auto lambda = psr_weights(image_chw, height, width, y, x);
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ky = y + dy;
            const int kx = x + dx;
            if (ky < 0 || ky >= height || kx < 0 || kx >= width) continue;
            acc += lambda[(dy + 1) * 3 + (dx + 1)] * current[ky * width + kx];
          }
        }
        next[y * width + x] = acc;
      }
    }
    current = std::move(next);
  }
  return current;
}

}  // namespace xdistill::reference
