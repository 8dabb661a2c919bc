#include "xdistill/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "xdistill/affinity.hpp"
#include "xdistill/data.hpp"
#include "xdistill/error.hpp"
#include "xdistill/model.hpp"

namespace xdistill {

namespace fs = std::filesystem;
using nlohmann::json;

double MetricsReport::auc_value() const {
  if (!auc) fail(ErrorCode::kUndefinedAuc, "AUC is undefined when labels contain a single class");
  return *auc;
}

double trapezoid_auc(const std::vector<RocPoint>& roc) {
  double area = 0.0;
  for (size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  return area;
}

namespace {

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels, int n_pos,
                                int n_neg) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> raw{{0.0, 0.0}};
  int tp = 0, fp = 0;
  for (size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == 1 ? tp : fp)++;
    raw.push_back({static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
  }
  // Drop interior points of straight runs; counts are exact rationals so an
  // integer cross product test is reliable.
  std::vector<RocPoint> out;
  std::vector<std::pair<long, long>> counts;
  for (const auto& p : raw) counts.push_back({std::lround(p.fpr * n_neg), std::lround(p.tpr * n_pos)});
  for (size_t i = 0; i < raw.size(); ++i) {
    if (i > 0 && i + 1 < raw.size()) {
      const long ax = counts[i].first - counts[i - 1].first, ay = counts[i].second - counts[i - 1].second;
      const long bx = counts[i + 1].first - counts[i].first, by = counts[i + 1].second - counts[i].second;
      if (ax * by - ay * bx == 0) continue;
    }
    out.push_back(raw[i]);
  }
  return out;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  require(scores.size() == labels.size(), "scores and labels must have the same length");
  if (scores.empty()) fail(ErrorCode::kEmptyInput, "no samples to evaluate");
  MetricsReport r;
  for (size_t i = 0; i < scores.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, "labels must be 0 or 1");
    require(std::isfinite(scores[i]) && scores[i] >= 0.0 && scores[i] <= 1.0, "scores must lie in [0,1]");
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      ++r.n_pos;
      predicted ? ++r.tp : ++r.fn;
    } else {
      ++r.n_neg;
      predicted ? ++r.fp : ++r.tn;
    }
  }
  auto ratio = [](int a, int b) { return b > 0 ? static_cast<double>(a) / b : 0.0; };
  r.acc = ratio(r.tp + r.tn, r.n_pos + r.n_neg);
  r.pre = ratio(r.tp, r.tp + r.fp);
  r.sen = ratio(r.tp, r.n_pos);
  r.spe = ratio(r.tn, r.n_neg);
  r.f1 = (r.pre + r.sen) > 0 ? 2 * r.pre * r.sen / (r.pre + r.sen) : 0.0;
  if (r.n_pos > 0 && r.n_neg > 0) {
    r.roc_points = roc_curve(scores, labels, r.n_pos, r.n_neg);
    r.auc = trapezoid_auc(r.roc_points);
  }
  return r;
}

FoldSummary aggregate_folds(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) fail(ErrorCode::kEmptyInput, "no fold reports to aggregate");
  FoldSummary s;
  s.folds = reports;
  int with_auc = 0;
  for (const auto& r : reports) {
    s.acc += r.acc;
    s.pre += r.pre;
    s.sen += r.sen;
    s.spe += r.spe;
    s.f1 += r.f1;
    if (r.auc) {
      s.auc += *r.auc;
      ++with_auc;
    }
  }
  const double k = static_cast<double>(reports.size());
  s.acc /= k;
  s.pre /= k;
  s.sen /= k;
  s.spe /= k;
  s.f1 /= k;
  s.auc = with_auc > 0 ? s.auc / with_auc : std::nan("");
  return s;
}

json metrics_json(const MetricsReport& r) {
  return {{"acc", r.acc},
          {"pre", r.pre},
          {"sen", r.sen},
          {"spe", r.spe},
          {"f1", r.f1},
          {"auc", r.auc ? json(*r.auc) : json(nullptr)},
          {"n_pos", r.n_pos},
          {"n_neg", r.n_neg}};
}

json summary_json(const FoldSummary& s) {
  json folds = json::object();
  for (size_t i = 0; i < s.folds.size(); ++i) folds[std::to_string(i)] = metrics_json(s.folds[i]);
  return {{"fold", folds},
          {"mean",
           {{"acc", s.acc},
            {"pre", s.pre},
            {"sen", s.sen},
            {"spe", s.spe},
            {"f1", s.f1},
            {"auc", std::isnan(s.auc) ? json(nullptr) : json(s.auc)}}}};
}

void export_roc(const MetricsReport& report, const fs::path& csv_path) {
  if (csv_path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(csv_path.parent_path(), ec);
  }
  std::ofstream out(csv_path);
  if (!out) fail(ErrorCode::kUnwritablePath, "cannot write " + csv_path.string());
  out << "fpr,tpr\n";
  out.precision(17);
  for (const auto& p : report.roc_points) out << p.fpr << "," << p.tpr << "\n";
  if (!out) fail(ErrorCode::kUnwritablePath, "cannot write " + csv_path.string());

  constexpr int kSize = 400, kMargin = 40;
  cv::Mat plot(kSize, kSize, CV_8UC3, cv::Scalar(255, 255, 255));
  const int span = kSize - 2 * kMargin;
  auto to_px = [&](const RocPoint& p) {
    return cv::Point(kMargin + static_cast<int>(std::lround(p.fpr * span)),
                     kSize - kMargin - static_cast<int>(std::lround(p.tpr * span)));
  };
  cv::rectangle(plot, cv::Point(kMargin, kMargin), cv::Point(kSize - kMargin, kSize - kMargin), cv::Scalar(0, 0, 0));
  cv::line(plot, to_px({0, 0}), to_px({1, 1}), cv::Scalar(180, 180, 180), 1, cv::LINE_AA);
  for (size_t i = 1; i < report.roc_points.size(); ++i)
    cv::line(plot, to_px(report.roc_points[i - 1]), to_px(report.roc_points[i]), cv::Scalar(200, 60, 20), 2,
             cv::LINE_AA);
  std::ostringstream label;
  label.precision(3);
  label << "AUC " << std::fixed << (report.auc ? *report.auc : std::nan(""));
  cv::putText(plot, label.str(), cv::Point(kMargin + 10, kMargin + 20), cv::FONT_HERSHEY_SIMPLEX, 0.5,
              cv::Scalar(0, 0, 0));
  cv::putText(plot, "FPR", cv::Point(kSize / 2 - 15, kSize - 12), cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0));
  cv::putText(plot, "TPR", cv::Point(4, kSize / 2), cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0));
  auto png = csv_path;
  png.replace_extension(".png");
  if (!cv::imwrite(png.string(), plot)) fail(ErrorCode::kUnwritablePath, "cannot write " + png.string());
}

std::vector<RocPoint> read_roc_csv(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) fail(ErrorCode::kMissingFile, "ROC file not found: " + csv_path.string());
  std::vector<RocPoint> points;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail(ErrorCode::kSchema, "malformed ROC line: " + line);
    points.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
  }
  return points;
}

namespace {

cv::Mat to_bgr(const torch::Tensor& image) {
  auto hwc = (image.detach().to(torch::kFloat32).clamp(0, 1) * 255.0).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

cv::Mat overlay(const cv::Mat& base, const torch::Tensor& cam) {
  auto c = (cam.detach().to(torch::kFloat32).clamp(0, 1) * 255.0).round().to(torch::kUInt8).contiguous();
  cv::Mat small(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)), CV_8UC1, c.data_ptr<uint8_t>());
  cv::Mat big, colored, blended;
  cv::resize(small, big, base.size(), 0, 0, cv::INTER_LINEAR);
  cv::applyColorMap(big, colored, cv::COLORMAP_JET);
  cv::addWeighted(base, 0.5, colored, 0.5, 0.0, blended);
  return blended;
}

}  // namespace

std::pair<int, int> export_cam_overlays(const std::vector<PairedSample>& samples, const Classifier& student,
                                        const Classifier& teacher, const fs::path& png_path,
                                        bool use_predicted_class) {
  if (samples.empty()) fail(ErrorCode::kEmptyInput, "no samples to visualize");
  std::vector<cv::Mat> rows;
  torch::NoGradGuard no_grad;
  ClassifierNet net = student.net();
  const bool was_training = net->is_training();
  net->eval();
  for (const auto& s : samples) {
    auto sp = student.extract(s.image_w);
    auto tp = teacher.extract(s.image_n);
    const int cls_s = use_predicted_class ? static_cast<int>(sp.logits.argmax().item<int64_t>()) : s.label;
    const int cls_t = use_predicted_class ? static_cast<int>(tp.logits.argmax().item<int64_t>()) : s.label;
    auto cam_s = compute_cam(sp, student.head_weights(), cls_s);
    auto cam_t = compute_cam(tp, teacher.head_weights(), cls_t);
    const cv::Mat w = to_bgr(s.image_w);
    const cv::Mat n = to_bgr(s.image_n);
    cv::Mat row;
    cv::hconcat(std::vector<cv::Mat>{w, overlay(w, cam_s.map), overlay(n, cam_t.map)}, row);
    rows.push_back(row);
  }
  net->train(was_training);
  cv::Mat grid;
  cv::vconcat(rows, grid);
  if (png_path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(png_path.parent_path(), ec);
  }
  if (!cv::imwrite(png_path.string(), grid)) fail(ErrorCode::kUnwritablePath, "cannot write " + png_path.string());
  return {static_cast<int>(rows.size()), 3};
}

CorrespondenceScore correspondence_accuracy(const Classifier& student, const Classifier& teacher,
                                            const std::vector<PairedSample>& samples,
                                            const std::vector<size_t>& indices, int stage, int tolerance) {
  torch::NoGradGuard no_grad;
  const bool was_training = student.training();
  ClassifierNet net = student.net();
  net->eval();
  CorrespondenceScore score;
  for (auto i : indices) {
    const auto& s = samples.at(i);
    auto fw = student.extract(s.image_w).levels.at(stage);
    auto fn = teacher.extract(s.image_n).levels.at(stage);
    const int gh = static_cast<int>(fw.size(1));
    const int gw = static_cast<int>(fw.size(2));
    auto sim = cosine_similarity_matrix(fw, fn);
    auto affinity = directed_affinity(sim, torch::ones_like(sim), Direction::kTeacherGivenStudent);
    auto best = affinity.argmax(1);
    const auto truth = correspondence_oracle(s, gh, gw);
    auto lesion = lesion_cells(s, gh, gw).flatten();
    for (int p = 0; p < gh * gw; ++p) {
      if (!lesion[p].item<bool>() || truth[static_cast<size_t>(p)] == kOutOfView) continue;
      const int q = static_cast<int>(best[p].item<int64_t>());
      const int t = truth[static_cast<size_t>(p)];
      const int dy = std::abs(q / gw - t / gw);
      const int dx = std::abs(q % gw - t % gw);
      ++score.cells;
      if (std::max(dy, dx) <= tolerance) ++score.hits;
    }
  }
  net->train(was_training);
  return score;
}

}  // namespace xdistill
