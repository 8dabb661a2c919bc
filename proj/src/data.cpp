#include "xdistill/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "xdistill/error.hpp"

namespace xdistill {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- homography

std::array<double, 2> Homography::apply(double x, double y) const {
  const double w = m[6] * x + m[7] * y + m[8];
  return {(m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w};
}

double Homography::determinant() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
  const double det = determinant();
  require(std::abs(det) > 1e-12, "homography is singular");
  Homography inv;
  inv.m = {(m[4] * m[8] - m[5] * m[7]) / det, (m[2] * m[7] - m[1] * m[8]) / det, (m[1] * m[5] - m[2] * m[4]) / det,
           (m[5] * m[6] - m[3] * m[8]) / det, (m[0] * m[8] - m[2] * m[6]) / det, (m[2] * m[3] - m[0] * m[5]) / det,
           (m[3] * m[7] - m[4] * m[6]) / det, (m[1] * m[6] - m[0] * m[7]) / det, (m[0] * m[4] - m[1] * m[3]) / det};
  return inv;
}

bool Homography::is_identity() const { return m == Homography::identity().m; }

Homography random_corner_homography(std::uint64_t seed, double warp_magnitude, int size) {
  require(warp_magnitude >= 0.0 && warp_magnitude <= 1.0, "warp_magnitude must lie in [0,1]");
  if (warp_magnitude == 0.0) return Homography::identity();
  std::mt19937_64 rng(seed);
  const double limit = warp_magnitude * kMaxCornerJitter * size;
  std::uniform_real_distribution<double> jitter(-limit, limit);
  const double s = size;
  const std::array<std::array<double, 2>, 4> src{{{0, 0}, {s, 0}, {s, s}, {0, s}}};
  cv::Mat a(8, 8, CV_64F, cv::Scalar(0));
  cv::Mat b(8, 1, CV_64F);
  for (int i = 0; i < 4; ++i) {
    const double x = src[i][0], y = src[i][1];
    const double u = x + jitter(rng), v = y + jitter(rng);
    double* r0 = a.ptr<double>(2 * i);
    double* r1 = a.ptr<double>(2 * i + 1);
    r0[0] = x, r0[1] = y, r0[2] = 1, r0[6] = -u * x, r0[7] = -u * y;
    r1[3] = x, r1[4] = y, r1[5] = 1, r1[6] = -v * x, r1[7] = -v * y;
    b.at<double>(2 * i) = u;
    b.at<double>(2 * i + 1) = v;
  }
  cv::Mat h;
  cv::solve(a, b, h, cv::DECOMP_LU);
  Homography out;
  for (int i = 0; i < 8; ++i) out.m[i] = h.at<double>(i);
  out.m[8] = 1.0;
  require(std::abs(out.determinant()) > 1e-6, "generated homography is not invertible");
  return out;
}

// ----------------------------------------------------------------- synthetic

namespace {

struct Wave {
  double fx, fy, phase, amplitude;
};

// Scene parameters shared by both modalities. All fields are analytic
// functions of continuous normalized coordinates so that the warped view
// can be rendered exactly.
struct Scene {
  int label = 0;
  std::vector<Wave> shading;  // low-frequency tissue shading
  std::vector<Wave> vessels;  // class-independent background texture
  double cx, cy, rx, ry, angle;
  double stripe_freq, stripe_angle, stripe_phase;
  double mottle_fx, mottle_fy, mottle_phase;
  std::array<double, 3> lesion_tint_w;

  double lesion(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    const double r = std::sqrt(u * u + v * v);
    return std::clamp((1.1 - r) / 0.2, 0.0, 1.0);
  }

  double shade(double x, double y) const {
    double acc = 0.0;
    for (const auto& w : shading) acc += w.amplitude * std::sin(2 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
    return acc;
  }

  double vessel(double x, double y) const {
    double acc = 0.0;
    for (const auto& w : vessels) {
      const double s = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
      acc += w.amplitude * std::pow(s, 6.0);
    }
    return acc;
  }

  // Lesion surface pattern in [0,1]; 1 = dark line.
  double pattern(double x, double y) const {
    if (label == 1) {
      const double t = x * std::cos(stripe_angle) + y * std::sin(stripe_angle);
      const double s = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * stripe_freq * t + stripe_phase);
      return std::pow(s, 3.0);
    }
    const double s = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * (mottle_fx * x + mottle_fy * y) + mottle_phase);
    return 0.25 * s;
  }
};

Scene make_scene(std::mt19937_64& rng, int label) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  Scene scene;
  scene.label = label;
  for (int i = 0; i < 3; ++i)
    scene.shading.push_back({uniform(-3, 3), uniform(-3, 3), uniform(0, 2 * std::numbers::pi), uniform(0.02, 0.05)});
  for (int i = 0; i < 2; ++i)
    scene.vessels.push_back({uniform(-6, 6), uniform(-6, 6), uniform(0, 2 * std::numbers::pi), uniform(0.05, 0.1)});
  scene.cx = uniform(0.32, 0.68);
  scene.cy = uniform(0.32, 0.68);
  scene.rx = uniform(0.17, 0.24);
  scene.ry = uniform(0.17, 0.24);
  scene.angle = uniform(0, std::numbers::pi);
  scene.stripe_freq = uniform(12, 16);
  scene.stripe_angle = uniform(0, std::numbers::pi);
  scene.stripe_phase = uniform(0, 2 * std::numbers::pi);
  scene.mottle_fx = uniform(-3, 3);
  scene.mottle_fy = uniform(-3, 3);
  scene.mottle_phase = uniform(0, 2 * std::numbers::pi);
  scene.lesion_tint_w = {uniform(0.78, 0.9), uniform(0.3, 0.4), uniform(0.3, 0.4)};
  return scene;
}

// White-light photometry: pink mucosa, reddish lesion, faint lesion pattern.
std::array<double, 3> white_light(const Scene& scene, double x, double y) {
  const double m = scene.lesion(x, y);
  const double shade = scene.shade(x, y);
  const double vessel = 0.3 * scene.vessel(x, y);
  const double pattern = 0.08 * scene.pattern(x, y);
  const std::array<double, 3> mucosa{0.86, 0.58, 0.52};
  std::array<double, 3> rgb;
  for (int c = 0; c < 3; ++c) {
    const double base = (1 - m) * mucosa[c] + m * scene.lesion_tint_w[c];
    rgb[c] = base + shade - vessel - m * pattern;
  }
  return rgb;
}

// Narrow-band photometry: teal mucosa, brown lesion, strongly enhanced
// lesion pattern.
std::array<double, 3> narrow_band(const Scene& scene, double x, double y) {
  const double m = scene.lesion(x, y);
  const double shade = scene.shade(x, y);
  const double vessel = scene.vessel(x, y);
  const double pattern = 0.45 * scene.pattern(x, y);
  const std::array<double, 3> mucosa{0.42, 0.58, 0.55};
  const std::array<double, 3> lesion{0.62, 0.42, 0.3};
  const std::array<double, 3> line_color{0.55, 0.4, 0.3};
  std::array<double, 3> rgb;
  for (int c = 0; c < 3; ++c) {
    const double base = (1 - m) * mucosa[c] + m * lesion[c];
    rgb[c] = base + shade - 0.6 * vessel - m * pattern * line_color[c] / 0.55;
  }
  return rgb;
}

constexpr double kNoiseW = 0.04;
constexpr double kNoiseN = 0.01;

}  // namespace

PairedSample generate_synthetic_pair(std::uint64_t seed, int label, double warp_magnitude, int size) {
  require(label == 0 || label == 1, "label must be 0 or 1");
  require(warp_magnitude >= 0.0 && warp_magnitude <= 1.0, "warp_magnitude must lie in [0,1]");
  require(size > 0, "size must be positive");
  std::mt19937_64 rng(seed);
  const Scene scene = make_scene(rng, label);
  const Homography warp = random_corner_homography(rng(), warp_magnitude, size);
  const Homography to_w = warp.inverse();
  std::mt19937_64 noise_rng(rng());
  std::normal_distribution<double> noise(0.0, 1.0);

  auto image_w = torch::empty({3, size, size}, torch::kFloat32);
  auto image_n = torch::empty({3, size, size}, torch::kFloat32);
  auto mask = torch::empty({size, size}, torch::kUInt8);
  auto iw = image_w.accessor<float, 3>();
  auto in = image_n.accessor<float, 3>();
  auto im = mask.accessor<uint8_t, 2>();
  const double s = size;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const auto w_rgb = white_light(scene, px / s, py / s);
      const auto src = to_w.apply(px, py);
      const auto n_rgb = narrow_band(scene, src[0] / s, src[1] / s);
      for (int c = 0; c < 3; ++c) {
        iw[c][y][x] = static_cast<float>(std::clamp(w_rgb[c] + kNoiseW * noise(noise_rng), 0.0, 1.0));
        in[c][y][x] = static_cast<float>(std::clamp(n_rgb[c] + kNoiseN * noise(noise_rng), 0.0, 1.0));
      }
      im[y][x] = scene.lesion(px / s, py / s) >= 0.5 ? 1 : 0;
    }
  }
  PairedSample sample;
  sample.image_w = image_w;
  sample.image_n = image_n;
  sample.label = label;
  sample.pair_id = "syn-" + std::to_string(seed);
  sample.patient_id = "syn-patient-" + std::to_string(seed);
  sample.gt_warp = warp;
  sample.gt_lesion_mask_w = mask;
  return sample;
}

std::vector<int> correspondence_oracle(const PairedSample& sample, int grid_h, int grid_w) {
  if (!sample.gt_warp) fail(ErrorCode::kMissingWarp, "sample " + sample.pair_id + " has no ground-truth warp");
  require(grid_h > 0 && grid_w > 0, "grid must be non-empty");
  const double height = static_cast<double>(sample.image_w.size(-2));
  const double width = static_cast<double>(sample.image_w.size(-1));
  const double cell_h = height / grid_h, cell_w = width / grid_w;
  std::vector<int> index(static_cast<size_t>(grid_h * grid_w), kOutOfView);
  for (int i = 0; i < grid_h; ++i) {
    for (int j = 0; j < grid_w; ++j) {
      const auto q = sample.gt_warp->apply((j + 0.5) * cell_w, (i + 0.5) * cell_h);
      if (q[0] < 0 || q[0] >= width || q[1] < 0 || q[1] >= height) continue;
      const int ti = std::min(grid_h - 1, static_cast<int>(q[1] / cell_h));
      const int tj = std::min(grid_w - 1, static_cast<int>(q[0] / cell_w));
      index[static_cast<size_t>(i * grid_w + j)] = ti * grid_w + tj;
    }
  }
  return index;
}

torch::Tensor lesion_cells(const PairedSample& sample, int grid_h, int grid_w) {
  require(sample.gt_lesion_mask_w.defined(), "sample has no lesion mask");
  const auto h = sample.gt_lesion_mask_w.size(0);
  const auto w = sample.gt_lesion_mask_w.size(1);
  auto mask = sample.gt_lesion_mask_w.accessor<uint8_t, 2>();
  auto cells = torch::zeros({grid_h, grid_w}, torch::kBool);
  auto out = cells.accessor<bool, 2>();
  for (int i = 0; i < grid_h; ++i) {
    for (int j = 0; j < grid_w; ++j) {
      const auto y = static_cast<int64_t>((i + 0.5) * static_cast<double>(h) / grid_h);
      const auto x = static_cast<int64_t>((j + 0.5) * static_cast<double>(w) / grid_w);
      out[i][j] = mask[std::min(y, h - 1)][std::min(x, w - 1)] != 0;
    }
  }
  return cells;
}

std::vector<PairedSample> generate_synthetic_dataset(const SyntheticDatasetOptions& options) {
  require(options.count > 0, "count must be positive");
  require(options.pairs_per_patient > 0, "pairs_per_patient must be positive");
  std::vector<int> labels(static_cast<size_t>(options.count));
  for (int i = 0; i < options.count; ++i) labels[static_cast<size_t>(i)] = i % 2;
  std::mt19937_64 rng(options.seed);
  std::shuffle(labels.begin(), labels.end(), rng);
  std::vector<PairedSample> samples;
  samples.reserve(labels.size());
  for (int i = 0; i < options.count; ++i) {
    const std::uint64_t pair_seed = options.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    auto sample = generate_synthetic_pair(pair_seed, labels[static_cast<size_t>(i)], options.warp_magnitude, options.size);
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "pair%05d", i);
    sample.pair_id = buffer;
    std::snprintf(buffer, sizeof buffer, "patient%04d", i / options.pairs_per_patient);
    sample.patient_id = buffer;
    samples.push_back(std::move(sample));
  }
  return samples;
}

// ------------------------------------------------------------------- images

void write_png(const fs::path& path, const torch::Tensor& image) {
  require(image.dim() == 3 && image.size(0) == 3, "write_png expects [3,H,W]");
  auto hwc = (image.detach().to(torch::kFloat32).clamp(0, 1) * 255.0 + 0.5)
                 .floor()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) fail(ErrorCode::kUnwritablePath, "cannot write " + path.string());
}

torch::Tensor read_png(const fs::path& path, int size) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) fail(ErrorCode::kDanglingPath, "cannot read image " + path.string());
  if (size > 0 && (bgr.rows != size || bgr.cols != size)) {
    cv::Mat resized;
    const bool shrink = bgr.rows > size || bgr.cols > size;
    cv::resize(bgr, resized, cv::Size(size, size), 0, 0, shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
    bgr = resized;
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

namespace {

torch::Tensor read_mask(const fs::path& path, int size) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) fail(ErrorCode::kDanglingPath, "cannot read mask " + path.string());
  if (size > 0 && (gray.rows != size || gray.cols != size)) {
    cv::Mat resized;
    cv::resize(gray, resized, cv::Size(size, size), 0, 0, cv::INTER_NEAREST);
    gray = resized;
  }
  auto t = torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kUInt8).clone();
  return (t > 127).to(torch::kUInt8);
}

void write_mask(const fs::path& path, const torch::Tensor& mask) {
  auto m = (mask.to(torch::kUInt8) * 255).contiguous();
  cv::Mat gray(static_cast<int>(m.size(0)), static_cast<int>(m.size(1)), CV_8UC1, m.data_ptr<uint8_t>());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), gray)) fail(ErrorCode::kUnwritablePath, "cannot write " + path.string());
}

}  // namespace

// ----------------------------------------------------------------- manifest

std::vector<SampleDescriptor> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingFile, "manifest not found: " + path.string());
  const fs::path base = path.parent_path();
  std::vector<SampleDescriptor> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  int index = -1;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++index;
    const std::string where = "manifest entry " + std::to_string(index);
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) fail(ErrorCode::kSchema, where + ": not a JSON object");
    SampleDescriptor d;
    try {
      d.pair_id = j.at("pair_id").get<std::string>();
      d.patient_id = j.at("patient_id").get<std::string>();
      if (!j.at("label").is_number_integer()) throw std::invalid_argument("label must be an integer");
      d.label = j.at("label").get<int>();
      d.wli_path = j.at("wli_path").get<std::string>();
      d.nbi_path = j.at("nbi_path").get<std::string>();
    } catch (const std::exception& e) {
      fail(ErrorCode::kSchema, where + ": " + e.what());
    }
    if (d.label != 0 && d.label != 1)
      fail(ErrorCode::kInvalidLabel, where + ": label must be 0 or 1, got " + std::to_string(d.label));
    if (!seen.insert({d.patient_id, d.pair_id}).second)
      fail(ErrorCode::kDuplicateKey, where + ": duplicate (patient_id, pair_id) = (" + d.patient_id + ", " +
                                         d.pair_id + ")");
    for (auto* p : {&d.wli_path, &d.nbi_path}) {
      if (p->is_relative()) *p = base / *p;
      if (!fs::exists(*p)) fail(ErrorCode::kDanglingPath, where + ": image not found: " + p->string());
    }
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

json load_sidecar(const fs::path& manifest_dir) {
  const auto path = manifest_dir / "synthetic.json";
  if (manifest_dir.empty() || !fs::exists(path)) return json::object();
  std::ifstream in(path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorCode::kSchema, "bad sidecar " + path.string());
  return j;
}

PairedSample load_pair_with_sidecar(const SampleDescriptor& d, int input_size, const json& sidecar,
                                    const fs::path& manifest_dir) {
  PairedSample sample;
  sample.image_w = read_png(d.wli_path, input_size);
  sample.image_n = read_png(d.nbi_path, input_size);
  sample.label = d.label;
  sample.patient_id = d.patient_id;
  sample.pair_id = d.pair_id;
  if (sidecar.contains(d.pair_id)) {
    const auto& entry = sidecar.at(d.pair_id);
    try {
      const auto values = entry.at("gt_warp").get<std::vector<double>>();
      const double native = entry.value("size", static_cast<double>(input_size));
      if (values.size() != 9) throw std::invalid_argument("gt_warp must have 9 entries");
      Homography h;
      std::copy(values.begin(), values.end(), h.m.begin());
      // Rescale from the native pixel frame to the loaded resolution.
      const double k = static_cast<double>(input_size) / native;
      if (k != 1.0) {
        const Homography scale{{k, 0, 0, 0, k, 0, 0, 0, 1}};
        const Homography unscale{{1 / k, 0, 0, 0, 1 / k, 0, 0, 0, 1}};
        auto mul = [](const Homography& a, const Homography& b) {
          Homography r;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
              double acc = 0;
              for (int t = 0; t < 3; ++t) acc += a.m[i * 3 + t] * b.m[t * 3 + j];
              r.m[i * 3 + j] = acc;
            }
          return r;
        };
        h = mul(scale, mul(h, unscale));
      }
      sample.gt_warp = h;
      if (entry.contains("mask_path")) {
        fs::path mask_path = entry.at("mask_path").get<std::string>();
        if (mask_path.is_relative()) mask_path = manifest_dir / mask_path;
        sample.gt_lesion_mask_w = read_mask(mask_path, input_size);
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::kSchema, "bad sidecar entry for " + d.pair_id + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      fail(ErrorCode::kSchema, "bad sidecar entry for " + d.pair_id + ": " + e.what());
    }
  }
  return sample;
}

}  // namespace

PairedSample load_pair(const SampleDescriptor& descriptor, int input_size, const fs::path& manifest_dir) {
  return load_pair_with_sidecar(descriptor, input_size, load_sidecar(manifest_dir), manifest_dir);
}

std::vector<PairedSample> load_dataset(const fs::path& manifest, int input_size) {
  const auto descriptors = load_manifest(manifest);
  const auto dir = manifest.parent_path();
  const json sidecar = load_sidecar(dir);
  std::vector<PairedSample> samples;
  samples.reserve(descriptors.size());
  for (const auto& d : descriptors) samples.push_back(load_pair_with_sidecar(d, input_size, sidecar, dir));
  return samples;
}

fs::path write_synthetic_dataset(const fs::path& dir, const SyntheticDatasetOptions& options) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kUnwritablePath, "cannot create " + dir.string() + ": " + ec.message());
  const auto samples = generate_synthetic_dataset(options);
  const auto manifest_path = dir / "manifest.jsonl";
  std::ofstream manifest(manifest_path);
  if (!manifest) fail(ErrorCode::kUnwritablePath, "cannot write " + manifest_path.string());
  json sidecar = json::object();
  for (const auto& s : samples) {
    const std::string wli = "wli/" + s.pair_id + ".png";
    const std::string nbi = "nbi/" + s.pair_id + ".png";
    const std::string mask = "mask/" + s.pair_id + ".png";
    write_png(dir / wli, s.image_w);
    write_png(dir / nbi, s.image_n);
    write_mask(dir / mask, s.gt_lesion_mask_w);
    manifest << json{{"pair_id", s.pair_id},
                     {"patient_id", s.patient_id},
                     {"label", s.label},
                     {"wli_path", wli},
                     {"nbi_path", nbi}}
                    .dump()
             << "\n";
    sidecar[s.pair_id] = {{"gt_warp", s.gt_warp->m}, {"mask_path", mask}, {"size", options.size}};
  }
  std::ofstream side(dir / "synthetic.json");
  side << sidecar.dump(2) << "\n";
  return manifest_path;
}

// -------------------------------------------------------------------- folds

FoldPlan kfold_split(const std::vector<std::string>& patient_ids, int k, std::uint64_t seed) {
  require(k >= 2, "k must be at least 2");
  std::vector<std::string> patients(patient_ids.begin(), patient_ids.end());
  std::sort(patients.begin(), patients.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());
  if (static_cast<int>(patients.size()) < k)
    fail(ErrorCode::kTooFewPatients, "need at least " + std::to_string(k) + " distinct patients, got " +
                                         std::to_string(patients.size()));
  std::mt19937_64 rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);
  FoldPlan plan;
  plan.folds.resize(static_cast<size_t>(k));
  for (size_t i = 0; i < patients.size(); ++i) plan.folds[i % static_cast<size_t>(k)].test_patients.insert(patients[i]);
  for (auto& fold : plan.folds)
    for (const auto& p : patients)
      if (!fold.test_patients.count(p)) fold.train_patients.insert(p);
  return plan;
}

FoldPlan kfold_split(const std::vector<SampleDescriptor>& descriptors, int k, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& d : descriptors) ids.push_back(d.patient_id);
  return kfold_split(ids, k, seed);
}

FoldPlan kfold_split(const std::vector<PairedSample>& samples, int k, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.patient_id);
  return kfold_split(ids, k, seed);
}

std::pair<std::vector<size_t>, std::vector<size_t>> fold_indices(const std::vector<PairedSample>& samples,
                                                                 const Fold& fold) {
  std::pair<std::vector<size_t>, std::vector<size_t>> out;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (fold.test_patients.count(samples[i].patient_id)) {
      out.second.push_back(i);
    } else if (fold.train_patients.count(samples[i].patient_id)) {
      out.first.push_back(i);
    }
  }
  return out;
}

}  // namespace xdistill
