#include "splitface/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "splitface/data.hpp"
#include "splitface/rng.hpp"

namespace splitface::synthetic {

namespace {

// Landmarks in face-normalised coordinates, 1-based order.
constexpr std::array<Point, kFiducialCount> kTemplate = {{
    {0.15, 0.25},   {0.25, 0.2875}, {0.40, 0.325},  {0.60, 0.325},  {0.75, 0.2875}, {0.85, 0.25},
    {0.175, 0.30},  {0.275, 0.3375}, {0.40, 0.375}, {0.60, 0.375},  {0.725, 0.3375}, {0.825, 0.30},
    {0.025, 0.4375}, {0.425, 0.50}, {0.50, 0.525},  {0.575, 0.50},  {0.975, 0.4375},
    {0.375, 0.625}, {0.50, 0.65},   {0.625, 0.625}, {0.50, 0.9375},
}};

constexpr double kFaceMargin = 14.0 / 128.0;

using Rgb = std::array<double, 3>;

struct Canvas {
  Image& img;

  void blend(int x, int y, const Rgb& c, double alpha = 1.0) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    for (int k = 0; k < 3; ++k) {
      const double v = (1.0 - alpha) * img.at(x, y, k) + alpha * c[k];
      img.at(x, y, k) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }

  void ellipse(double cx, double cy, double rx, double ry, const Rgb& c) {
    for (int y = static_cast<int>(std::floor(cy - ry)); y <= static_cast<int>(std::ceil(cy + ry)); ++y)
      for (int x = static_cast<int>(std::floor(cx - rx)); x <= static_cast<int>(std::ceil(cx + rx)); ++x) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        if (dx * dx + dy * dy <= 1.0) blend(x, y, c);
      }
  }

  void rect(const BoundingBox& b, const Rgb& c) {
    for (int y = static_cast<int>(std::ceil(b.y_min)); y <= static_cast<int>(std::floor(b.y_max)); ++y)
      for (int x = static_cast<int>(std::ceil(b.x_min)); x <= static_cast<int>(std::floor(b.x_max)); ++x)
        blend(x, y, c);
  }

  void frame(const BoundingBox& b, double thickness, const Rgb& c) {
    for (int y = static_cast<int>(std::ceil(b.y_min)); y <= static_cast<int>(std::floor(b.y_max)); ++y)
      for (int x = static_cast<int>(std::ceil(b.x_min)); x <= static_cast<int>(std::floor(b.x_max)); ++x) {
        const double edge = std::min({x - b.x_min, b.x_max - x, y - b.y_min, b.y_max - y});
        if (edge < thickness) blend(x, y, c);
      }
  }

  void line(Point a, Point b, double radius, const Rgb& c) {
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      ellipse(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), radius, radius, c);
    }
  }
};

Rgb jitter(Rng& rng, Rgb c, double amount) {
  for (auto& v : c) v = std::clamp(v + rng.uniform(-amount, amount), 0.0, 255.0);
  return c;
}

Point lerp_box(const BoundingBox& box, Point uv) {
  return {box.x_min + uv.x * (box.x_max - box.x_min), box.y_min + uv.y * (box.y_max - box.y_min)};
}

double quantise(double v) { return std::round(v * 100.0) / 100.0; }

struct Sample {
  Image image;
  FiducialSet fiducials;
  std::vector<int> labels;
};

Sample render(const Config& cfg, Rng& rng) {
  const int S = cfg.image_size;
  Sample s;
  s.image = Image(S, S);
  Canvas cv{s.image};

  const Rgb background = {rng.uniform(40, 200), rng.uniform(40, 200), rng.uniform(40, 200)};
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) cv.blend(x, y, jitter(rng, background, 12.0));

  // Face placement.
  const double scale = rng.uniform(0.92, 1.08);
  const double side = (1.0 - 2.0 * kFaceMargin) * (S - 1) * scale;
  const double cx = (S - 1) / 2.0 + rng.uniform(-5.0, 5.0);
  const double cy = (S - 1) / 2.0 + rng.uniform(-5.0, 5.0);
  BoundingBox face{quantise(cx - side / 2), quantise(cy - side / 2), quantise(cx + side / 2),
                   quantise(cy + side / 2)};

  FiducialSet& f = s.fiducials;
  f.face_box = face;
  for (int k = 1; k <= kFiducialCount; ++k) {
    const Point p = lerp_box(face, kTemplate[k - 1]);
    f.p(k) = {quantise(p.x + rng.uniform(-1.5, 1.5)), quantise(p.y + rng.uniform(-1.5, 1.5))};
    f.v(k) = 1.0;
  }

  const Rgb skin = {rng.uniform(150, 235), rng.uniform(110, 190), rng.uniform(80, 160)};
  const Point centre = lerp_box(face, {0.5, 0.52});
  cv.ellipse(centre.x, centre.y, 0.45 * face.width(), 0.49 * face.height(), skin);

  const Rgb hair = jitter(rng, {60, 45, 30}, 25);
  cv.line(f.p(1), f.p(2), 1.6, hair);
  cv.line(f.p(2), f.p(3), 1.6, hair);
  cv.line(f.p(4), f.p(5), 1.6, hair);
  cv.line(f.p(5), f.p(6), 1.6, hair);
  const Rgb iris = jitter(rng, {50, 60, 80}, 30);
  for (int first : {7, 10}) {
    const Point a = f.p(first), b = f.p(first + 2);
    cv.ellipse((a.x + b.x) / 2, (a.y + b.y) / 2, std::abs(b.x - a.x) / 2 + 1.0, 3.0, {245, 245, 245});
    cv.ellipse((a.x + b.x) / 2, (a.y + b.y) / 2, 2.2, 2.2, iris);
  }
  const Rgb shade = {skin[0] * 0.8, skin[1] * 0.75, skin[2] * 0.75};
  cv.line(f.p(14), f.p(15), 1.4, shade);
  cv.line(f.p(15), f.p(16), 1.4, shade);
  const Rgb lips = jitter(rng, {175, 70, 80}, 20);
  cv.line(f.p(18), f.p(19), 1.8, lips);
  cv.line(f.p(19), f.p(20), 1.8, lips);

  const auto& attrs = attributes();
  s.labels.resize(kAttributeCount);
  for (int a = 0; a < kAttributeCount; ++a) s.labels[a] = rng.bernoulli(attrs[a].prior) ? 1 : 0;

  const auto box = [&](int a) { return region_box(a, face); };
  if (s.labels[0]) cv.rect(box(0), jitter(rng, {220, 30, 30}, 25));
  if (s.labels[1]) cv.rect(box(1), jitter(rng, {30, 60, 220}, 25));
  if (s.labels[2]) {
    const Rgb green = jitter(rng, {30, 190, 60}, 25);
    for (int first : {7, 10}) {
      const Point a = f.p(first), b = f.p(first + 2);
      cv.frame({a.x - 3.5, std::min(a.y, b.y) - 5.0, b.x + 3.5, std::max(a.y, b.y) + 5.0}, 2.0, green);
    }
    cv.line(f.p(9), f.p(10), 1.0, green);
  }
  if (s.labels[3]) cv.ellipse(f.p(15).x, f.p(15).y - 2.0, 6.5, 6.5, jitter(rng, {150, 40, 170}, 20));
  if (s.labels[4]) {
    const BoundingBox b = box(4);
    cv.ellipse((b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2, b.width() / 2, b.height() / 2,
               jitter(rng, {45, 30, 20}, 15));
  }
  if (s.labels[5]) {
    const BoundingBox b = box(5);
    cv.ellipse((b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2, b.width() / 2, b.height() / 2,
               jitter(rng, {240, 220, 30}, 15));
  }

  for (auto& px : s.image.pixels)
    px = static_cast<std::uint8_t>(std::clamp(px + static_cast<int>(rng.below(13)) - 6, 0, 255));
  return s;
}

}  // namespace

const std::array<AttributeInfo, kAttributeCount>& attributes() {
  static const std::array<AttributeInfo, kAttributeCount> table = {{
      {"Red_Patch_Left", 0.50, {0.12, 0.02, 0.38, 0.17}, true},
      {"Blue_Patch_Right", 0.30, {0.62, 0.02, 0.88, 0.17}, true},
      {"Green_Glasses", 0.40, {0.10, 0.22, 0.90, 0.45}, true},
      {"Purple_Nose", 0.60, {0.40, 0.42, 0.60, 0.58}, false},
      {"Dark_Beard", 0.25, {0.32, 0.74, 0.68, 0.95}, false},
      {"Yellow_Cheek", 0.45, {0.70, 0.60, 0.88, 0.76}, false},
  }};
  return table;
}

FiducialSet template_fiducials(int image_size) {
  FiducialSet f;
  const double lo = kFaceMargin * (image_size - 1), hi = (1.0 - kFaceMargin) * (image_size - 1);
  f.face_box = {lo, lo, hi, hi};
  for (int k = 1; k <= kFiducialCount; ++k) {
    f.p(k) = lerp_box(f.face_box, kTemplate[k - 1]);
    f.v(k) = 1.0;
  }
  f.image_width = f.image_height = image_size;
  return f;
}

BoundingBox region_box(int a, const BoundingBox& face_box) {
  const auto& r = attributes().at(static_cast<std::size_t>(a)).region;
  const Point tl = lerp_box(face_box, {r.x_min, r.y_min});
  const Point br = lerp_box(face_box, {r.x_max, r.y_max});
  return {tl.x, tl.y, br.x, br.y};
}

void generate(const Config& cfg, const std::filesystem::path& out_dir) {
  if (cfg.train < 1 || cfg.val < 1 || cfg.test < 1 || cfg.image_size < 32)
    throw ConfigError("synthetic dataset needs nonempty splits and images of at least 32 px");
  AttributeAnnotations ann;
  for (const auto& a : attributes()) ann.names.emplace_back(a.name);
  std::vector<SplitEntry> splits;
  std::vector<LandmarkRecord> landmarks;
  const int total = cfg.train + cfg.val + cfg.test;
  for (int i = 0; i < total; ++i) {
    Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(i)));
    Sample s = render(cfg, rng);
    char name[32];
    std::snprintf(name, sizeof name, "s%06d.ppm", i + 1);
    write_ppm(out_dir / Dataset::kImageDir / name, s.image);
    ann.images.emplace_back(name);
    ann.labels.push_back(s.labels);
    const Split split = i < cfg.train ? Split::train : i < cfg.train + cfg.val ? Split::val : Split::test;
    splits.push_back({name, split});
    landmarks.push_back({name, s.fiducials});
  }
  write_attr_file(out_dir / Dataset::kAttributeFile, ann);
  write_split_manifest(out_dir / Dataset::kPartitionFile, splits);
  write_landmark_file(out_dir / Dataset::kLandmarkFile, landmarks);
}

}  // namespace splitface::synthetic
