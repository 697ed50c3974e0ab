#include "splitface/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <limits>

namespace splitface {

InsufficientVisibility::InsufficientVisibility(const std::string& segment,
                                               std::vector<int> indices)
    : Error("InsufficientVisibility",
            [&] {
              std::string msg = segment + " needs fiducials below threshold:";
              for (int i : indices) msg += " " + std::to_string(i);
              return msg;
            }()),
      indices_(std::move(indices)) {}

std::string to_string(const BoundingBox& b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "[%g,%g,%g,%g]", b.x_min, b.y_min, b.x_max, b.y_max);
  return buf;
}

void FiducialSet::validate() const {
  for (int k = 1; k <= kFiducialCount; ++k)
    if (!(v(k) >= 0.0 && v(k) <= 1.0))
      throw MalformedRow("visibility of fiducial " + std::to_string(k) + " outside [0,1]");
  if (!(face_box.x_min <= face_box.x_max && face_box.y_min <= face_box.y_max))
    throw MalformedRow("inverted face box " + to_string(face_box));
}

namespace {

constexpr std::array<std::string_view, kSegmentCount + 1> kNames = {
    "FULL", "UL12", "U12", "UR12", "UL34", "U34", "UR34", "L12",
    "L34",  "EP",   "NS",  "R12",  "R34",  "B34", "B12"};

double max_x(const FiducialSet& f, std::initializer_list<int> ks) {
  double m = -std::numeric_limits<double>::infinity();
  for (int k : ks) m = std::max(m, f.p(k).x);
  return m;
}
double min_x(const FiducialSet& f, std::initializer_list<int> ks) {
  double m = std::numeric_limits<double>::infinity();
  for (int k : ks) m = std::min(m, f.p(k).x);
  return m;
}
double max_y(const FiducialSet& f, int first, int last) {
  double m = -std::numeric_limits<double>::infinity();
  for (int k = first; k <= last; ++k) m = std::max(m, f.p(k).y);
  return m;
}
double min_y(const FiducialSet& f, int first, int last) {
  double m = std::numeric_limits<double>::infinity();
  for (int k = first; k <= last; ++k) m = std::min(m, f.p(k).y);
  return m;
}
double min_x_range(const FiducialSet& f, int first, int last) {
  double m = std::numeric_limits<double>::infinity();
  for (int k = first; k <= last; ++k) m = std::min(m, f.p(k).x);
  return m;
}
double max_x_range(const FiducialSet& f, int first, int last) {
  double m = -std::numeric_limits<double>::infinity();
  for (int k = first; k <= last; ++k) m = std::max(m, f.p(k).x);
  return m;
}

BoundingBox clamp_box(BoundingBox b, int w, int h) {
  const double xm = std::max(0, w - 1), ym = std::max(0, h - 1);
  b.x_min = std::clamp(b.x_min, 0.0, xm);
  b.x_max = std::clamp(b.x_max, 0.0, xm);
  b.y_min = std::clamp(b.y_min, 0.0, ym);
  b.y_max = std::clamp(b.y_max, 0.0, ym);
  return b;
}

BoundingBox formula_box(const FiducialSet& f, SegmentId s) {
  const double xtl = f.face_box.x_min, ytl = f.face_box.y_min;
  const double xbr = f.face_box.x_max, ybr = f.face_box.y_max;
  const double H = f.image_height;
  switch (s) {
    case SegmentId::FULL:
      return f.face_box;
    case SegmentId::EP: {
      const double d = compute_deltas(f).delta_ep;
      return {std::max(xtl, min_x_range(f, 1, 12)), std::max(ytl, min_y(f, 1, 12) - d),
              std::min(xbr, max_x_range(f, 1, 12)), std::min(ybr, max_y(f, 1, 12) + d)};
    }
    case SegmentId::NS: {
      const double d = compute_deltas(f).delta_nose;
      const double mean = (f.p(14).y + f.p(15).y + f.p(16).y) / 3.0;
      return {std::max(xtl, min_x(f, {8, 14, 15, 16, 18})),
              std::max(ytl, std::max(0.0, mean - 2.0 * d)),
              std::min(xbr, max_x(f, {11, 14, 15, 16, 20})),
              std::min(ybr, std::max(H, mean + 2.0 * d))};
    }
    case SegmentId::UL12:
      return {xtl, ytl, max_x(f, {3, 9, 14, 15, 19}), max_y(f, 14, 16)};
    case SegmentId::U12:
      return {xtl, ytl, xbr, max_y(f, 14, 16)};
    case SegmentId::UR12:
      return {min_x(f, {4, 10, 15, 16, 19}), ytl, xbr, max_y(f, 14, 16)};
    case SegmentId::UL34:
      return {xtl, ytl, max_x(f, {5, 11, 16, 20}), max_y(f, 18, 20)};
    case SegmentId::U34:
      return {xtl, ytl, xbr, max_y(f, 18, 20)};
    case SegmentId::UR34:
      return {min_x(f, {2, 8, 14, 18}), ytl, xbr, max_y(f, 18, 20)};
    case SegmentId::L12:
      return {xtl, ytl, max_x(f, {3, 15, 19}), ybr};
    case SegmentId::L34:
      return {xtl, ytl, max_x(f, {5, 11, 16, 20}), ybr};
    case SegmentId::R34:
      return {min_x(f, {2, 8, 14, 18}), ytl, xbr, ybr};
    case SegmentId::R12:
      return {min_x(f, {4, 10, 15, 16, 19}), ytl, xbr, ybr};
    case SegmentId::B12:
      return {xtl, min_y(f, 14, 16), xbr, ybr};
    case SegmentId::B34:
      return {xtl, min_y(f, 7, 12), xbr, ybr};
  }
  return f.face_box;
}

std::vector<int> failing_fiducials(const FiducialSet& f, SegmentId s, double tau) {
  std::vector<int> failed;
  for (int k : required_fiducials(s))
    if (!(f.v(k) >= tau)) failed.push_back(k);
  return failed;
}

}  // namespace

std::string_view segment_name(SegmentId s) { return kNames.at(static_cast<std::size_t>(s)); }

std::optional<SegmentId> parse_segment_name(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return static_cast<SegmentId>(i);
  return std::nullopt;
}

std::string predictor_name(int predictor) {
  if (predictor == kGlobalPredictor) return "GP";
  return std::string(kNames.at(static_cast<std::size_t>(predictor)));
}

std::optional<int> parse_predictor_name(std::string_view name) {
  if (name == "GP") return kGlobalPredictor;
  if (auto s = parse_segment_name(name)) return index_of(*s);
  return std::nullopt;
}

const std::vector<int>& required_fiducials(SegmentId s) {
  static const std::array<std::vector<int>, kSegmentCount + 1> table = {{
      {},                                      // FULL
      {3, 9, 14, 15, 16, 19},                  // UL12
      {14, 15, 16},                            // U12
      {4, 10, 14, 15, 16, 19},                 // UR12
      {5, 11, 16, 18, 19, 20},                 // UL34
      {18, 19, 20},                            // U34
      {2, 8, 14, 18, 19, 20},                  // UR34
      {3, 15, 19},                             // L12
      {5, 11, 16, 20},                         // L34
      {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, // EP
      {8, 11, 14, 15, 16, 18, 19, 20},         // NS
      {4, 10, 15, 16, 19},                     // R12
      {2, 8, 14, 18},                          // R34
      {7, 8, 9, 10, 11, 12},                   // B34
      {14, 15, 16},                            // B12
  }};
  return table.at(static_cast<std::size_t>(s));
}

Deltas compute_deltas(const FiducialSet& f) {
  Deltas d;
  for (int i = 7; i <= 12; ++i) d.delta_ep = std::max(d.delta_ep, std::abs(f.p(i).y - f.p(i - 6).y));
  d.delta_nose = 0.5 * (max_y(f, 18, 20) - min_y(f, 14, 16));
  return d;
}

bool segment_visible(const FiducialSet& f, SegmentId s, double tau) {
  return failing_fiducials(f, s, tau).empty();
}

BoundingBox segment_box(const FiducialSet& f, SegmentId s, double tau) {
  auto failed = failing_fiducials(f, s, tau);
  if (!failed.empty()) throw InsufficientVisibility(std::string(segment_name(s)), std::move(failed));
  return clamp_box(formula_box(f, s), f.image_width, f.image_height);
}

std::array<SegmentBoxResult, kSegmentCount + 1> all_segment_boxes(const FiducialSet& f,
                                                                  double tau) {
  std::array<SegmentBoxResult, kSegmentCount + 1> out;
  for (int i = 0; i <= kSegmentCount; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = segment_box(f, segment_at(i), tau);
    } catch (const InsufficientVisibility& e) {
      out[static_cast<std::size_t>(i)] = e;
    }
  }
  return out;
}

FloatImage crop_and_resize(const FloatImage& image, const BoundingBox& box, int out_w,
                           int out_h) {
  if (out_w <= 0 || out_h <= 0) throw EmptyIntersection("non-positive output size");
  if (image.width <= 0 || image.height <= 0 || !(box.x_min <= box.x_max) ||
      !(box.y_min <= box.y_max) || box.x_max < 0.0 || box.y_max < 0.0 ||
      box.x_min > image.width - 1 || box.y_min > image.height - 1)
    throw EmptyIntersection("box " + to_string(box) + " misses a " + std::to_string(image.width) +
                            "x" + std::to_string(image.height) + " image");

  const int C = image.channels;
  FloatImage out(out_w, out_h, C);
  const double sx = (box.x_max - box.x_min + 1.0) / out_w;
  const double sy = (box.y_max - box.y_min + 1.0) / out_h;

  // Per-column source taps are shared by every row.
  std::vector<int> x0(static_cast<std::size_t>(out_w)), x1(x0.size());
  std::vector<double> fx(x0.size());
  for (int ox = 0; ox < out_w; ++ox) {
    const double x = std::clamp(box.x_min + (ox + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
    const int xi = static_cast<int>(std::floor(x));
    x0[ox] = xi;
    x1[ox] = std::min(xi + 1, image.width - 1);
    fx[ox] = x - xi;
  }
  for (int oy = 0; oy < out_h; ++oy) {
    const double y = std::clamp(box.y_min + (oy + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(std::floor(y));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double fy = y - y0;
    for (int ox = 0; ox < out_w; ++ox)
      for (int c = 0; c < C; ++c) {
        const double top = image.at(x0[ox], y0, c) * (1.0 - fx[ox]) + image.at(x1[ox], y0, c) * fx[ox];
        const double bot = image.at(x0[ox], y1, c) * (1.0 - fx[ox]) + image.at(x1[ox], y1, c) * fx[ox];
        out.at(ox, oy, c) = static_cast<float>(top * (1.0 - fy) + bot * fy);
      }
  }
  return out;
}

FloatImage crop_and_resize(const Image& image, const BoundingBox& box, int out_w, int out_h) {
  return crop_and_resize(to_float(image), box, out_w, out_h);
}

SegmentCrop make_segment_crop(const Image& image, const FiducialSet& f, SegmentId s, int size,
                              double tau) {
  SegmentCrop crop;
  crop.segment = s;
  if (!segment_visible(f, s, tau)) {
    crop.pixels = FloatImage(size, size, 3, 0.0f);
    return crop;
  }
  crop.source_box = segment_box(f, s, tau);
  crop.pixels = crop_and_resize(image, crop.source_box, size, size);
  crop.visible = true;
  return crop;
}

std::string_view variant_name(PartialVariant v) {
  switch (v) {
    case PartialVariant::PL12: return "P-L12";
    case PartialVariant::PL34: return "P-L34";
    case PartialVariant::PR12: return "P-R12";
    case PartialVariant::PR34: return "P-R34";
    case PartialVariant::PU12: return "P-U12";
    case PartialVariant::PU34: return "P-U34";
  }
  return "?";
}

std::optional<PartialVariant> parse_variant_name(std::string_view name) {
  for (auto v : kPartialVariants)
    if (variant_name(v) == name) return v;
  return std::nullopt;
}

SegmentId retained_segment(PartialVariant v) {
  switch (v) {
    case PartialVariant::PL12: return SegmentId::L12;
    case PartialVariant::PL34: return SegmentId::L34;
    case PartialVariant::PR12: return SegmentId::R12;
    case PartialVariant::PR34: return SegmentId::R34;
    case PartialVariant::PU12: return SegmentId::U12;
    case PartialVariant::PU34: return SegmentId::U34;
  }
  return SegmentId::FULL;
}

PartialResult make_partial(const Image& image, const FiducialSet& f, PartialVariant v,
                           double tau) {
  PartialResult r{image, f, segment_box(f, retained_segment(v), tau)};
  const auto& box = r.retained_box;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      if (!box.contains(x, y))
        for (int c = 0; c < 3; ++c) r.image.at(x, y, c) = 255;
  for (int k = 1; k <= kFiducialCount; ++k)
    if (!box.contains(f.p(k).x, f.p(k).y)) r.fiducials.v(k) = 0.0;
  return r;
}

int mirrored_fiducial(int k) {
  // Brows 1-6, eyes 7-12, ears 13/17, nose 14-16, mouth 18-20, chin 21.
  static constexpr std::array<int, kFiducialCount> table = {6,  5,  4,  3,  2,  1,  12,
                                                            11, 10, 9,  8,  7,  17, 16,
                                                            15, 14, 13, 20, 19, 18, 21};
  return table.at(static_cast<std::size_t>(k - 1));
}

SegmentId mirrored_segment(SegmentId s) {
  switch (s) {
    case SegmentId::UL12: return SegmentId::UR12;
    case SegmentId::UR12: return SegmentId::UL12;
    case SegmentId::UL34: return SegmentId::UR34;
    case SegmentId::UR34: return SegmentId::UL34;
    case SegmentId::L12: return SegmentId::R12;
    case SegmentId::R12: return SegmentId::L12;
    case SegmentId::L34: return SegmentId::R34;
    case SegmentId::R34: return SegmentId::L34;
    default: return s;
  }
}

BoundingBox mirror_box(const BoundingBox& b, int image_width) {
  const double w1 = image_width - 1.0;
  return {w1 - b.x_max, b.y_min, w1 - b.x_min, b.y_max};
}

FiducialSet hflip(const FiducialSet& f) {
  FiducialSet out = f;
  const double w1 = f.image_width - 1.0;
  for (int k = 1; k <= kFiducialCount; ++k) {
    const int m = mirrored_fiducial(k);
    out.p(k) = {w1 - f.p(m).x, f.p(m).y};
    out.v(k) = f.v(m);
  }
  out.face_box = mirror_box(f.face_box, f.image_width);
  return out;
}

FlipResult hflip(const Image& image, const FiducialSet& f) {
  FlipResult r;
  r.image = Image(image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) r.image.at(image.width - 1 - x, y, c) = image.at(x, y, c);
  r.fiducials = hflip(f);
  for (int i = 0; i <= kSegmentCount; ++i) r.remap[i] = mirrored_segment(segment_at(i));
  return r;
}

}  // namespace splitface
