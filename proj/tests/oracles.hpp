#pragma once
// Independent reference implementations used by the unit and acceptance
// tests. Written from the formulas directly with plain scalars and loops; no
// code is shared with the library beyond the plain data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "splitface/geometry.hpp"

namespace oracle {

// Box as {x_min, y_min, x_max, y_max}.
using Box4 = std::array<double, 4>;

struct Fiducials21 {
  double x[22]{}, y[22]{};  // 1-based
  double xtl = 0, ytl = 0, xbr = 0, ybr = 0;
  double W = 0, H = 0;
};

inline Fiducials21 from(const splitface::FiducialSet& f) {
  Fiducials21 o;
  for (int k = 1; k <= 21; ++k) {
    o.x[k] = f.points[k - 1].x;
    o.y[k] = f.points[k - 1].y;
  }
  o.xtl = f.face_box.x_min;
  o.ytl = f.face_box.y_min;
  o.xbr = f.face_box.x_max;
  o.ybr = f.face_box.y_max;
  o.W = f.image_width;
  o.H = f.image_height;
  return o;
}

inline double maxx(const Fiducials21& f, std::initializer_list<int> ks) {
  double m = -1e300;
  for (int k : ks) m = std::max(m, f.x[k]);
  return m;
}
inline double minx(const Fiducials21& f, std::initializer_list<int> ks) {
  double m = 1e300;
  for (int k : ks) m = std::min(m, f.x[k]);
  return m;
}
inline double maxy(const Fiducials21& f, std::initializer_list<int> ks) {
  double m = -1e300;
  for (int k : ks) m = std::max(m, f.y[k]);
  return m;
}
inline double miny(const Fiducials21& f, std::initializer_list<int> ks) {
  double m = 1e300;
  for (int k : ks) m = std::min(m, f.y[k]);
  return m;
}

inline double delta_ep(const Fiducials21& f) {
  double d = 0;
  for (int i = 7; i <= 12; ++i) d = std::max(d, std::fabs(f.y[i] - f.y[i - 6]));
  return d;
}

inline double delta_ns(const Fiducials21& f) {
  return 0.5 * (maxy(f, {18, 19, 20}) - miny(f, {14, 15, 16}));
}

// Segment formula before the final clamp to the raster. Predictor order:
// 1 UL12, 2 U12, 3 UR12, 4 UL34, 5 U34, 6 UR34, 7 L12, 8 L34, 9 EP, 10 NS,
// 11 R12, 12 R34, 13 B34, 14 B12; 0 is the face box.
inline Box4 formula(const Fiducials21& f, int seg) {
  const std::initializer_list<int> eyes = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  switch (seg) {
    case 0: return {f.xtl, f.ytl, f.xbr, f.ybr};
    case 1: return {f.xtl, f.ytl, maxx(f, {3, 9, 14, 15, 19}), maxy(f, {14, 15, 16})};
    case 2: return {f.xtl, f.ytl, f.xbr, maxy(f, {14, 15, 16})};
    case 3: return {minx(f, {4, 10, 15, 16, 19}), f.ytl, f.xbr, maxy(f, {14, 15, 16})};
    case 4: return {f.xtl, f.ytl, maxx(f, {5, 11, 16, 20}), maxy(f, {18, 19, 20})};
    case 5: return {f.xtl, f.ytl, f.xbr, maxy(f, {18, 19, 20})};
    case 6: return {minx(f, {2, 8, 14, 18}), f.ytl, f.xbr, maxy(f, {18, 19, 20})};
    case 7: return {f.xtl, f.ytl, maxx(f, {3, 15, 19}), f.ybr};
    case 8: return {f.xtl, f.ytl, maxx(f, {5, 11, 16, 20}), f.ybr};
    case 9: {
      const double d = delta_ep(f);
      return {std::max(f.xtl, minx(f, eyes)), std::max(f.ytl, miny(f, eyes) - d),
              std::min(f.xbr, maxx(f, eyes)), std::min(f.ybr, maxy(f, eyes) + d)};
    }
    case 10: {
      const double d = delta_ns(f);
      const double mean = (f.y[14] + f.y[15] + f.y[16]) / 3.0;
      return {std::max(f.xtl, minx(f, {8, 14, 15, 16, 18})), std::max(f.ytl, std::max(0.0, mean - 2 * d)),
              std::min(f.xbr, maxx(f, {11, 14, 15, 16, 20})), std::min(f.ybr, std::max(f.H, mean + 2 * d))};
    }
    case 11: return {minx(f, {4, 10, 15, 16, 19}), f.ytl, f.xbr, f.ybr};
    case 12: return {minx(f, {2, 8, 14, 18}), f.ytl, f.xbr, f.ybr};
    case 13: return {f.xtl, miny(f, {7, 8, 9, 10, 11, 12}), f.xbr, f.ybr};
    case 14: return {f.xtl, miny(f, {14, 15, 16}), f.xbr, f.ybr};
  }
  return {};
}

inline Box4 clamped(const Fiducials21& f, int seg) {
  Box4 b = formula(f, seg);
  for (int i : {0, 2}) b[i] = std::clamp(b[i], 0.0, f.W - 1);
  for (int i : {1, 3}) b[i] = std::clamp(b[i], 0.0, f.H - 1);
  return b;
}

/// Random non-degenerate fiducial set: distinct points strictly inside the
/// face box, with a face box that may spill over the raster edge.
inline splitface::FiducialSet random_fiducials(std::mt19937_64& gen, int W = 160, int H = 180) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  splitface::FiducialSet f;
  f.image_width = W;
  f.image_height = H;
  const double x0 = -10 + 40 * u(gen), y0 = -10 + 40 * u(gen);
  const double x1 = W - 30 + 40 * u(gen), y1 = H - 30 + 40 * u(gen);
  f.face_box = {x0, y0, x1, y1};
  for (int k = 0; k < 21; ++k) {
    f.points[k] = {x0 + 2 + (x1 - x0 - 4) * u(gen), y0 + 2 + (y1 - y0 - 4) * u(gen)};
    f.visibility[k] = 1.0;
  }
  return f;
}

// --- thresholds --------------------------------------------------------------

struct Threshold {
  double t = 0;
  double accuracy = -1;
};

/// Exhaustive scan: {0} ∪ midpoints of adjacent distinct sorted scores ∪ {1};
/// accuracy counted directly per candidate; smallest candidate on ties.
inline Threshold brute_force_threshold(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> cands = {0.0};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) cands.push_back((sorted[i] + sorted[i + 1]) / 2);
  cands.push_back(1.0);
  std::sort(cands.begin(), cands.end());
  Threshold best;
  for (double t : cands) {
    std::size_t correct = 0;
    for (std::size_t n = 0; n < s.size(); ++n) correct += ((s[n] >= t ? 1 : 0) == y[n]);
    const double acc = static_cast<double>(correct) / static_cast<double>(s.size());
    if (acc > best.accuracy) best = {t, acc};
  }
  return best;
}

// --- resampling --------------------------------------------------------------

/// Loop-based bilinear reference on a single-channel row-major raster.
inline std::vector<double> bilinear(const std::vector<double>& img, int w, int h, double bx0, double by0,
                                    double bx1, double by1, int ow, int oh) {
  std::vector<double> out(static_cast<std::size_t>(ow * oh));
  auto px = [&](int x, int y) { return img[static_cast<std::size_t>(y * w + x)]; };
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      double x = bx0 + (ox + 0.5) * (bx1 - bx0 + 1) / ow - 0.5;
      double y = by0 + (oy + 0.5) * (by1 - by0 + 1) / oh - 0.5;
      x = std::min(std::max(x, 0.0), w - 1.0);
      y = std::min(std::max(y, 0.0), h - 1.0);
      const int xa = static_cast<int>(std::floor(x)), ya = static_cast<int>(std::floor(y));
      const int xb = std::min(xa + 1, w - 1), yb = std::min(ya + 1, h - 1);
      const double fx = x - xa, fy = y - ya;
      out[static_cast<std::size_t>(oy * ow + ox)] =
          (1 - fy) * ((1 - fx) * px(xa, ya) + fx * px(xb, ya)) + fy * ((1 - fx) * px(xa, yb) + fx * px(xb, yb));
    }
  return out;
}

// --- committee machines ------------------------------------------------------

inline double T(double x, double t) { return x <= t ? 0.5 * x / t : (0.5 * x + 0.5 - t) / (1 - t); }

}  // namespace oracle
