#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "splitface/error.hpp"
#include "splitface/image.hpp"

namespace splitface {

inline constexpr int kFiducialCount = 21;
inline constexpr int kSegmentCount = 14;
inline constexpr int kPredictorCount = 16;  // FULL, 14 segments, GP
inline constexpr int kFullPredictor = 0;
inline constexpr int kGlobalPredictor = 15;
inline constexpr double kDefaultTau = 0.5;

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Inclusive pixel corners.
struct BoundingBox {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

std::string to_string(const BoundingBox& box);

/// 21 fiducials with visibility scores. Fiducials are addressed 1-based, as in
/// the segment formulas.
struct FiducialSet {
  std::array<Point, kFiducialCount> points{};
  std::array<double, kFiducialCount> visibility{};
  BoundingBox face_box;
  int image_width = 0;
  int image_height = 0;

  const Point& p(int k) const { return points[static_cast<std::size_t>(k - 1)]; }
  Point& p(int k) { return points[static_cast<std::size_t>(k - 1)]; }
  double v(int k) const { return visibility[static_cast<std::size_t>(k - 1)]; }
  double& v(int k) { return visibility[static_cast<std::size_t>(k - 1)]; }

  /// Throws MalformedRow when visibilities leave [0,1] or the face box is inverted.
  void validate() const;

  friend bool operator==(const FiducialSet&, const FiducialSet&) = default;
};

/// Predictor-ordered: FULL is 0, segments are 1..14. GP (15) is not a segment.
enum class SegmentId : int {
  FULL = 0, UL12, U12, UR12, UL34, U34, UR34, L12, L34, EP, NS, R12, R34, B34, B12
};

inline constexpr std::array<SegmentId, kSegmentCount> kSegments = {
    SegmentId::UL12, SegmentId::U12, SegmentId::UR12, SegmentId::UL34, SegmentId::U34,
    SegmentId::UR34, SegmentId::L12, SegmentId::L34,  SegmentId::EP,   SegmentId::NS,
    SegmentId::R12,  SegmentId::R34, SegmentId::B34,  SegmentId::B12};

inline int index_of(SegmentId s) { return static_cast<int>(s); }
inline SegmentId segment_at(int predictor) { return static_cast<SegmentId>(predictor); }

std::string_view segment_name(SegmentId s);
std::optional<SegmentId> parse_segment_name(std::string_view name);
/// "FULL", segment names, "GP".
std::string predictor_name(int predictor);
std::optional<int> parse_predictor_name(std::string_view name);

/// 1-based fiducial indices referenced by the segment's formula (including
/// those used by its delta terms). Empty for FULL.
const std::vector<int>& required_fiducials(SegmentId s);

struct Deltas {
  double delta_ep = 0.0;
  double delta_nose = 0.0;
};

Deltas compute_deltas(const FiducialSet& f);

/// Evaluates the segment formula and clamps to [0, W-1] x [0, H-1]. FULL
/// returns the clamped face box. Throws InsufficientVisibility listing every
/// required fiducial below tau.
BoundingBox segment_box(const FiducialSet& f, SegmentId s, double tau = kDefaultTau);

/// True iff every required fiducial of `s` has visibility >= tau.
bool segment_visible(const FiducialSet& f, SegmentId s, double tau = kDefaultTau);

using SegmentBoxResult = std::variant<BoundingBox, InsufficientVisibility>;

/// Indexed by predictor index 0..14 (FULL first).
std::array<SegmentBoxResult, kSegmentCount + 1> all_segment_boxes(const FiducialSet& f,
                                                                  double tau = kDefaultTau);

/// Bilinear resampling of the inclusive box to out_w x out_h. Sample centres
/// map as x = x_min + (ox + 0.5) * (x_max - x_min + 1) / out_w - 0.5 with edge
/// replication, so a full-image box at the original size is the identity.
FloatImage crop_and_resize(const FloatImage& image, const BoundingBox& box, int out_w, int out_h);
FloatImage crop_and_resize(const Image& image, const BoundingBox& box, int out_w, int out_h);

struct SegmentCrop {
  SegmentId segment = SegmentId::FULL;
  FloatImage pixels;  // zero when not visible
  BoundingBox source_box;
  bool visible = false;
};

SegmentCrop make_segment_crop(const Image& image, const FiducialSet& f, SegmentId s, int size,
                              double tau = kDefaultTau);

enum class PartialVariant { PL12, PL34, PR12, PR34, PU12, PU34 };

inline constexpr std::array<PartialVariant, 6> kPartialVariants = {
    PartialVariant::PL12, PartialVariant::PL34, PartialVariant::PR12,
    PartialVariant::PR34, PartialVariant::PU12, PartialVariant::PU34};

std::string_view variant_name(PartialVariant v);  // "P-L12", ...
std::optional<PartialVariant> parse_variant_name(std::string_view name);
SegmentId retained_segment(PartialVariant v);

struct PartialResult {
  Image image;
  FiducialSet fiducials;
  BoundingBox retained_box;
};

/// Keeps the retained segment's pixels, paints everything else white and
/// zeroes the visibility of fiducials outside the retained box.
PartialResult make_partial(const Image& image, const FiducialSet& f, PartialVariant v,
                           double tau = kDefaultTau);

/// 1-based index of the fiducial that fiducial k becomes under a mirror.
int mirrored_fiducial(int k);

/// Segment occupying the mirrored region.
SegmentId mirrored_segment(SegmentId s);

struct FlipResult {
  Image image;
  FiducialSet fiducials;
  std::array<SegmentId, kSegmentCount + 1> remap{};  // original -> flipped identity
};

FlipResult hflip(const Image& image, const FiducialSet& f);
FiducialSet hflip(const FiducialSet& f);
/// Mirror of a box within a raster of the given width.
BoundingBox mirror_box(const BoundingBox& box, int image_width);

}  // namespace splitface
