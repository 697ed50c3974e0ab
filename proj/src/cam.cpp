#include "splitface/cam.hpp"

#include <algorithm>
#include <cmath>

#include "splitface/geometry.hpp"

namespace splitface {

template <typename T>
ActivationMap cam_from_maps(const nn::Tensor<T>& maps, std::span<const T> weights) {
  if (maps.rank() != 4 || maps.dim(0) != 1)
    throw ShapeMismatch("CAM needs a (1, C, h, w) map stack, got " + nn::shape_string(maps.shape()));
  const int C = maps.dim(1), H = maps.dim(2), W = maps.dim(3);
  if (static_cast<int>(weights.size()) != C)
    throw ShapeMismatch(std::to_string(weights.size()) + " weights for " + std::to_string(C) + " maps");
  ActivationMap m;
  m.height = H;
  m.width = W;
  m.values.assign(static_cast<std::size_t>(H) * W, 0.0);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c) {
    const T* src = maps.data() + c * plane;
    const double w = static_cast<double>(weights[c]);
    for (std::size_t k = 0; k < plane; ++k) m.values[k] += w * static_cast<double>(src[k]);
  }
  const auto [lo, hi] = std::minmax_element(m.values.begin(), m.values.end());
  m.min = *lo;
  m.max = *hi;
  return m;
}

template <typename T>
ActivationMap compute_cam(const BasicSplitFaceModel<T>& model, int predictor, int attribute,
                          const nn::Tensor<T>& input) {
  if (predictor == kGlobalPredictor)
    throw UnsupportedPredictor("GP has no GAP-to-head path; CAM is defined for FULL and segments");
  if (predictor < 0 || predictor >= kPredictorCount)
    throw UnsupportedPredictor("predictor index " + std::to_string(predictor) + " out of range");
  const int pos = model.mask().position(predictor, attribute);
  if (pos < 0)
    throw AttributeNotPredicted(predictor_name(predictor) + " does not predict attribute " + std::to_string(attribute));
  if (input.rank() != 4 || input.dim(0) != 1) throw ShapeMismatch("CAM input must hold exactly one sample");
  const nn::Tensor<T> maps =
      predictor == kFullPredictor ? model.full_map(input) : model.forward_segment(predictor, input).second;
  const auto& w = model.head(predictor).weight().value;
  const int C = w.dim(1);
  ActivationMap m = cam_from_maps(maps, std::span<const T>(w.data() + static_cast<std::size_t>(pos) * C, C));
  m.predictor = predictor;
  m.attribute = attribute;
  return m;
}

FloatImage normalized_heatmap(const ActivationMap& map, int width, int height) {
  FloatImage small(map.width, map.height, 1);
  const double range = map.max - map.min;
  for (std::size_t k = 0; k < map.values.size(); ++k)
    small.data[k] = range > 0.0 ? static_cast<float>((map.values[k] - map.min) / range) : 0.5f;
  return crop_and_resize(small, BoundingBox{0.0, 0.0, map.width - 1.0, map.height - 1.0}, width, height);
}

void export_heatmap(const ActivationMap& map, const Image& crop, const std::filesystem::path& pgm_path,
                    const std::filesystem::path& overlay_path) {
  const FloatImage heat = normalized_heatmap(map, crop.width, crop.height);
  GrayImage gray{crop.width, crop.height, std::vector<std::uint8_t>(heat.data.size())};
  Image overlay(crop.width, crop.height);
  for (int y = 0; y < crop.height; ++y)
    for (int x = 0; x < crop.width; ++x) {
      const double h = std::clamp(static_cast<double>(heat.at(x, y, 0)), 0.0, 1.0);
      gray.pixels[static_cast<std::size_t>(y) * crop.width + x] = static_cast<std::uint8_t>(std::lround(255.0 * h));
      for (int c = 0; c < 3; ++c) {
        const double tint = c == 0 ? 255.0 * h : 0.0;
        overlay.at(x, y, c) = static_cast<std::uint8_t>(std::lround(0.5 * crop.at(x, y, c) + 0.5 * tint));
      }
    }
  write_pgm(pgm_path, gray);
  write_ppm(overlay_path, overlay);
}

template ActivationMap cam_from_maps<float>(const nn::Tensor<float>&, std::span<const float>);
template ActivationMap cam_from_maps<double>(const nn::Tensor<double>&, std::span<const double>);
template ActivationMap compute_cam<float>(const BasicSplitFaceModel<float>&, int, int, const nn::Tensor<float>&);
template ActivationMap compute_cam<double>(const BasicSplitFaceModel<double>&, int, int, const nn::Tensor<double>&);

}  // namespace splitface
