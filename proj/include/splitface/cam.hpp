#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "splitface/image.hpp"
#include "splitface/model.hpp"

namespace splitface {

/// Class activation map at the pre-GAP resolution.
struct ActivationMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major
  int predictor = 0;
  int attribute = 0;
  double min = 0.0;
  double max = 0.0;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// sum_j weights[j] * maps[0, j] for a (1, C, h, w) stack.
template <typename T>
ActivationMap cam_from_maps(const nn::Tensor<T>& maps, std::span<const T> weights);

/// CAM of `attribute` at predictor FULL (input (1, 3, 196, 196)) or a segment
/// (input (1, 3, 64, 64)). Throws UnsupportedPredictor for GP, whose head
/// sits on a dense merge rather than directly on a GAP, and
/// AttributeNotPredicted when the attribute is outside the predictor's mask.
template <typename T>
ActivationMap compute_cam(const BasicSplitFaceModel<T>& model, int predictor, int attribute,
                          const nn::Tensor<T>& input);

/// Min-max normalised map resampled bilinearly to width x height (one
/// channel, values in [0, 1]). A constant map becomes 0.5 everywhere.
FloatImage normalized_heatmap(const ActivationMap& map, int width, int height);

/// Writes the normalised heat map as a P5 PGM at the crop's size and a P6
/// overlay blending the crop 50/50 with the heat in the red channel.
void export_heatmap(const ActivationMap& map, const Image& crop, const std::filesystem::path& pgm_path,
                    const std::filesystem::path& overlay_path);

}  // namespace splitface
