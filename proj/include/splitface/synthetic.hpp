#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "splitface/geometry.hpp"

// Procedural face rasters with region-localised binary attributes.
namespace splitface::synthetic {

inline constexpr int kAttributeCount = 6;

struct AttributeInfo {
  const char* name;
  double prior;
  BoundingBox region;  // face-normalised: (0,0) is the face box TL, (1,1) its BR
  bool upper_half;
};

const std::array<AttributeInfo, kAttributeCount>& attributes();

struct Config {
  int train = 2000;
  int val = 500;
  int test = 500;
  int image_size = 128;
  std::uint64_t seed = 1;
};

/// Undistorted landmarks at the nominal face placement for `image_size`.
FiducialSet template_fiducials(int image_size = 128);

/// Pixel box of attribute `a`'s generating region for a given face box.
BoundingBox region_box(int a, const BoundingBox& face_box);

/// Writes a dataset directory readable by load_dataset.
void generate(const Config& config, const std::filesystem::path& out_dir);

}  // namespace splitface::synthetic
