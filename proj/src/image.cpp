#include "splitface/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "splitface/error.hpp"

namespace splitface {

FloatImage to_float(const Image& image) {
  FloatImage out(image.width, image.height, 3);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) out.data[i] = image.pixels[i];
  return out;
}

Image to_image(const FloatImage& image) {
  if (image.channels != 3) throw IoFailure("to_image expects 3 channels");
  Image out(image.width, image.height);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const float v = std::nearbyint(image.data[i]);
    out.pixels[i] = static_cast<std::uint8_t>(v < 0.0f ? 0.0f : (v > 255.0f ? 255.0f : v));
  }
  return out;
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(c);
  }
  return token;
}

struct NetpbmHeader {
  int width, height;
};

NetpbmHeader read_header(std::istream& in, const char* magic, const std::filesystem::path& path) {
  if (header_token(in) != magic) throw IoFailure(path.string() + ": expected " + magic);
  try {
    const int w = std::stoi(header_token(in));
    const int h = std::stoi(header_token(in));
    const int maxval = std::stoi(header_token(in));
    if (w <= 0 || h <= 0 || maxval != 255)
      throw IoFailure(path.string() + ": unsupported dimensions or maxval");
    return {w, h};
  } catch (const std::invalid_argument&) {
    throw IoFailure(path.string() + ": malformed header");
  } catch (const std::out_of_range&) {
    throw IoFailure(path.string() + ": malformed header");
  }
}

std::vector<std::uint8_t> read_payload(const std::filesystem::path& path, const char* magic,
                                       int channels, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  const auto header = read_header(in, magic, path);
  width = header.width;
  height = header.height;
  std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size()))
    throw IoFailure(path.string() + ": truncated pixel data");
  return data;
}

void write_payload(const std::filesystem::path& path, const char* magic, int width, int height,
                   const std::vector<std::uint8_t>& data) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + path.string());
  out << magic << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoFailure("write failed for " + path.string());
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  Image img;
  img.pixels = read_payload(path, "P6", 3, img.width, img.height);
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  write_payload(path, "P6", image.width, image.height, image.pixels);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  GrayImage img;
  img.pixels = read_payload(path, "P5", 1, img.width, img.height);
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  write_payload(path, "P5", image.width, image.height, image.pixels);
}

}  // namespace splitface
