#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "splitface/synthetic.hpp"

// Scratch directories and a shared small synthetic dataset.
namespace fixture {

inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "splitface_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Message of the E thrown by f, or "<no error>".
template <typename E>
std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  return "<no error>";
}

/// 12 train, 4 val, 4 test faces at 128 px, seed 3. Built once per process.
inline const std::filesystem::path& small_dataset() {
  static const std::filesystem::path dir = [] {
    auto d = scratch("small_synthetic");
    splitface::synthetic::Config c;
    c.train = 12;
    c.val = 4;
    c.test = 4;
    c.seed = 3;
    splitface::synthetic::generate(c, d);
    return d;
  }();
  return dir;
}

}  // namespace fixture
