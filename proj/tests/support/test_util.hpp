#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

namespace test_util {

// Empty scratch directory under the build tree's temp area.
inline std::filesystem::path fresh_dir(const std::string& name) {
  const char* base = std::getenv("SSLAB_TEST_TMP");
  const auto root = std::filesystem::path(base ? base : std::filesystem::temp_directory_path().string()) /
                    "sslab_tests" / name;
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  return root;
}

}  // namespace test_util

#include "sslab/image.hpp"
#include "sslab/rng.hpp"

namespace test_util {

// Uniform pixels in [-1, 1).
inline sslab::Image random_image(int channels, int height, int width, std::uint64_t seed) {
  sslab::Image img(channels, height, width);
  sslab::Rng rng(seed);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return img;
}

}  // namespace test_util
