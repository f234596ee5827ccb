#pragma once

#include <cstddef>
#include <vector>

namespace sslab {

/// Planar (channel, row, column) float image.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int channels, int height, int width, float fill = 0.0f);

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::size_t size() const { return data.size(); }
  bool square() const { return height == width; }

  bool operator==(const Image&) const = default;
};

/// True when every value lies in [-1, 1].
bool in_unit_range(const Image& image);

/// Bilinear resize (OpenCV INTER_LINEAR semantics).
Image resize(const Image& image, int height, int width);

/// Area-averaging resize, used when shrinking decoded files.
Image resize_area(const Image& image, int height, int width);

Image crop(const Image& image, int top, int left, int height, int width);

Image flip_horizontal(const Image& image);

/// Exact counter-clockwise rotation by quarter_turns * 90 degrees (square images).
/// dst(i, j) = src(j, W-1-i) for one quarter turn.
Image rotate_quarter_turns(const Image& image, int quarter_turns);

}  // namespace sslab
