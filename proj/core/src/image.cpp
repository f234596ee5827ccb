#include "sslab/image.hpp"

#include <algorithm>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "sslab/error.hpp"

namespace sslab {
namespace {

cv::Mat to_mat(const Image& image) {
  std::vector<cv::Mat> planes;
  planes.reserve(image.channels);
  for (int c = 0; c < image.channels; ++c) {
    planes.emplace_back(image.height, image.width, CV_32F,
                        const_cast<float*>(image.data.data()) +
                            static_cast<std::size_t>(c) * image.height * image.width);
  }
  cv::Mat merged;
  cv::merge(planes, merged);
  return merged;
}

Image from_mat(const cv::Mat& mat, int channels) {
  Image out(channels, mat.rows, mat.cols);
  std::vector<cv::Mat> planes;
  cv::split(mat, planes);
  for (int c = 0; c < channels; ++c) {
    cv::Mat dst(mat.rows, mat.cols, CV_32F,
                out.data.data() + static_cast<std::size_t>(c) * mat.rows * mat.cols);
    planes[c].copyTo(dst);
  }
  return out;
}

Image resize_with(const Image& image, int height, int width, int interpolation) {
  if (height <= 0 || width <= 0) throw InvalidArgument("resize: target size must be positive");
  if (image.height == height && image.width == width) return image;
  cv::Mat resized;
  cv::resize(to_mat(image), resized, cv::Size(width, height), 0, 0, interpolation);
  return from_mat(resized, image.channels);
}

}  // namespace

Image::Image(int channels, int height, int width, float fill)
    : channels(channels),
      height(height),
      width(width),
      data(static_cast<std::size_t>(channels) * height * width, fill) {}

bool in_unit_range(const Image& image) {
  return std::all_of(image.data.begin(), image.data.end(),
                     [](float v) { return v >= -1.0f && v <= 1.0f; });
}

Image resize(const Image& image, int height, int width) {
  return resize_with(image, height, width, cv::INTER_LINEAR);
}

Image resize_area(const Image& image, int height, int width) {
  const bool shrinking = height <= image.height && width <= image.width;
  return resize_with(image, height, width, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
}

Image crop(const Image& image, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || top + height > image.height || left + width > image.width) {
    throw InvalidArgument("crop: window outside image");
  }
  Image out(image.channels, height, width);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < height; ++y) {
      const float* src = &image.data[(static_cast<std::size_t>(c) * image.height + top + y) *
                                         image.width + left];
      std::copy(src, src + width, &out.at(c, y, 0));
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.channels, image.height, image.width);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
      }
    }
  }
  return out;
}

}  // namespace sslab

namespace sslab {

Image rotate_quarter_turns(const Image& image, int quarter_turns) {
  if (!image.square()) throw InvalidArgument("rotation requires a square image");
  const int turns = ((quarter_turns % 4) + 4) % 4;
  if (turns == 0) return image;
  const int n = image.width;
  Image out(image.channels, n, n);
  for (int c = 0; c < image.channels; ++c) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        float v = 0.0f;
        switch (turns) {
          case 1: v = image.at(c, j, n - 1 - i); break;
          case 2: v = image.at(c, n - 1 - i, n - 1 - j); break;
          default: v = image.at(c, n - 1 - j, i); break;
        }
        out.at(c, i, j) = v;
      }
    }
  }
  return out;
}

}  // namespace sslab
