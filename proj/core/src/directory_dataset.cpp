#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sslab/data.hpp"
#include "sslab/error.hpp"

namespace fs = std::filesystem;

namespace sslab {
namespace {

const std::set<std::string> kImageExtensions = {".png", ".jpg", ".jpeg", ".bmp", ".ppm",
                                                ".pgm", ".tif", ".tiff", ".webp"};

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return kImageExtensions.contains(ext);
}

Image decode(const fs::path& path, int side) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw RuntimeFailure("cannot decode image file " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image image(3, rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < rgb.cols; ++x) {
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = row[x][c] / 127.5f - 1.0f;
    }
  }
  Image out = resize_area(image, side, side);
  for (auto& v : out.data) v = std::clamp(v, -1.0f, 1.0f);
  return out;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp((v + 1.0f) * 127.5f, 0.0f, 255.0f)));
}

}  // namespace

DirectoryLoad load_directory_dataset(const fs::path& root, int side) {
  if (side <= 0) throw InvalidArgument("load_directory_dataset: side must be positive");
  if (!fs::is_directory(root)) throw InvalidArgument("dataset root is not a directory: " + root.string());

  std::vector<fs::path> class_dirs;
  std::size_t skipped = 0;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) {
      class_dirs.push_back(entry.path());
    } else if (entry.path().filename() != kDatasetSidecar) {
      ++skipped;
    }
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw InvalidArgument("dataset root has no class directories: " + root.string());

  nlohmann::json sidecar;
  const bool has_sidecar = fs::exists(root / kDatasetSidecar);
  if (has_sidecar) {
    std::ifstream in(root / kDatasetSidecar);
    try {
      in >> sidecar;
    } catch (const nlohmann::json::exception& e) {
      throw RuntimeFailure("malformed sidecar " + (root / kDatasetSidecar).string() + ": " + e.what());
    }
    // An exported table keeps its own class order.
    if (sidecar.contains("class_names")) {
      std::vector<fs::path> ordered;
      for (const auto& n : sidecar["class_names"]) {
        const fs::path dir = root / n.get<std::string>();
        if (std::find(class_dirs.begin(), class_dirs.end(), dir) == class_dirs.end()) {
          throw RuntimeFailure("sidecar names missing class directory " + dir.string());
        }
        ordered.push_back(dir);
      }
      if (ordered.size() != class_dirs.size()) {
        throw RuntimeFailure("sidecar class_names disagree with directory layout in " + root.string());
      }
      class_dirs = std::move(ordered);
    }
  }

  std::vector<LabeledImage> images;
  std::vector<std::string> names;
  std::int64_t next_id = 0;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    names.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
      if (entry.is_regular_file() && is_image_file(entry.path())) {
        files.push_back(entry.path());
      } else {
        ++skipped;
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      std::int64_t id = next_id++;
      if (has_sidecar) {
        try {
          id = std::stoll(file.stem().string());
        } catch (const std::exception&) {
          throw RuntimeFailure("sidecar present but file name is not an image id: " + file.string());
        }
      }
      images.push_back({decode(file, side), static_cast<int>(c), id});
    }
  }
  if (images.empty()) throw InvalidArgument("dataset root contains no image files: " + root.string());
  if (has_sidecar) {
    std::sort(images.begin(), images.end(),
              [](const LabeledImage& a, const LabeledImage& b) { return a.image_id < b.image_id; });
  }

  std::string name = root.filename().string();
  SplitMap split;
  if (has_sidecar) {
    name = sidecar.value("name", name);
    if (sidecar.contains("class_count") &&
        sidecar["class_count"].get<int>() != static_cast<int>(class_dirs.size())) {
      throw RuntimeFailure("sidecar class_count disagrees with directory layout in " + root.string());
    }
    if (sidecar.contains("split")) {
      for (const auto& [key, value] : sidecar["split"].items()) {
        split[std::stoll(key)] = split_from_string(value.get<std::string>());
      }
    }
  }
  return {DatasetTable(name, std::move(images), static_cast<int>(class_dirs.size()), std::move(split),
                       std::move(names)),
          skipped};
}

void export_directory_dataset(const DatasetTable& table, const fs::path& root) {
  fs::create_directories(root);
  std::vector<std::string> names = table.class_names();
  if (names.empty()) {
    for (int c = 0; c < table.class_count(); ++c) names.push_back("class_" + std::to_string(c));
  }
  for (const auto& n : names) fs::create_directories(root / n);

  for (const auto& item : table.images()) {
    const Image& px = item.pixels;
    cv::Mat bgr(px.height, px.width, CV_8UC3);
    for (int y = 0; y < px.height; ++y) {
      auto* row = bgr.ptr<cv::Vec3b>(y);
      for (int x = 0; x < px.width; ++x) {
        row[x] = cv::Vec3b(to_byte(px.at(2, y, x)), to_byte(px.at(1, y, x)), to_byte(px.at(0, y, x)));
      }
    }
    const fs::path file = root / names[item.class_id] / (std::to_string(item.image_id) + ".png");
    if (!cv::imwrite(file.string(), bgr)) throw RuntimeFailure("cannot write " + file.string());
  }

  nlohmann::json sidecar;
  sidecar["name"] = table.name();
  sidecar["class_count"] = table.class_count();
  sidecar["class_names"] = names;
  nlohmann::json split = nlohmann::json::object();
  for (const auto& [id, tag] : table.split()) split[std::to_string(id)] = std::string(to_string(tag));
  sidecar["split"] = split;
  std::ofstream out(root / kDatasetSidecar);
  out << sidecar.dump(2) << '\n';
  if (!out) throw RuntimeFailure("cannot write " + (root / kDatasetSidecar).string());
}

}  // namespace sslab
