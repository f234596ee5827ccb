#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "sslab/data.hpp"
#include "sslab/error.hpp"
#include "sslab/rng.hpp"

namespace sslab {
namespace {

// Class templates are tied to the class index, never to the dataset seed, so
// class k looks the same in every generated dataset.
constexpr std::uint64_t kTemplateSeed = 0x51ab5eedULL;

struct Point {
  double x;
  double y;
};

using Polygon = std::vector<Point>;

// Unit frame: x right, y up, shapes fit in [-1, 1]^2 and stand upright.
std::vector<Polygon> shape_template(int shape_id) {
  switch (shape_id) {
    case 0:  // house
      return {{{-0.6, -0.8}, {0.6, -0.8}, {0.6, 0.1}, {-0.6, 0.1}},
              {{-0.85, 0.1}, {0.85, 0.1}, {0.0, 0.9}}};
    case 1:  // arrow
      return {{{-0.2, -0.9}, {0.2, -0.9}, {0.2, 0.1}, {-0.2, 0.1}},
              {{-0.7, 0.1}, {0.7, 0.1}, {0.0, 0.9}}};
    case 2:  // T
      return {{{-0.8, 0.5}, {0.8, 0.5}, {0.8, 0.9}, {-0.8, 0.9}},
              {{-0.2, -0.9}, {0.2, -0.9}, {0.2, 0.5}, {-0.2, 0.5}}};
    case 3:  // L
      return {{{-0.6, -0.9}, {-0.2, -0.9}, {-0.2, 0.9}, {-0.6, 0.9}},
              {{-0.2, -0.9}, {0.7, -0.9}, {0.7, -0.5}, {-0.2, -0.5}}};
    case 4:  // triangle
      return {{{-0.85, -0.75}, {0.85, -0.75}, {0.0, 0.9}}};
    case 5:  // latin cross
      return {{{-0.15, -0.9}, {0.15, -0.9}, {0.15, 0.9}, {-0.15, 0.9}},
              {{-0.6, 0.3}, {0.6, 0.3}, {0.6, 0.6}, {-0.6, 0.6}}};
    case 6:  // trapezoid
      return {{{-0.9, -0.7}, {0.9, -0.7}, {0.35, 0.6}, {-0.35, 0.6}}};
    case 7: {  // mushroom
      Polygon cap;
      for (int k = 0; k <= 16; ++k) {
        const double a = std::numbers::pi * k / 16.0;
        cap.push_back({0.85 * std::cos(a), 0.05 + 0.8 * std::sin(a)});
      }
      return {cap, {{-0.2, -0.9}, {0.2, -0.9}, {0.2, 0.05}, {-0.2, 0.05}}};
    }
    default: {
      // Pole with a seeded pennant; the pole keeps a clear up direction.
      Rng rng(derive_seed(kTemplateSeed, static_cast<std::uint64_t>(shape_id)));
      const double w = rng.uniform(0.1, 0.25);
      const double top = rng.uniform(0.2, 0.9);
      const double len = rng.uniform(0.4, 0.9) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
      const double drop = rng.uniform(0.3, 0.7);
      return {{{-w, -0.9}, {w, -0.9}, {w, top}, {-w, top}},
              {{0.0, top}, {len, top - drop / 2}, {0.0, top - drop}},
              {{-0.6, -0.9}, {0.6, -0.9}, {0.6, -0.7}, {-0.6, -0.7}}};
    }
  }
}

bool inside(const Polygon& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

struct Colors {
  std::array<double, 3> background;
  std::array<double, 3> foreground;
};

Colors contrasting_colors(Rng& rng) {
  const double bg = rng.uniform(-0.9, 0.9);
  double fg = rng.uniform(-0.9, 0.9);
  while (std::abs(fg - bg) < 0.7) fg = rng.uniform(-0.95, 0.95);
  Colors out{};
  for (int c = 0; c < 3; ++c) {
    out.background[c] = bg + rng.uniform(-0.15, 0.15);
    out.foreground[c] = fg + rng.uniform(-0.15, 0.15);
  }
  return out;
}

float clamp_unit(double v) { return static_cast<float>(std::clamp(v, -1.0, 1.0)); }

// Renders a coverage mask with 2x2 supersampling; `covered` receives unit-frame
// coordinates with y up.
template <typename Covered>
std::vector<double> coverage(int size, Covered covered) {
  std::vector<double> mask(static_cast<std::size_t>(size) * size, 0.0);
  constexpr std::array<double, 2> kSub{0.25, 0.75};
  for (int py = 0; py < size; ++py) {
    for (int px = 0; px < size; ++px) {
      int hits = 0;
      for (const double sy : kSub) {
        for (const double sx : kSub) {
          const double x = 2.0 * (px + sx) / size - 1.0;
          const double y = 1.0 - 2.0 * (py + sy) / size;
          hits += covered(x, y) ? 1 : 0;
        }
      }
      mask[static_cast<std::size_t>(py) * size + px] = hits / 4.0;
    }
  }
  return mask;
}

Image compose(int size, const std::vector<double>& mask, const Colors& colors, Rng& rng,
              double noise) {
  Image out(3, size, size);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double m = mask[static_cast<std::size_t>(y) * size + x];
        const double v = (1.0 - m) * colors.background[c] + m * colors.foreground[c];
        out.at(c, y, x) = clamp_unit(v + noise * rng.normal());
      }
    }
  }
  return out;
}

Image render_glyph(int glyph_id, int size, std::uint64_t seed) {
  struct Stroke {
    Point a;
    Point b;
  };
  Rng shape_rng(derive_seed(kTemplateSeed ^ 0x6c79ULL, static_cast<std::uint64_t>(glyph_id)));
  const int strokes = 3 + static_cast<int>(shape_rng.uniform_index(3));
  std::vector<Stroke> glyph;
  while (static_cast<int>(glyph.size()) < strokes) {
    auto grid = [&] { return -0.7 + 0.35 * static_cast<double>(shape_rng.uniform_index(5)); };
    Stroke s{{grid(), grid()}, {grid(), grid()}};
    if (std::hypot(s.a.x - s.b.x, s.a.y - s.b.y) >= 0.4) glyph.push_back(s);
  }

  Rng rng(seed);
  const double scale = rng.uniform(0.85, 1.1);
  const double dx = rng.uniform(-0.1, 0.1);
  const double dy = rng.uniform(-0.1, 0.1);
  const double angle = rng.uniform(-0.1, 0.1);
  const double thickness = rng.uniform(0.10, 0.16);
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  for (auto& s : glyph) {
    for (Point* p : {&s.a, &s.b}) {
      const double x = p->x + rng.uniform(-0.05, 0.05);
      const double y = p->y + rng.uniform(-0.05, 0.05);
      p->x = scale * (ca * x - sa * y) + dx;
      p->y = scale * (sa * x + ca * y) + dy;
    }
  }

  const auto mask = coverage(size, [&](double x, double y) {
    for (const auto& s : glyph) {
      const double vx = s.b.x - s.a.x;
      const double vy = s.b.y - s.a.y;
      const double t = std::clamp(((x - s.a.x) * vx + (y - s.a.y) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
      if (std::hypot(x - s.a.x - t * vx, y - s.a.y - t * vy) <= thickness / 2) return true;
    }
    return false;
  });

  Colors colors{};
  const double sheet = rng.uniform(0.5, 1.0);
  const double ink = rng.uniform(-1.0, -0.4);
  for (int c = 0; c < 3; ++c) {
    colors.background[c] = sheet + rng.uniform(-0.05, 0.05);
    colors.foreground[c] = ink + rng.uniform(-0.05, 0.05);
  }
  return compose(size, mask, colors, rng, 0.02);
}

// Texture statistics are invariant under the 90-degree rotation group: every
// orientation and placement parameter is drawn from a rotation-symmetric law.
Image render_texture(int texture_id, int size, std::uint64_t seed) {
  Rng rng(seed);
  const int family = texture_id % 3;
  const int level = texture_id / 3;
  const double px_scale = size / 64.0;
  std::vector<double> field(static_cast<std::size_t>(size) * size, 0.0);
  auto at = [&](int y, int x) -> double& { return field[static_cast<std::size_t>(y) * size + x]; };

  if (family == 0) {
    // Sum of gratings with isotropic orientation.
    const double wavelength = (5.0 + 4.0 * level) * px_scale;
    for (int k = 0; k < 3; ++k) {
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double lambda = wavelength * rng.uniform(0.85, 1.15);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double kx = 2.0 * std::numbers::pi * std::cos(theta) / lambda;
      const double ky = 2.0 * std::numbers::pi * std::sin(theta) / lambda;
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) at(y, x) += std::sin(kx * x + ky * y + phase) / 3.0;
      }
    }
  } else if (family == 1) {
    // Toroidally wrapped Gaussian blobs of random sign.
    const double radius = (2.5 + 2.0 * level) * px_scale;
    const int count = static_cast<int>(size * size / (radius * radius * 6.0)) + 1;
    for (int k = 0; k < count; ++k) {
      const double cx = rng.uniform(0.0, size);
      const double cy = rng.uniform(0.0, size);
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      for (int y = 0; y < size; ++y) {
        double ddy = std::abs(y + 0.5 - cy);
        ddy = std::min(ddy, size - ddy);
        for (int x = 0; x < size; ++x) {
          double ddx = std::abs(x + 0.5 - cx);
          ddx = std::min(ddx, size - ddx);
          at(y, x) += sign * std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * radius * radius));
        }
      }
    }
    for (auto& v : field) v = std::tanh(1.5 * v);
  } else {
    // Smooth value noise on a square lattice with a random offset.
    const double cell = (4.0 + 4.0 * level) * px_scale;
    const int lattice = static_cast<int>(std::ceil(size / cell)) + 2;
    std::vector<double> knots(static_cast<std::size_t>(lattice) * lattice);
    for (auto& v : knots) v = rng.uniform(-1.0, 1.0);
    const double ox = rng.uniform(0.0, cell);
    const double oy = rng.uniform(0.0, cell);
    auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
    for (int y = 0; y < size; ++y) {
      const double gy = (y + 0.5 + oy) / cell;
      const int iy = static_cast<int>(gy);
      const double ty = smooth(gy - iy);
      for (int x = 0; x < size; ++x) {
        const double gx = (x + 0.5 + ox) / cell;
        const int ix = static_cast<int>(gx);
        const double tx = smooth(gx - ix);
        auto k = [&](int j, int i) { return knots[static_cast<std::size_t>(j) * lattice + i]; };
        const double top = k(iy, ix) * (1 - tx) + k(iy, ix + 1) * tx;
        const double bottom = k(iy + 1, ix) * (1 - tx) + k(iy + 1, ix + 1) * tx;
        at(y, x) = top * (1 - ty) + bottom * ty;
      }
    }
  }

  Colors colors = contrasting_colors(rng);
  std::vector<double> mask(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) mask[i] = std::clamp((field[i] + 1.0) / 2.0, 0.0, 1.0);
  return compose(size, mask, colors, rng, 0.03);
}

}  // namespace

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::kOrientedShapes: return "oriented_shapes";
    case SyntheticKind::kGlyphs: return "glyphs";
    case SyntheticKind::kTextures: return "textures";
  }
  return "unknown";
}

SyntheticKind synthetic_kind_from_string(std::string_view text) {
  if (text == "oriented_shapes") return SyntheticKind::kOrientedShapes;
  if (text == "glyphs") return SyntheticKind::kGlyphs;
  if (text == "textures") return SyntheticKind::kTextures;
  throw InvalidArgument("unknown synthetic dataset kind '" + std::string(text) + "'");
}

Image render_oriented_shape(int shape_id, int quarter_turns, int size, std::uint64_t seed) {
  const auto polygons = shape_template(shape_id);
  Rng rng(seed);
  const double scale = rng.uniform(0.55, 0.8);
  const double dx = rng.uniform(-0.12, 0.12);
  const double dy = rng.uniform(-0.12, 0.12);
  const double angle = rng.uniform(-0.14, 0.14);
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  const auto mask = coverage(size, [&](double x, double y) {
    // Map the pixel back into the template frame.
    const double ux = (x - dx) / scale;
    const double uy = (y - dy) / scale;
    const double tx = ca * ux + sa * uy;
    const double ty = -sa * ux + ca * uy;
    return std::any_of(polygons.begin(), polygons.end(),
                       [&](const Polygon& p) { return inside(p, tx, ty); });
  });
  const Colors colors = contrasting_colors(rng);
  return rotate_quarter_turns(compose(size, mask, colors, rng, 0.04), quarter_turns);
}

DatasetTable make_synthetic_dataset(SyntheticKind kind, int n_per_class, int class_count, int size,
                                    std::uint64_t seed) {
  if (size < 32) throw InvalidArgument("make_synthetic_dataset: size must be at least 32");
  if (class_count < 2) throw InvalidArgument("make_synthetic_dataset: class_count must be at least 2");
  if (n_per_class < 1) throw InvalidArgument("make_synthetic_dataset: n_per_class must be positive");

  std::vector<LabeledImage> images;
  images.reserve(static_cast<std::size_t>(n_per_class) * class_count);
  std::vector<std::string> names;
  for (int c = 0; c < class_count; ++c) {
    names.push_back("class_" + std::string(c < 10 ? "0" : "") + std::to_string(c));
    for (int i = 0; i < n_per_class; ++i) {
      const std::int64_t id = static_cast<std::int64_t>(c) * n_per_class + i;
      const std::uint64_t image_seed = derive_seed(seed, static_cast<std::uint64_t>(id));
      Image pixels;
      switch (kind) {
        case SyntheticKind::kOrientedShapes: pixels = render_oriented_shape(c, 0, size, image_seed); break;
        case SyntheticKind::kGlyphs: pixels = render_glyph(c, size, image_seed); break;
        case SyntheticKind::kTextures: pixels = render_texture(c, size, image_seed); break;
      }
      images.push_back({std::move(pixels), c, id});
    }
  }
  const std::string name = std::string(to_string(kind)) + "-c" + std::to_string(class_count) + "-n" +
                           std::to_string(n_per_class) + "-s" + std::to_string(size) + "-seed" +
                           std::to_string(seed);
  return DatasetTable(name, std::move(images), class_count, {}, std::move(names));
}

}  // namespace sslab
