#include <algorithm>
#include <cmath>

#include "hccr/pack.hpp"
#include "hccr/rng.hpp"

namespace hccr {

namespace {

// Class prototypes are a function of the class index only (fixed internal
// seed), so packs generated with different user seeds agree on what each
// class looks like; only the per-sample jitter differs.
constexpr std::uint64_t kPrototypeSeed = 0x48435352'474C5946ull;

struct Stroke {
  double x0, y0, x1, y1;
  double thickness;
};

std::vector<Stroke> class_prototype(std::int64_t class_index) {
  RngStream rng = RngStream(kPrototypeSeed).fork(static_cast<std::uint64_t>(class_index));
  const int strokes = 3 + static_cast<int>(rng.uniform_int(4));  // 3..6
  std::vector<Stroke> proto;
  proto.reserve(strokes);
  for (int s = 0; s < strokes; ++s) {
    Stroke st;
    st.x0 = rng.uniform(24.0, 104.0);
    st.y0 = rng.uniform(24.0, 104.0);
    for (;;) {
      st.x1 = rng.uniform(24.0, 104.0);
      st.y1 = rng.uniform(24.0, 104.0);
      const double len = std::hypot(st.x1 - st.x0, st.y1 - st.y0);
      if (len >= 36.0) break;
    }
    st.thickness = rng.uniform(3.0, 5.5);
    proto.push_back(st);
  }
  return proto;
}

double point_segment_distance(double px, double py, const Stroke& s) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double wx = px - s.x0, wy = py - s.y0;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0.0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (s.x0 + t * vx), py - (s.y0 + t * vy));
}

void render_sample(const std::vector<Stroke>& proto, RngStream& rng, double* image) {
  const double dx = rng.uniform(-6.0, 6.0);
  const double dy = rng.uniform(-6.0, 6.0);
  const double angle = rng.uniform(-10.0, 10.0) * (3.14159265358979323846 / 180.0);
  const double thick_scale = rng.uniform(0.85, 1.15);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double cx = kCanvas / 2.0, cy = kCanvas / 2.0;

  std::fill(image, image + kCanvasPixels, 0.0);
  for (const Stroke& base : proto) {
    Stroke s = base;
    auto rotate = [&](double& x, double& y) {
      const double rx = ca * (x - cx) - sa * (y - cy) + cx + dx;
      const double ry = sa * (x - cx) + ca * (y - cy) + cy + dy;
      x = rx;
      y = ry;
    };
    rotate(s.x0, s.y0);
    rotate(s.x1, s.y1);
    const double r = 0.5 * s.thickness * thick_scale;

    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(s.x0, s.x1) - r - 1.0)));
    const int x_hi = std::min(kCanvas - 1, static_cast<int>(std::ceil(std::max(s.x0, s.x1) + r + 1.0)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(s.y0, s.y1) - r - 1.0)));
    const int y_hi = std::min(kCanvas - 1, static_cast<int>(std::ceil(std::max(s.y0, s.y1) + r + 1.0)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double d = point_segment_distance(x + 0.5, y + 0.5, s);
        const double cover = std::clamp(r + 0.5 - d, 0.0, 1.0);  // ~1 px soft edge
        double& px = image[static_cast<std::size_t>(y) * kCanvas + x];
        px = std::max(px, cover);
      }
    }
  }
  for (int i = 0; i < kCanvasPixels; ++i) {
    image[i] = std::clamp(image[i] + rng.uniform(-0.03, 0.03), 0.0, 1.0);
  }
}

}  // namespace

DatasetPack synth_dataset(std::int64_t num_classes, std::int64_t samples_per_class,
                          std::uint64_t seed) {
  if (num_classes < 2) throw ValueError("synth_dataset: need at least 2 classes");
  if (samples_per_class < 2) throw ValueError("synth_dataset: need at least 2 samples per class");

  std::vector<std::uint16_t> table(static_cast<std::size_t>(num_classes));
  for (std::int64_t k = 0; k < num_classes; ++k) {
    table[k] = static_cast<std::uint16_t>(0xB0A1 + k);
  }

  const RngStream root(seed);
  std::vector<std::uint32_t> labels;
  labels.reserve(static_cast<std::size_t>(num_classes * samples_per_class));
  std::vector<std::uint8_t> pixels;
  pixels.reserve(labels.capacity() * static_cast<std::size_t>(kCanvasPixels));
  std::vector<double> image(kCanvasPixels);
  for (std::int64_t k = 0; k < num_classes; ++k) {
    const std::vector<Stroke> proto = class_prototype(k);
    for (std::int64_t i = 0; i < samples_per_class; ++i) {
      RngStream rng = root.fork((static_cast<std::uint64_t>(k) << 32) |
                                static_cast<std::uint64_t>(i));
      render_sample(proto, rng, image.data());
      labels.push_back(static_cast<std::uint32_t>(k));
      for (double v : image) pixels.push_back(quantize_pixel(v));
    }
  }
  return DatasetPack(std::move(table), std::move(labels), std::move(pixels));
}

}  // namespace hccr
