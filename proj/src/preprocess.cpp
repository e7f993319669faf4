#include "hccr/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace hccr {

namespace {

struct FilterTaps {
  // per destination index: contributing source range [first, first+n) and weights
  std::vector<int> first;
  std::vector<int> count;
  std::vector<double> weights;  // rows of max_taps, normalized
  int max_taps = 0;
};

FilterTaps build_taps(int src_n, int dst_n) {
  FilterTaps t;
  const double scale = static_cast<double>(src_n) / dst_n;
  const double support = std::max(scale, 1.0);  // widen when minifying
  t.max_taps = static_cast<int>(std::ceil(2.0 * support)) + 2;
  t.first.resize(dst_n);
  t.count.resize(dst_n);
  t.weights.assign(static_cast<std::size_t>(dst_n) * t.max_taps, 0.0);
  for (int i = 0; i < dst_n; ++i) {
    const double center = (i + 0.5) * scale;
    int lo = static_cast<int>(std::floor(center - support + 0.5));
    int hi = static_cast<int>(std::floor(center + support + 0.5));
    lo = std::max(lo, 0);
    hi = std::min(hi, src_n);
    double sum = 0.0;
    double* w = t.weights.data() + static_cast<std::size_t>(i) * t.max_taps;
    for (int j = lo; j < hi; ++j) {
      const double x = (j + 0.5 - center) / support;
      const double v = std::max(0.0, 1.0 - std::abs(x));
      w[j - lo] = v;
      sum += v;
    }
    if (sum <= 0.0) {  // no tap caught the triangle; fall back to the nearest pixel
      lo = std::clamp(static_cast<int>(center), 0, src_n - 1);
      hi = lo + 1;
      w[0] = 1.0;
      sum = 1.0;
    }
    for (int j = 0; j < hi - lo; ++j) w[j] /= sum;
    t.first[i] = lo;
    t.count[i] = hi - lo;
  }
  return t;
}

}  // namespace

std::vector<double> resample_bilinear(const std::vector<double>& src, int src_w, int src_h,
                                      int dst_w, int dst_h) {
  const FilterTaps tx = build_taps(src_w, dst_w);
  const FilterTaps ty = build_taps(src_h, dst_h);

  // horizontal pass, then vertical
  std::vector<double> mid(static_cast<std::size_t>(src_h) * dst_w, 0.0);
  for (int y = 0; y < src_h; ++y) {
    const double* row = src.data() + static_cast<std::size_t>(y) * src_w;
    double* out = mid.data() + static_cast<std::size_t>(y) * dst_w;
    for (int x = 0; x < dst_w; ++x) {
      const double* w = tx.weights.data() + static_cast<std::size_t>(x) * tx.max_taps;
      double v = 0.0;
      for (int j = 0; j < tx.count[x]; ++j) v += w[j] * row[tx.first[x] + j];
      out[x] = v;
    }
  }
  std::vector<double> dst(static_cast<std::size_t>(dst_h) * dst_w, 0.0);
  for (int y = 0; y < dst_h; ++y) {
    const double* w = ty.weights.data() + static_cast<std::size_t>(y) * ty.max_taps;
    double* out = dst.data() + static_cast<std::size_t>(y) * dst_w;
    for (int j = 0; j < ty.count[y]; ++j) {
      const double* row = mid.data() + static_cast<std::size_t>(ty.first[y] + j) * dst_w;
      const double wj = w[j];
      for (int x = 0; x < dst_w; ++x) out[x] += wj * row[x];
    }
  }
  return dst;
}

std::vector<double> preprocess(const GntRecord& record) {
  record.validate();
  const int w = record.width, h = record.height;

  // 1. invert to ink-high
  std::vector<double> ink(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < ink.size(); ++i) {
    ink[i] = (255.0 - record.bitmap[i]) / 255.0;
  }

  // 2. tight bounding box of ink
  int x0 = w, x1 = -1, y0 = h, y1 = -1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (ink[static_cast<std::size_t>(y) * w + x] > 0.0) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) throw DegenerateSampleError("sample has no ink pixel");
  const int crop_w = x1 - x0 + 1, crop_h = y1 - y0 + 1;
  std::vector<double> crop(static_cast<std::size_t>(crop_w) * crop_h);
  for (int y = 0; y < crop_h; ++y) {
    for (int x = 0; x < crop_w; ++x) {
      crop[static_cast<std::size_t>(y) * crop_w + x] =
          ink[static_cast<std::size_t>(y0 + y) * w + (x0 + x)];
    }
  }

  // 3. scale so the longer side is exactly 120
  const double s = static_cast<double>(kGlyphExtent) / std::max(crop_w, crop_h);
  int out_w, out_h;
  if (crop_w >= crop_h) {
    out_w = kGlyphExtent;
    out_h = std::max(1, static_cast<int>(std::llround(crop_h * s)));
  } else {
    out_h = kGlyphExtent;
    out_w = std::max(1, static_cast<int>(std::llround(crop_w * s)));
  }
  std::vector<double> scaled = resample_bilinear(crop, crop_w, crop_h, out_w, out_h);

  // 4. center-pad to 128x128, extra pixel of odd margins on the bottom/right
  const int top = (kCanvas - out_h) / 2;
  const int left = (kCanvas - out_w) / 2;
  std::vector<double> canvas(kCanvasPixels, 0.0);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double v = scaled[static_cast<std::size_t>(y) * out_w + x];
      canvas[static_cast<std::size_t>(top + y) * kCanvas + (left + x)] =
          std::clamp(v, 0.0, 1.0);
    }
  }
  return canvas;
}

}  // namespace hccr
