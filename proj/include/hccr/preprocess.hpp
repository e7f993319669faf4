#ifndef HCCR_PREPROCESS_HPP
#define HCCR_PREPROCESS_HPP

#include <vector>

#include "hccr/gnt.hpp"

namespace hccr {

inline constexpr int kCanvas = 128;          // output extent per side
inline constexpr int kGlyphExtent = 120;     // scaled ink extent (4 px margin)
inline constexpr int kCanvasPixels = kCanvas * kCanvas;

/// Crop/scale/pad/normalize pipeline. In order:
///   1. invert to ink-high reals: v = (255 - raw) / 255
///   2. crop to the tight bounding box of v > 0
///   3. scale the crop by 120 / max(crop_h, crop_w), aspect preserved,
///      bilinear resampling
///   4. center-pad with zeros to 128 x 128, odd margins split floor(top/left)
///      / ceil(bottom/right)
/// Returns 128*128 row-major values in [0,1]. Throws DegenerateSampleError
/// when the bitmap has no ink at all.
std::vector<double> preprocess(const GntRecord& record);

/// Separable triangle-filter resampler. Classic bilinear when magnifying; the
/// filter support widens by the scale factor when minifying, so every source
/// pixel contributes (tight-crop border ink cannot be skipped).
std::vector<double> resample_bilinear(const std::vector<double>& src, int src_w, int src_h,
                                      int dst_w, int dst_h);

}  // namespace hccr

#endif
