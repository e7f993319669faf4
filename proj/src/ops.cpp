#include "hccr/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

namespace hccr {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

bool track(const Tape& tape, const Tensor& a) { return tape.recording() && a.requires_grad(); }
bool track(const Tape& tape, const Tensor& a, const Tensor& b) {
  return tape.recording() && (a.requires_grad() || b.requires_grad());
}

Tensor result(Shape shape, std::vector<double> data, bool tracked) {
  Tensor out(std::move(shape), std::move(data));
  if (tracked) out.set_requires_grad(true);
  return out;
}

void acc(TensorImpl& t, std::span<const double> g) { detail::accumulate(t, g); }

void acc_scaled(TensorImpl& t, std::span<const double> g, double c) {
  t.ensure_grad();
  double* dst = t.grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += c * g[i];
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": operand shapes differ, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(a.size()));
  const auto av = a.data();
  const auto bv = b.data();
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = av[i] + bv[i];
  const bool tracked = track(tape, a, b);
  Tensor r = result(a.shape(), std::move(out), tracked);
  if (tracked) {
    auto ai = a.handle(), bi = b.handle(), oi = r.handle();
    tape.record([ai, bi, oi] {
      if (ai->requires_grad) acc(*ai, oi->grad);
      if (bi->requires_grad) acc(*bi, oi->grad);
    });
  }
  return r;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(a.size()));
  const auto av = a.data();
  const auto bv = b.data();
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = av[i] - bv[i];
  const bool tracked = track(tape, a, b);
  Tensor r = result(a.shape(), std::move(out), tracked);
  if (tracked) {
    auto ai = a.handle(), bi = b.handle(), oi = r.handle();
    tape.record([ai, bi, oi] {
      if (ai->requires_grad) acc(*ai, oi->grad);
      if (bi->requires_grad) acc_scaled(*bi, oi->grad, -1.0);
    });
  }
  return r;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(a.size()));
  const auto av = a.data();
  const auto bv = b.data();
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = av[i] * bv[i];
  const bool tracked = track(tape, a, b);
  Tensor r = result(a.shape(), std::move(out), tracked);
  if (tracked) {
    auto ai = a.handle(), bi = b.handle(), oi = r.handle();
    tape.record([ai, bi, oi] {
      const auto& g = oi->grad;
      if (ai->requires_grad) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ai->grad[i] += g[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) bi->grad[i] += g[i] * ai->data[i];
      }
    });
  }
  return r;
}

Tensor square(Tape& tape, const Tensor& a) {
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(a.size()));
  const auto av = a.data();
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = av[i] * av[i];
  const bool tracked = track(tape, a);
  Tensor r = result(a.shape(), std::move(out), tracked);
  if (tracked) {
    auto ai = a.handle(), oi = r.handle();
    tape.record([ai, oi] {
      if (!ai->requires_grad) return;
      ai->ensure_grad();
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) ai->grad[i] += 2.0 * ai->data[i] * g[i];
    });
  }
  return r;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(a.size()));
  const auto av = a.data();
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = c * av[i];
  const bool tracked = track(tape, a);
  Tensor r = result(a.shape(), std::move(out), tracked);
  if (tracked) {
    auto ai = a.handle(), oi = r.handle();
    tape.record([ai, oi, c] {
      if (ai->requires_grad) acc_scaled(*ai, oi->grad, c);
    });
  }
  return r;
}

Tensor add_row_bias(Tape& tape, const Tensor& a, const Tensor& bias) {
  if (a.rank() != 2 || bias.rank() != 1 || a.dim(1) != bias.dim(0)) {
    throw ShapeError("add_row_bias: need m x n and n, got " + shape_str(a.shape()) + " and " +
                     shape_str(bias.shape()));
  }
  const std::int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(a.size()));
  const auto av = a.data();
  const auto bv = bias.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + bv[j];
  const bool tracked = track(tape, a, bias);
  Tensor r = result(a.shape(), std::move(out), tracked);
  if (tracked) {
    auto ai = a.handle(), bi = bias.handle(), oi = r.handle();
    tape.record([ai, bi, oi, m, n] {
      if (ai->requires_grad) acc(*ai, oi->grad);
      if (bi->requires_grad) {
        bi->ensure_grad();
        const double* g = oi->grad.data();
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t j = 0; j < n; ++j) bi->grad[j] += g[i * n + j];
      }
    });
  }
  return r;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(m * n));
  {
    MapC am(a.data().data(), m, k);
    MapC bm(b.data().data(), k, n);
    MapM om(out.data(), m, n);
    om.noalias() = am * bm;
  }
  const bool tracked = track(tape, a, b);
  Tensor r = result({m, n}, std::move(out), tracked);
  if (tracked) {
    auto ai = a.handle(), bi = b.handle(), oi = r.handle();
    tape.record([ai, bi, oi, m, k, n] {
      MapC g(oi->grad.data(), m, n);
      if (ai->requires_grad) {
        ai->ensure_grad();
        MapM ga(ai->grad.data(), m, k);
        MapC bm(bi->data.data(), k, n);
        ga.noalias() += g * bm.transpose();
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        MapM gb(bi->grad.data(), k, n);
        MapC am(ai->data.data(), m, k);
        gb.noalias() += am.transpose() * g;
      }
    });
  }
  return r;
}

namespace {

struct ConvDims {
  std::int64_t batch, in_ch, in_h, in_w;
  std::int64_t filters, kh, kw;
  std::int64_t stride, pad;
  std::int64_t out_h, out_w;
  std::int64_t patch() const { return in_ch * kh * kw; }
  std::int64_t out_hw() const { return out_h * out_w; }
};

/// Late layers have so few output positions that per-sample GEMMs are
/// setup-bound; fusing a block of samples into one patch() x (block * out_hw)
/// column matrix keeps the kernels fat. Early layers stay per-sample (their
/// GEMMs are already wide, and fusing would only add copies). The block size
/// is a pure function of the shapes, so results stay reproducible.
std::int64_t conv_block_size(const ConvDims& d) {
  const std::int64_t ohw = d.out_hw();
  if (ohw >= 1024) return 1;
  const std::int64_t want = (2048 + ohw - 1) / ohw;
  const std::int64_t per_sample = std::max<std::int64_t>(d.patch() * ohw, 1);
  const std::int64_t mem_cap = std::max<std::int64_t>(1, (std::int64_t{1} << 22) / per_sample);
  return std::clamp(std::min(want, mem_cap), std::int64_t{1}, d.batch);
}

/// One sample's input -> columns of a (patch x pitch) matrix starting at
/// column col0.
void im2col(const double* in, const ConvDims& d, double* cols, std::int64_t pitch,
            std::int64_t col0) {
  for (std::int64_t c = 0; c < d.in_ch; ++c) {
    const double* plane = in + c * d.in_h * d.in_w;
    for (std::int64_t ki = 0; ki < d.kh; ++ki) {
      for (std::int64_t kj = 0; kj < d.kw; ++kj) {
        double* row = cols + ((c * d.kh + ki) * d.kw + kj) * pitch + col0;
        for (std::int64_t oy = 0; oy < d.out_h; ++oy) {
          const std::int64_t iy = oy * d.stride + ki - d.pad;
          double* dst = row + oy * d.out_w;
          if (iy < 0 || iy >= d.in_h) {
            std::fill(dst, dst + d.out_w, 0.0);
            continue;
          }
          const double* src = plane + iy * d.in_w;
          if (d.stride == 1) {
            const std::int64_t off = kj - d.pad;
            const std::int64_t x0 = std::max<std::int64_t>(0, -off);
            const std::int64_t x1 = std::min(d.out_w, d.in_w - off);
            std::fill(dst, dst + x0, 0.0);
            if (x1 > x0) std::memcpy(dst + x0, src + x0 + off, sizeof(double) * (x1 - x0));
            std::fill(dst + std::max(x0, x1), dst + d.out_w, 0.0);
          } else {
            for (std::int64_t ox = 0; ox < d.out_w; ++ox) {
              const std::int64_t ix = ox * d.stride + kj - d.pad;
              dst[ox] = (ix >= 0 && ix < d.in_w) ? src[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

/// Scatter-add of one sample's columns (starting at col0 of a patch x pitch
/// matrix) back onto that sample's input gradient.
void col2im_add(const double* cols, const ConvDims& d, double* grad_in, std::int64_t pitch,
                std::int64_t col0) {
  for (std::int64_t c = 0; c < d.in_ch; ++c) {
    double* plane = grad_in + c * d.in_h * d.in_w;
    for (std::int64_t ki = 0; ki < d.kh; ++ki) {
      for (std::int64_t kj = 0; kj < d.kw; ++kj) {
        const double* row = cols + ((c * d.kh + ki) * d.kw + kj) * pitch + col0;
        for (std::int64_t oy = 0; oy < d.out_h; ++oy) {
          const std::int64_t iy = oy * d.stride + ki - d.pad;
          if (iy < 0 || iy >= d.in_h) continue;
          double* dst = plane + iy * d.in_w;
          const double* src = row + oy * d.out_w;
          if (d.stride == 1) {
            const std::int64_t off = kj - d.pad;
            const std::int64_t x0 = std::max<std::int64_t>(0, -off);
            const std::int64_t x1 = std::min(d.out_w, d.in_w - off);
            for (std::int64_t ox = x0; ox < x1; ++ox) dst[ox + off] += src[ox];
          } else {
            for (std::int64_t ox = 0; ox < d.out_w; ++ox) {
              const std::int64_t ix = ox * d.stride + kj - d.pad;
              if (ix >= 0 && ix < d.in_w) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::int64_t stride, std::int64_t padding) {
  if (input.rank() != 4 || kernels.rank() != 4) {
    throw ShapeError("conv2d: input and kernels must be rank 4, got " +
                     shape_str(input.shape()) + " and " + shape_str(kernels.shape()));
  }
  if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
  if (padding < 0) throw ValueError("conv2d: padding must be >= 0");
  ConvDims d;
  d.batch = input.dim(0);
  d.in_ch = input.dim(1);
  d.in_h = input.dim(2);
  d.in_w = input.dim(3);
  d.filters = kernels.dim(0);
  d.kh = kernels.dim(2);
  d.kw = kernels.dim(3);
  d.stride = stride;
  d.pad = padding;
  if (kernels.dim(1) != d.in_ch) {
    throw ShapeError("conv2d: kernel channel count " + std::to_string(kernels.dim(1)) +
                     " does not match input channels " + std::to_string(d.in_ch));
  }
  if (bias.rank() != 1 || bias.dim(0) != d.filters) {
    throw ShapeError("conv2d: bias must have one entry per filter");
  }
  if (d.in_h + 2 * d.pad < d.kh || d.in_w + 2 * d.pad < d.kw) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  d.out_h = (d.in_h + 2 * d.pad - d.kh) / d.stride + 1;
  d.out_w = (d.in_w + 2 * d.pad - d.kw) / d.stride + 1;

  const std::int64_t ohw = d.out_hw(), patch = d.patch();
  const std::int64_t in_stride = d.in_ch * d.in_h * d.in_w;
  const std::int64_t block = conv_block_size(d);
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(d.batch * d.filters * ohw));
  std::vector<double> cols = detail::take_buffer(static_cast<std::size_t>(patch * block * ohw));
  std::vector<double> out_blk =
      detail::take_buffer(block > 1 ? static_cast<std::size_t>(d.filters * block * ohw) : 0);
  MapC wmat(kernels.data().data(), d.filters, patch);
  for (std::int64_t n0 = 0; n0 < d.batch; n0 += block) {
    const std::int64_t blk = std::min(block, d.batch - n0);
    const std::int64_t pitch = blk * ohw;
    for (std::int64_t i = 0; i < blk; ++i) {
      im2col(input.data().data() + (n0 + i) * in_stride, d, cols.data(), pitch, i * ohw);
    }
    MapC cmat(cols.data(), patch, pitch);
    if (blk == 1) {
      MapM omat(out.data() + n0 * d.filters * ohw, d.filters, pitch);
      omat.noalias() = wmat * cmat;
    } else {
      MapM omat(out_blk.data(), d.filters, pitch);
      omat.noalias() = wmat * cmat;
      for (std::int64_t i = 0; i < blk; ++i) {
        for (std::int64_t f = 0; f < d.filters; ++f) {
          std::memcpy(out.data() + ((n0 + i) * d.filters + f) * ohw,
                      out_blk.data() + f * pitch + i * ohw, sizeof(double) * ohw);
        }
      }
    }
  }
  {
    const auto bv = bias.data();
    for (std::int64_t n = 0; n < d.batch; ++n) {
      for (std::int64_t f = 0; f < d.filters; ++f) {
        double* row = out.data() + (n * d.filters + f) * ohw;
        const double b = bv[f];
        for (std::int64_t i = 0; i < ohw; ++i) row[i] += b;
      }
    }
  }

  const bool tracked =
      tape.recording() && (input.requires_grad() || kernels.requires_grad() || bias.requires_grad());
  Tensor r = result({d.batch, d.filters, d.out_h, d.out_w}, std::move(out), tracked);
  if (tracked) {
    auto xi = input.handle(), ki = kernels.handle(), bi = bias.handle(), oi = r.handle();
    tape.record([xi, ki, bi, oi, d] {
      const std::int64_t ohw = d.out_hw(), patch = d.patch();
      const std::int64_t in_stride = d.in_ch * d.in_h * d.in_w;
      const std::int64_t block = conv_block_size(d);
      std::vector<double> cols = detail::take_buffer(static_cast<std::size_t>(patch * block * ohw));
      std::vector<double> gout_blk = detail::take_buffer(
          block > 1 ? static_cast<std::size_t>(d.filters * block * ohw) : 0);
      const bool need_x = xi->requires_grad, need_k = ki->requires_grad, need_b = bi->requires_grad;
      if (need_x) xi->ensure_grad();
      if (need_k) ki->ensure_grad();
      if (need_b) bi->ensure_grad();
      for (std::int64_t n0 = 0; n0 < d.batch; n0 += block) {
        const std::int64_t blk = std::min(block, d.batch - n0);
        const std::int64_t pitch = blk * ohw;
        const double* gsrc = oi->grad.data() + n0 * d.filters * ohw;
        if (blk > 1) {
          for (std::int64_t i = 0; i < blk; ++i) {
            for (std::int64_t f = 0; f < d.filters; ++f) {
              std::memcpy(gout_blk.data() + f * pitch + i * ohw,
                          gsrc + (i * d.filters + f) * ohw, sizeof(double) * ohw);
            }
          }
        }
        MapC gout(blk > 1 ? gout_blk.data() : gsrc, d.filters, pitch);
        if (need_k) {
          for (std::int64_t i = 0; i < blk; ++i) {
            im2col(xi->data.data() + (n0 + i) * in_stride, d, cols.data(), pitch, i * ohw);
          }
          MapC cmat(cols.data(), patch, pitch);
          MapM gw(ki->grad.data(), d.filters, patch);
          gw.noalias() += gout * cmat.transpose();
        }
        if (need_x) {
          MapC wmat(ki->data.data(), d.filters, patch);
          MapM gcols(cols.data(), patch, pitch);  // reuses the buffer dW consumed
          gcols.noalias() = wmat.transpose() * gout;
          for (std::int64_t i = 0; i < blk; ++i) {
            col2im_add(cols.data(), d, xi->grad.data() + (n0 + i) * in_stride, pitch, i * ohw);
          }
        }
      }
      if (need_b) {
        for (std::int64_t n = 0; n < d.batch; ++n) {
          for (std::int64_t f = 0; f < d.filters; ++f) {
            const double* row = oi->grad.data() + (n * d.filters + f) * ohw;
            double s = 0.0;
            for (std::int64_t i = 0; i < ohw; ++i) s += row[i];
            bi->grad[f] += s;
          }
        }
      }
    });
  }
  return r;
}

Tensor maxpool2d(Tape& tape, const Tensor& input) {
  if (input.rank() != 4) {
    throw ShapeError("maxpool2d: input must be rank 4, got " + shape_str(input.shape()));
  }
  const std::int64_t nb = input.dim(0), ch = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2d: spatial extents must be even, got " + shape_str(input.shape()));
  }
  const std::int64_t oh = h / 2, ow = w / 2;
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(nb * ch * oh * ow));
  std::vector<std::int32_t> argmax(out.size());
  const double* in = input.data().data();
  const double tie_tol = tape.kink_tolerance();
  std::size_t ties = 0;
  for (std::int64_t p = 0; p < nb * ch; ++p) {
    const double* plane = in + p * h * w;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        const std::int64_t base = (2 * oy) * w + 2 * ox;
        // first row-major occurrence wins ties
        double best = plane[base];
        std::int64_t best_at = base;
        const std::int64_t cand[3] = {base + 1, base + w, base + w + 1};
        for (std::int64_t c : cand) {
          if (plane[c] > best) {
            if (plane[c] - best <= tie_tol) ++ties;
            best = plane[c];
            best_at = c;
          } else if (best - plane[c] <= tie_tol) {
            ++ties;
          }
        }
        const std::int64_t o = (p * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = static_cast<std::int32_t>(p * h * w + best_at);
      }
    }
  }
  if (ties) tape.note_nonsmooth(ties);
  const bool tracked = track(tape, input);
  Tensor r = result({nb, ch, oh, ow}, std::move(out), tracked);
  if (tracked) {
    auto xi = input.handle(), oi = r.handle();
    auto amax = std::make_shared<std::vector<std::int32_t>>(std::move(argmax));
    tape.record([xi, oi, amax] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) xi->grad[(*amax)[i]] += g[i];
    });
  }
  return r;
}

Tensor leaky_relu(Tape& tape, const Tensor& a, double slope) {
  if (slope < 0.0 || slope >= 1.0) throw ValueError("leaky_relu: slope must be in [0,1)");
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(a.size()));
  const auto av = a.data();
  const double kink_tol = tape.kink_tolerance();
  std::size_t kinks = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double v = av[i];
    if (std::abs(v) <= kink_tol) ++kinks;
    out[i] = v >= 0.0 ? v : slope * v;
  }
  if (kinks) tape.note_nonsmooth(kinks);
  const bool tracked = track(tape, a);
  Tensor r = result(a.shape(), std::move(out), tracked);
  if (tracked) {
    auto ai = a.handle(), oi = r.handle();
    tape.record([ai, oi, slope] {
      if (!ai->requires_grad) return;
      ai->ensure_grad();
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ai->grad[i] += g[i] * (ai->data[i] >= 0.0 ? 1.0 : slope);  // derivative 1 at 0
      }
    });
  }
  return r;
}

Tensor dropout(Tape& tape, const Tensor& a, double drop_prob, DropoutMode mode, RngStream& rng) {
  if (drop_prob < 0.0 || drop_prob >= 1.0) {
    throw ValueError("dropout: drop_prob must be in [0,1), got " + std::to_string(drop_prob));
  }
  if (mode == DropoutMode::kEval) return a;  // identity, bitwise

  const double keep_scale = 1.0 / (1.0 - drop_prob);
  std::vector<double> mask = detail::take_buffer(static_cast<std::size_t>(a.size()));
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(a.size()));
  const auto av = a.data();
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const bool keep = rng.uniform() >= drop_prob;
    mask[i] = keep ? keep_scale : 0.0;
    out[i] = av[i] * mask[i];
  }
  const bool tracked = track(tape, a);
  Tensor r = result(a.shape(), std::move(out), tracked);
  if (tracked) {
    auto ai = a.handle(), oi = r.handle();
    auto m = std::make_shared<std::vector<double>>(std::move(mask));
    tape.record([ai, oi, m] {
      if (!ai->requires_grad) return;
      ai->ensure_grad();
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) ai->grad[i] += g[i] * (*m)[i];
    });
  }
  return r;
}

namespace {

struct ReducePlan {
  Shape out_shape;
  std::vector<std::int64_t> out_index_stride;  // per input axis; 0 if reduced
  std::int64_t count = 1;                      // elements folded per output cell
};

ReducePlan plan_reduce(const Shape& in, std::span<const int> axes) {
  const int rank = static_cast<int>(in.size());
  std::vector<bool> reduced(in.size(), false);
  for (int ax : axes) {
    if (ax < 0 || ax >= rank) {
      throw ShapeError("reduce: axis " + std::to_string(ax) + " invalid for rank " +
                       std::to_string(rank));
    }
    reduced[ax] = true;
  }
  ReducePlan p;
  for (int i = 0; i < rank; ++i) {
    if (reduced[i]) {
      p.count *= in[i];
    } else {
      p.out_shape.push_back(in[i]);
    }
  }
  // strides of surviving axes in the output layout
  p.out_index_stride.assign(in.size(), 0);
  std::int64_t stride = 1;
  for (int i = rank - 1; i >= 0; --i) {
    if (!reduced[i]) {
      p.out_index_stride[i] = stride;
      stride *= in[i];
    }
  }
  return p;
}

Tensor reduce_impl(Tape& tape, const Tensor& a, std::span<const int> axes, bool mean) {
  ReducePlan p = plan_reduce(a.shape(), axes);
  const std::int64_t out_n = shape_size(p.out_shape);
  std::vector<double> out(static_cast<std::size_t>(out_n), 0.0);
  const auto av = a.data();
  const Shape& in_shape = a.shape();
  const int rank = static_cast<int>(in_shape.size());

  std::vector<std::int64_t> idx(in_shape.size(), 0);
  std::int64_t out_i = 0;
  for (std::int64_t lin = 0; lin < a.size(); ++lin) {
    out[out_i] += av[lin];
    for (int ax = rank - 1; ax >= 0; --ax) {
      out_i += p.out_index_stride[ax];
      if (++idx[ax] < in_shape[ax]) break;
      idx[ax] = 0;
      out_i -= p.out_index_stride[ax] * in_shape[ax];
    }
  }
  const double inv = mean ? 1.0 / static_cast<double>(p.count) : 1.0;
  if (mean) {
    for (double& v : out) v *= inv;
  }

  const bool tracked = track(tape, a);
  Tensor r = result(p.out_shape, std::move(out), tracked);
  if (tracked) {
    auto ai = a.handle(), oi = r.handle();
    tape.record([ai, oi, p, in_shape, rank, inv] {
      if (!ai->requires_grad) return;
      ai->ensure_grad();
      std::vector<std::int64_t> idx(in_shape.size(), 0);
      std::int64_t out_i = 0;
      const std::int64_t n = static_cast<std::int64_t>(ai->data.size());
      for (std::int64_t lin = 0; lin < n; ++lin) {
        ai->grad[lin] += oi->grad[out_i] * inv;
        for (int ax = rank - 1; ax >= 0; --ax) {
          out_i += p.out_index_stride[ax];
          if (++idx[ax] < in_shape[ax]) break;
          idx[ax] = 0;
          out_i -= p.out_index_stride[ax] * in_shape[ax];
        }
      }
    });
  }
  return r;
}

std::vector<int> all_axes(const Tensor& a) {
  std::vector<int> axes(a.rank());
  for (int i = 0; i < a.rank(); ++i) axes[i] = i;
  return axes;
}

}  // namespace

Tensor reduce_sum(Tape& tape, const Tensor& a, std::span<const int> axes) {
  return reduce_impl(tape, a, axes, false);
}

Tensor reduce_mean(Tape& tape, const Tensor& a, std::span<const int> axes) {
  return reduce_impl(tape, a, axes, true);
}

Tensor reduce_sum(Tape& tape, const Tensor& a) {
  auto axes = all_axes(a);
  return reduce_impl(tape, a, axes, false);
}

Tensor reduce_mean(Tape& tape, const Tensor& a) {
  auto axes = all_axes(a);
  return reduce_impl(tape, a, axes, true);
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  const bool tracked = track(tape, a);
  std::vector<double> out = detail::take_buffer(static_cast<std::size_t>(a.size()));
  std::memcpy(out.data(), a.data().data(), out.size() * sizeof(double));
  Tensor r = result(std::move(shape), std::move(out), tracked);
  if (tracked) {
    auto ai = a.handle(), oi = r.handle();
    tape.record([ai, oi] {
      if (ai->requires_grad) acc(*ai, oi->grad);
    });
  }
  return r;
}

}  // namespace hccr
