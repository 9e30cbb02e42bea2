#include <limits>
#include <string>

#include "protonet/error.hpp"
#include "protonet/ops.hpp"

namespace protonet {

using detail::make_result;
using detail::Node;

namespace {

struct ImageBatch {
  std::size_t n, c, h, w;
  bool batched;
};

ImageBatch image_layout(const Tensor& t, const char* what) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
  throw DimensionError(std::string(what) + ": expected [C x H x W] or [N x C x H x W], got " +
                       shape_str(t.shape()));
}

// col[(c*9 + ky*3 + kx) * hw + y*w + x] = img[c][y+ky-1][x+kx-1] (zero outside)
void im2col(const double* img, std::size_t c, std::size_t h, std::size_t w, double* col) {
  const std::size_t hw = h * w;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* dst = col + (ch * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x + kx) - 1;
            const bool inside = sy >= 0 && sy < static_cast<long>(h) && sx >= 0 && sx < static_cast<long>(w);
            dst[y * w + x] = inside ? img[(ch * h + sy) * w + sx] : 0.0;
          }
        }
      }
}

void col2im_add(const double* col, std::size_t c, std::size_t h, std::size_t w, double* img) {
  const std::size_t hw = h * w;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* src = col + (ch * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x + kx) - 1;
            if (sx < 0 || sx >= static_cast<long>(w)) continue;
            img[(ch * h + sy) * w + sx] += src[y * w + x];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels) {
  const auto l = image_layout(input, "conv2d");
  if (kernels.rank() != 4 || kernels.dim(2) != 3 || kernels.dim(3) != 3) {
    throw DimensionError("conv2d: kernels must be [C_out x C_in x 3 x 3], got " + shape_str(kernels.shape()));
  }
  if (kernels.dim(1) != l.c) {
    throw DimensionError("conv2d: kernels expect " + std::to_string(kernels.dim(1)) + " input channels, input has " +
                         std::to_string(l.c));
  }
  const std::size_t out_c = kernels.dim(0), rows = l.c * 9, hw = l.h * l.w;
  const auto xv = input.data();
  const auto kv = kernels.data();
  std::vector<double> out(l.n * out_c * hw, 0.0);
  std::vector<double> col(rows * hw);
  for (std::size_t b = 0; b < l.n; ++b) {
    im2col(&xv[b * l.c * hw], l.c, l.h, l.w, col.data());
    double* o = &out[b * out_c * hw];
    for (std::size_t oc = 0; oc < out_c; ++oc) {
      double* orow = o + oc * hw;
      for (std::size_t r = 0; r < rows; ++r) {
        const double kw = kv[oc * rows + r];
        const double* crow = &col[r * hw];
        for (std::size_t p = 0; p < hw; ++p) orow[p] += kw * crow[p];
      }
    }
  }
  Shape shape = l.batched ? Shape{l.n, out_c, l.h, l.w} : Shape{out_c, l.h, l.w};
  return make_result(
      std::move(shape), std::move(out), {input, kernels},
      [l, out_c, rows, hw](Node& self) {
        const auto& x = self.parents[0]->data;
        const auto& k = self.parents[1]->data;
        Node* px = self.parents[0]->needs_grad ? self.parents[0].get() : nullptr;
        Node* pk = self.parents[1]->needs_grad ? self.parents[1].get() : nullptr;
        std::vector<double> col(rows * hw), dcol(rows * hw);
        for (std::size_t b = 0; b < l.n; ++b) {
          const double* g = &self.grad[b * out_c * hw];
          if (pk) {
            auto& gk = pk->grad_buffer();
            im2col(&x[b * l.c * hw], l.c, l.h, l.w, col.data());
            for (std::size_t oc = 0; oc < out_c; ++oc) {
              const double* grow = g + oc * hw;
              for (std::size_t r = 0; r < rows; ++r) {
                const double* crow = &col[r * hw];
                double acc = 0.0;
                for (std::size_t p = 0; p < hw; ++p) acc += grow[p] * crow[p];
                gk[oc * rows + r] += acc;
              }
            }
          }
          if (px) {
            std::fill(dcol.begin(), dcol.end(), 0.0);
            for (std::size_t oc = 0; oc < out_c; ++oc) {
              const double* grow = g + oc * hw;
              for (std::size_t r = 0; r < rows; ++r) {
                const double kw = k[oc * rows + r];
                double* drow = &dcol[r * hw];
                for (std::size_t p = 0; p < hw; ++p) drow[p] += kw * grow[p];
              }
            }
            col2im_add(dcol.data(), l.c, l.h, l.w, &px->grad_buffer()[b * l.c * hw]);
          }
        }
      },
      "conv2d");
}

std::size_t pooled_extent(std::size_t n) { return n == 1 ? 1 : n / 2; }

Tensor maxpool2d(const Tensor& input) {
  const auto l = image_layout(input, "maxpool2d");
  if (l.h == 0 || l.w == 0) throw DimensionError("maxpool2d: empty spatial extent");
  const std::size_t oh = pooled_extent(l.h), ow = pooled_extent(l.w);
  const auto xv = input.data();
  const std::size_t planes = l.n * l.c;
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* plane = &xv[p * l.h * l.w];
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t y = 2 * oy + dy, x = 2 * ox + dx;
            if (y >= l.h || x >= l.w) continue;
            const std::size_t i = y * l.w + x;
            if (plane[i] > best) {
              best = plane[i];
              best_i = i;
            }
          }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = p * l.h * l.w + best_i;
      }
  }
  Shape shape = l.batched ? Shape{l.n, l.c, oh, ow} : Shape{l.c, oh, ow};
  return make_result(
      std::move(shape), std::move(out), {input},
      [argmax = std::move(argmax)](Node& self) {
        if (!self.parents[0]->needs_grad) return;
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
      },
      "maxpool2d");
}

}  // namespace protonet
