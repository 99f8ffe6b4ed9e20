#include "dskt/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "dskt/runtime.hpp"

namespace dskt {
namespace kernels {

namespace {

void check_conv_args(const Tensor& in, const Tensor& k, int stride) {
  if (in.ndim() != 3) throw ShapeError("conv2d: input must be [Cin,H,W]");
  if (k.ndim() != 4) throw ShapeError("conv2d: kernel must be [Cout,Cin,kh,kw]");
  if (k.dim(1) != in.dim(0))
    throw ShapeError("conv2d: kernel expects " + std::to_string(k.dim(1)) +
                     " input channels, got " + std::to_string(in.dim(0)));
  if (k.dim(2) % 2 == 0 || k.dim(3) % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
}

inline int out_extent(int n, int stride) { return (n + stride - 1) / stride; }

}  // namespace

Tensor conv2d(const Tensor& in, const Tensor& k, int stride) {
  check_conv_args(in, k, stride);
  const int Cin = in.dim(0), H = in.dim(1), W = in.dim(2);
  const int Cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const int Ho = out_extent(H, stride), Wo = out_extent(W, stride);
  Tensor out({Cout, Ho, Wo});

#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int co = 0; co < Cout; ++co) {
    double* op = out.plane(co);
    for (int oy = 0; oy < Ho; ++oy) {
      double* orow = op + static_cast<std::size_t>(oy) * Wo;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride + ky - ph;
        if (iy < 0 || iy >= H) continue;
        for (int ci = 0; ci < Cin; ++ci) {
          const double* irow = in.plane(ci) + static_cast<std::size_t>(iy) * W;
          const double* krow = k.data.data() +
                               ((static_cast<std::size_t>(co) * Cin + ci) * kh + ky) * kw;
          for (int kx = 0; kx < kw; ++kx) {
            const double wv = krow[kx];
            if (wv == 0.0) continue;
            const int off = kx - pw;
            int ox0 = 0, ox1 = Wo;
            // valid range of ox so that ox*stride+off lands in [0,W)
            while (ox0 < Wo && ox0 * stride + off < 0) ++ox0;
            while (ox1 > ox0 && (ox1 - 1) * stride + off >= W) --ox1;
            const double* ip = irow + off;
            if (stride == 1) {
              for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * ip[ox];
            } else {
              for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * ip[ox * stride];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor conv2d_serial(const Tensor& in, const Tensor& k, int stride) {
  check_conv_args(in, k, stride);
  const int Cin = in.dim(0), H = in.dim(1), W = in.dim(2);
  const int Cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const int Ho = out_extent(H, stride), Wo = out_extent(W, stride);
  Tensor out({Cout, Ho, Wo});
  for (int co = 0; co < Cout; ++co)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        double acc = 0.0;
        for (int ky = 0; ky < kh; ++ky)
          for (int ci = 0; ci < Cin; ++ci)
            for (int kx = 0; kx < kw; ++kx) {
              const int iy = oy * stride + ky - ph;
              const int ix = ox * stride + kx - pw;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += in.at3(ci, iy, ix) *
                     k.data[((static_cast<std::size_t>(co) * Cin + ci) * kh + ky) * kw + kx];
            }
        out.at3(co, oy, ox) = acc;
      }
  return out;
}

Tensor conv2d_grad_input(const Tensor& gout, const Tensor& k, int H, int W, int stride) {
  const int Cout = k.dim(0), Cin = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const int Ho = gout.dim(1), Wo = gout.dim(2);
  Tensor gin({Cin, H, W});

#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int ci = 0; ci < Cin; ++ci) {
    double* gp = gin.plane(ci);
    for (int iy = 0; iy < H; ++iy) {
      for (int ix = 0; ix < W; ++ix) {
        double acc = 0.0;
        for (int ky = 0; ky < kh; ++ky) {
          const int num_y = iy - ky + ph;
          if (num_y % stride != 0) continue;
          const int oy = num_y / stride;
          if (oy < 0 || oy >= Ho) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int num_x = ix - kx + pw;
            if (num_x % stride != 0) continue;
            const int ox = num_x / stride;
            if (ox < 0 || ox >= Wo) continue;
            for (int co = 0; co < Cout; ++co)
              acc += gout.at3(co, oy, ox) *
                     k.data[((static_cast<std::size_t>(co) * Cin + ci) * kh + ky) * kw + kx];
          }
        }
        gp[static_cast<std::size_t>(iy) * W + ix] = acc;
      }
    }
  }
  return gin;
}

Tensor conv2d_grad_kernel(const Tensor& gout, const Tensor& in, int kh, int kw, int stride) {
  const int Cin = in.dim(0), H = in.dim(1), W = in.dim(2);
  const int Cout = gout.dim(0), Ho = gout.dim(1), Wo = gout.dim(2);
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  Tensor gk({Cout, Cin, kh, kw});

#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int co = 0; co < Cout; ++co) {
    for (int ci = 0; ci < Cin; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          double acc = 0.0;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride + ky - ph;
            if (iy < 0 || iy >= H) continue;
            const double* grow = gout.plane(co) + static_cast<std::size_t>(oy) * Wo;
            const double* irow = in.plane(ci) + static_cast<std::size_t>(iy) * W;
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * stride + kx - pw;
              if (ix < 0 || ix >= W) continue;
              acc += grow[ox] * irow[ix];
            }
          }
          gk.data[((static_cast<std::size_t>(co) * Cin + ci) * kh + ky) * kw + kx] = acc;
        }
  }
  return gk;
}

Tensor conv2d_grad_input_serial(const Tensor& gout, const Tensor& k, int H, int W, int stride) {
  const int Cout = k.dim(0), Cin = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  Tensor gin({Cin, H, W});
  for (int co = 0; co < Cout; ++co)
    for (int oy = 0; oy < gout.dim(1); ++oy)
      for (int ox = 0; ox < gout.dim(2); ++ox) {
        const double g = gout.at3(co, oy, ox);
        for (int ci = 0; ci < Cin; ++ci)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int iy = oy * stride + ky - ph;
              const int ix = ox * stride + kx - pw;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              gin.at3(ci, iy, ix) +=
                  g * k.data[((static_cast<std::size_t>(co) * Cin + ci) * kh + ky) * kw + kx];
            }
      }
  return gin;
}

Tensor conv2d_grad_kernel_serial(const Tensor& gout, const Tensor& in, int kh, int kw,
                                 int stride) {
  const int Cin = in.dim(0), H = in.dim(1), W = in.dim(2);
  const int Cout = gout.dim(0);
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  Tensor gk({Cout, Cin, kh, kw});
  for (int co = 0; co < Cout; ++co)
    for (int oy = 0; oy < gout.dim(1); ++oy)
      for (int ox = 0; ox < gout.dim(2); ++ox) {
        const double g = gout.at3(co, oy, ox);
        for (int ci = 0; ci < Cin; ++ci)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int iy = oy * stride + ky - ph;
              const int ix = ox * stride + kx - pw;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              gk.data[((static_cast<std::size_t>(co) * Cin + ci) * kh + ky) * kw + kx] +=
                  g * in.at3(ci, iy, ix);
            }
      }
  return gk;
}

namespace {

// Four-tap plan for sampling a plane at +(dy,dx).
struct ShiftPlan {
  int y0, x0;          // integer base offset
  double w[4];         // weights for (y0,x0),(y0,x0+1),(y0+1,x0),(y0+1,x0+1)
};

ShiftPlan make_plan(double dy, double dx) {
  ShiftPlan p;
  p.y0 = static_cast<int>(std::floor(dy));
  p.x0 = static_cast<int>(std::floor(dx));
  const double fy = dy - p.y0, fx = dx - p.x0;
  p.w[0] = (1 - fy) * (1 - fx);
  p.w[1] = (1 - fy) * fx;
  p.w[2] = fy * (1 - fx);
  p.w[3] = fy * fx;
  return p;
}

}  // namespace

Tensor shift_bilinear(const Tensor& in, double dy, double dx) {
  const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const ShiftPlan p = make_plan(dy, dx);
  Tensor out({C, H, W});
  const int oy[4] = {p.y0, p.y0, p.y0 + 1, p.y0 + 1};
  const int ox[4] = {p.x0, p.x0 + 1, p.x0, p.x0 + 1};

#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int c = 0; c < C; ++c) {
    const double* ip = in.plane(c);
    double* op = out.plane(c);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int t = 0; t < 4; ++t) {
          if (p.w[t] == 0.0) continue;
          const int sy = y + oy[t], sx = x + ox[t];
          if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
          acc += p.w[t] * ip[static_cast<std::size_t>(sy) * W + sx];
        }
        op[static_cast<std::size_t>(y) * W + x] = acc;
      }
  }
  return out;
}

Tensor shift_bilinear_adjoint(const Tensor& gout, double dy, double dx) {
  // Transpose of the forward gather: gin[i] = sum_t w_t * gout[i - e_t].
  const int C = gout.dim(0), H = gout.dim(1), W = gout.dim(2);
  const ShiftPlan p = make_plan(dy, dx);
  Tensor gin({C, H, W});
  const int oy[4] = {p.y0, p.y0, p.y0 + 1, p.y0 + 1};
  const int ox[4] = {p.x0, p.x0 + 1, p.x0, p.x0 + 1};

#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int c = 0; c < C; ++c) {
    const double* gp = gout.plane(c);
    double* ip = gin.plane(c);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int t = 0; t < 4; ++t) {
          if (p.w[t] == 0.0) continue;
          const int sy = y - oy[t], sx = x - ox[t];
          if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
          acc += p.w[t] * gp[static_cast<std::size_t>(sy) * W + sx];
        }
        ip[static_cast<std::size_t>(y) * W + x] = acc;
      }
  }
  return gin;
}

Tensor downsample2(const Tensor& in) {
  const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  Tensor out({C, Ho, Wo});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < Ho; ++y)
      for (int x = 0; x < Wo; ++x) out.at3(c, y, x) = in.at3(c, 2 * y, 2 * x);
  return out;
}

Tensor downsample2_adjoint(const Tensor& gout, int H, int W) {
  const int C = gout.dim(0);
  Tensor gin({C, H, W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < gout.dim(1); ++y)
      for (int x = 0; x < gout.dim(2); ++x) gin.at3(c, 2 * y, 2 * x) = gout.at3(c, y, x);
  return gin;
}

}  // namespace kernels
}  // namespace dskt
