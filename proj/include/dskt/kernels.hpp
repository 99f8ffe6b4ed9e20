#pragma once

#include "dskt/tensor.hpp"

namespace dskt {
namespace kernels {

// Cross-correlation with zero padding (k-1)/2, so stride 1 preserves the
// spatial extent. Output positions sample input at y*stride, x*stride.
// in: [Cin,H,W], k: [Cout,Cin,kh,kw] with odd kh == kw.
Tensor conv2d(const Tensor& in, const Tensor& k, int stride = 1);
// Naive reference implementation kept for testing and benchmarking.
Tensor conv2d_serial(const Tensor& in, const Tensor& k, int stride = 1);

// Gradients of conv2d w.r.t. its input and kernel.
Tensor conv2d_grad_input(const Tensor& gout, const Tensor& k, int H, int W, int stride = 1);
Tensor conv2d_grad_kernel(const Tensor& gout, const Tensor& in, int kh, int kw, int stride = 1);
Tensor conv2d_grad_input_serial(const Tensor& gout, const Tensor& k, int H, int W, int stride = 1);
Tensor conv2d_grad_kernel_serial(const Tensor& gout, const Tensor& in, int kh, int kw,
                                 int stride = 1);

// Samples every plane at (x+dx, y+dy) with bilinear weights; reads outside
// the frame are zero. The adjoint accumulates the transpose map.
Tensor shift_bilinear(const Tensor& in, double dy, double dx);
Tensor shift_bilinear_adjoint(const Tensor& gout, double dy, double dx);

// Keeps every second row/column, phase 0.
Tensor downsample2(const Tensor& in);
Tensor downsample2_adjoint(const Tensor& gout, int H, int W);

}  // namespace kernels
}  // namespace dskt
